//! Verification suites driven by `verify`. Each suite reports whether it
//! passed and its worst residual against the suite's tolerance.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use reentrant_sched::asymptotics::{breakdown, clearance_time, clearance_time_series, large_eps_prediction};
use reentrant_sched::kernel::{cost_via_kernel, default_tau_grid, kernel_K, lemma1_check_with};
use reentrant_sched::dynamics::propagate_law;
use reentrant_sched::model::total_class_work;
use reentrant_sched::optimal::{pontryagin_certificate, solve_optimal, SolveConfig};
use reentrant_sched::{fixed_priority, simulate, switch_at_time, Class, Params, Policy, State};

use crate::commands::DEFAULT_START_GRID;
use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the suite's checked quantity.
    pub worst: f64,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, passed: bool, worst: f64, detail: impl Into<String>) -> Self {
        SuiteResult {
            name,
            passed,
            worst,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub results: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let verdict = if r.passed { "PASS" } else { "FAIL" };
            writeln!(out, "{verdict} {:<28} worst={:.6e}  {}", r.name, r.worst, r.detail).unwrap();
        }
        writeln!(out, "{}", if self.passed() { "PASS" } else { "FAIL" }).unwrap();
        out
    }
}

/// `0 < r1 < r2 < 0.95`, `gamma_i` in `[0.1, 5]`, `mu` in `[0.5, 3]`.
pub fn random_params(rng: &mut impl Rng) -> Params {
    let r1 = rng.gen_range(0.05..0.9);
    let r2 = r1 + rng.gen_range(0.02..0.98) * (0.95 - r1);
    let g1 = rng.gen_range(0.1..5.0);
    let g2 = rng.gen_range(0.1..5.0);
    let mu = rng.gen_range(0.5..3.0);
    Params::new(r1, r2, g1, g2, mu).expect("sampled parameters satisfy the constraints")
}

/// Rejection sampling of [`random_params`].
pub fn random_params_where(rng: &mut impl Rng, accept: impl Fn(&Params) -> bool) -> Params {
    loop {
        let p = random_params(rng);
        if accept(&p) {
            return p;
        }
    }
}

fn kappa_ordered(p: &Params) -> bool {
    p.kappa(Class::One) <= p.kappa(Class::Two)
}

/// `kappa1 > 1.2 kappa2`, so the leading small-load difference is resolvable.
fn kappa_reversed(p: &Params) -> bool {
    p.kappa(Class::One) > 1.2 * p.kappa(Class::Two)
}

pub fn random_state(rng: &mut impl Rng, max: f64) -> State {
    loop {
        let s = State::new(
            rng.gen_range(0.0..max),
            rng.gen_range(0.0..max),
            rng.gen_range(0.0..max),
            rng.gen_range(0.0..max),
        )
        .expect("sampled components are nonnegative");
        if !s.is_zero() {
            return s;
        }
    }
}

/// Fixed priority of either class, or a single switch at a random time.
pub fn random_policy(rng: &mut impl Rng, horizon: f64) -> Policy {
    let class = if rng.gen_bool(0.5) { Class::One } else { Class::Two };
    match rng.gen_range(0..3) {
        0 => fixed_priority(Class::One),
        1 => fixed_priority(Class::Two),
        _ => switch_at_time(class, rng.gen_range(0.0..horizon)),
    }
}

/// Parameter sets of the closed-form grid: the reference set plus four
/// spread over both orderings of the effective return rates.
pub fn oracle_params() -> Vec<Params> {
    [
        (0.2, 0.8, 2.0, 0.2, 2.0),
        (0.3, 0.6, 1.0, 3.0, 1.0),
        (0.1, 0.9, 5.0, 0.05, 1.5),
        (0.5, 0.7, 0.4, 0.4, 0.8),
        (0.05, 0.5, 0.8, 2.5, 3.0),
    ]
    .iter()
    .map(|&(r1, r2, g1, g2, mu)| Params::new(r1, r2, g1, g2, mu).unwrap())
    .collect()
}

/// Seven loads spaced evenly in log scale over `[1e-3, 1e2]`.
pub fn oracle_loads() -> Vec<f64> {
    (0..7).map(|k| 10f64.powf(-3.0 + 5.0 * k as f64 / 6.0)).collect()
}

pub const LEMMA1_INSTANCES: usize = 1000;
pub const LEMMA1_GRID_POINTS: usize = 10_000;

/// Sign and ordering of the cumulative kernels over random parameters, with
/// the kernel supplied by the caller (so a corrupted one can be checked to fail).
pub fn lemma1_suite(seed: u64, kernel: impl Fn(&Params, Class, f64) -> f64 + Sync) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<Params> = (0..LEMMA1_INSTANCES).map(|_| random_params(&mut rng)).collect();
    let reports: Vec<_> = params
        .par_iter()
        .map(|p| lemma1_check_with(p, &default_tau_grid(p, LEMMA1_GRID_POINTS), &kernel))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    let mut ordered = 0;
    for rep in &reports {
        worst = worst.max(rep.worst_sign);
        if let Some(ok) = rep.dominance_holds {
            ordered += 1;
            worst = worst.max(rep.worst_dominance);
            failures += usize::from(!ok);
        }
        failures += usize::from(!rep.all_nonpositive);
    }
    SuiteResult::new(
        "lemma1",
        failures == 0,
        worst,
        format!("{LEMMA1_INSTANCES} params ({ordered} with kappa1 <= kappa2), {failures} failures"),
    )
}

pub fn default_kernel(p: &Params, c: Class, tau: f64) -> f64 {
    kernel_K(p, c, tau).expect("tau grid is nonnegative")
}

/// Closed-form kernel cost against the directly simulated cost.
pub fn kernel_decomposition_suite(seed: u64, instances: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b65_726e);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for _ in 0..instances {
        let p = random_params(&mut rng);
        let s0 = random_state(&mut rng, 5.0);
        let horizon = rng.gen_range(0.5..30.0);
        let policy = random_policy(&mut rng, horizon);
        match simulate(&policy, &s0, &p, horizon).and_then(|t| {
            cost_via_kernel(&t, &s0, &p, horizon).map(|d| (d.total - t.accumulated_cost).abs() / t.accumulated_cost)
        }) {
            Ok(rel) => worst = worst.max(rel),
            Err(_) => errors += 1,
        }
    }
    SuiteResult::new(
        "kernel_decomposition",
        errors == 0 && worst <= 1e-8,
        worst,
        format!("{instances} instances, relative tolerance 1e-8"),
    )
}

/// Drop of `q_p + q_r` per class against `(1 - r) mu int u`, over random trajectories.
pub fn work_drain_suite(seed: u64, instances: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6472_6169);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for _ in 0..instances {
        let p = random_params(&mut rng);
        let s0 = random_state(&mut rng, 5.0);
        let horizon = rng.gen_range(0.5..30.0);
        let policy = random_policy(&mut rng, horizon);
        let Ok(traj) = simulate(&policy, &s0, &p, horizon) else {
            errors += 1;
            continue;
        };
        // per segment on the exact (unclamped) flow, and end to end on the
        // recorded path; both relative to the larger of served and present work
        for seg in &traj.segments {
            let next = propagate_law(&seg.state, &seg.law, &p, seg.duration);
            for c in Class::BOTH {
                let drop = total_class_work(&seg.state, c) - total_class_work(&next, c);
                let served = (1.0 - p.r(c)) * p.mu() * seg.law.shape[c.idx()].integral(seg.duration);
                let scale = served.max(total_class_work(&seg.state, c)).max(f64::MIN_POSITIVE);
                worst = worst.max((drop - served).abs() / scale);
            }
        }
        for c in Class::BOTH {
            let drop = total_class_work(&s0, c) - total_class_work(&traj.final_state, c);
            let served = (1.0 - p.r(c)) * p.mu() * traj.control_integral(c, 0.0, horizon);
            let scale = served.max(total_class_work(&s0, c)).max(f64::MIN_POSITIVE);
            worst = worst.max((drop - served).abs() / scale);
        }
    }
    SuiteResult::new(
        "work_drain",
        errors == 0 && worst <= 1e-10,
        worst,
        format!("{instances} trajectories, per segment and end to end, relative tolerance 1e-10"),
    )
}

/// Closed-form fixed-priority totals against the simulator on the oracle grid.
pub fn oracle_equivalence_suite() -> SuiteResult {
    let mut worst = 0.0f64;
    let mut errors = 0;
    let mut cases = 0;
    for p in oracle_params() {
        for eps in oracle_loads() {
            let s0 = State::symmetric(eps).unwrap();
            for c in Class::BOTH {
                cases += 1;
                let res = breakdown(&p, c, eps).and_then(|b| {
                    let horizon = 2.0 * (b.t_i + b.delta_j);
                    simulate(&fixed_priority(c), &s0, &p, horizon).map(|t| (b.total - t.accumulated_cost).abs() / t.accumulated_cost)
                });
                match res {
                    Ok(rel) => worst = worst.max(rel),
                    Err(_) => errors += 1,
                }
            }
        }
    }
    SuiteResult::new(
        "oracle_equivalence",
        errors == 0 && worst <= 1e-6,
        worst,
        format!("{cases} cases (5 params x 7 loads x 2 priorities), relative tolerance 1e-6"),
    )
}

/// Stage-B length against its upper bound `x / ((1 - r_j)(1 - a_i))`; worst
/// ratio reported.
pub fn stage_b_bound_suite() -> SuiteResult {
    let mut worst = 0.0f64;
    let mut errors = 0;
    for p in oracle_params() {
        for eps in oracle_loads().into_iter().chain([1e-4, 1e3, 1e4]) {
            for c in Class::BOTH {
                match breakdown(&p, c, eps) {
                    Ok(b) => {
                        let bound = eps / p.mu() / ((1.0 - p.r(c.other())) * (1.0 - b.a_i));
                        worst = worst.max(b.delta_j / bound);
                    }
                    Err(_) => errors += 1,
                }
            }
        }
    }
    SuiteResult::new(
        "stage_b_bound",
        errors == 0 && worst <= 1.0 + 1e-9,
        worst,
        "ratio of stage-B length to its bound",
    )
}

/// `|t_i - series| / x^4` at `x = 1e-2, 1e-3, 1e-4` must not grow as `x` shrinks.
pub fn clearance_series_suite() -> SuiteResult {
    let mut worst_growth = 0.0f64;
    let mut ok = true;
    for p in oracle_params() {
        for c in Class::BOTH {
            let scaled: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&x| {
                    let t = clearance_time(&p, c, x * p.mu()).unwrap();
                    (t - clearance_time_series(&p, c, x)).abs() / x.powi(4)
                })
                .collect();
            let reference = scaled[0].max(scaled[1]).max(1e-3);
            let growth = scaled[2] / reference;
            worst_growth = worst_growth.max(growth);
            ok &= scaled.iter().all(|v| v.is_finite()) && growth <= 2.0;
        }
    }
    SuiteResult::new(
        "clearance_series_order",
        ok,
        worst_growth,
        "fourth-order remainder at x = 1e-4 relative to x = 1e-2, 1e-3",
    )
}

/// Fixed-priority ranking at small and large load for the reference parameters.
pub fn sign_flip_suite() -> SuiteResult {
    let p = Params::reference();
    let total = |c, eps| breakdown(&p, c, eps).map(|b| b.total);
    match (
        total(Class::One, 1e-3),
        total(Class::Two, 1e-3),
        total(Class::One, 1e3),
        total(Class::Two, 1e3),
    ) {
        (Ok(s1), Ok(s2), Ok(l1), Ok(l2)) => {
            let small_margin = (s1 - s2) / s1;
            let large_margin = (l2 - l1) / l1;
            SuiteResult::new(
                "sign_flip",
                s2 < s1 && l1 < l2,
                small_margin.min(large_margin),
                format!("class-2-first advantage at 1e-3: {small_margin:.3e}, class-1-first advantage at 1e3: {large_margin:.3e}"),
            )
        }
        _ => SuiteResult::new("sign_flip", false, f64::NAN, "closed form failed"),
    }
}

/// `(C_1 - C_2) / (mu (kappa1 - kappa2) x^3)` over random `kappa1 > kappa2`
/// parameters: in `[0.8, 1.2]` at `x = 1e-3` and closer to 1 at `x = 1e-4`.
pub fn small_eps_coefficient_suite(seed: u64, instances: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x736d_616c);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..instances {
        let p = random_params_where(&mut rng, kappa_reversed);
        let ratio = |x: f64| -> Option<f64> {
            let eps = x * p.mu();
            let c1 = breakdown(&p, Class::One, eps).ok()?.total;
            let c2 = breakdown(&p, Class::Two, eps).ok()?.total;
            Some((c1 - c2) / (p.mu() * (p.kappa(Class::One) - p.kappa(Class::Two)) * x.powi(3)))
        };
        match (ratio(1e-3), ratio(1e-4)) {
            (Some(a), Some(b)) => {
                worst = worst.max((a - 1.0).abs());
                ok &= (0.8..=1.2).contains(&a) && (b - 1.0).abs() < (a - 1.0).abs();
            }
            _ => ok = false,
        }
    }
    SuiteResult::new(
        "small_eps_coefficient",
        ok,
        worst,
        format!("{instances} params, |ratio - 1| at x = 1e-3"),
    )
}

/// Closed-form totals at `eps = 1e3` against the leading large-load term.
pub fn large_eps_coefficient_suite() -> SuiteResult {
    let p = Params::reference();
    let mut worst = 0.0f64;
    let mut ok = true;
    for c in Class::BOTH {
        match (breakdown(&p, c, 1e3), large_eps_prediction(&p, c, 1e3)) {
            (Ok(b), Ok(pred)) => {
                let ratio = b.total / pred;
                worst = worst.max((ratio - 1.0).abs());
                ok &= (0.98..=1.02).contains(&ratio);
            }
            _ => ok = false,
        }
    }
    SuiteResult::new("large_eps_coefficient", ok, worst, "|ratio - 1| at eps = 1e3, tolerance 0.02")
}

/// Hamiltonian coefficient of each control against the cumulative kernel.
pub fn certificate_suite(seed: u64, instances: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6365_7274);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let p = random_params(&mut rng);
        let horizon = rng.gen_range(0.1..50.0);
        let cert = pontryagin_certificate(&p, &SolveConfig::new(horizon, 10).unwrap());
        let times: Vec<f64> = (0..=500).map(|k| horizon * k as f64 / 500.0).collect();
        worst = worst.max(cert.kernel_identity_residual(&times) / horizon.max(1.0));
    }
    SuiteResult::new(
        "certificate_identity",
        worst <= 1e-12,
        worst,
        format!("{instances} params, tolerance 1e-12 (scaled by max(1, T))"),
    )
}

/// Gap between the LP optimum and the class-1 priority cost at `n` cells.
pub fn lp_fixed_priority_gap(p: &Params, s0: &State, n: usize) -> reentrant_sched::Result<f64> {
    let sc = SolveConfig::auto(s0, p, n)?;
    let lp = solve_optimal(p, s0, &sc)?.cost;
    let fp1 = simulate(&fixed_priority(Class::One), s0, p, sc.horizon)?.accumulated_cost;
    Ok((lp - fp1).abs() / fp1)
}

/// Absolute floor below which a gap counts as converged.
pub const GAP_FLOOR: f64 = 1e-8;

/// LP optimum against class-1 priority over random `kappa1 <= kappa2`
/// instances, with the gap at `n` no larger than at `n / 2` (up to [`GAP_FLOOR`]).
pub fn fixed_priority_optimality_suite(seed: u64, instances: usize, n: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7468_6d31);
    let cases: Vec<(Params, State)> = (0..instances)
        .map(|_| (random_params_where(&mut rng, kappa_ordered), random_state(&mut rng, 5.0)))
        .collect();
    let gaps: Vec<Option<(f64, f64)>> = cases
        .par_iter()
        .map(|(p, s0)| {
            let fine = lp_fixed_priority_gap(p, s0, n).ok()?;
            let coarse = lp_fixed_priority_gap(p, s0, n / 2).ok()?;
            Some((fine, coarse))
        })
        .collect();
    let mut worst = 0.0f64;
    let mut ok = true;
    for g in &gaps {
        match g {
            Some((fine, coarse)) => {
                worst = worst.max(*fine);
                ok &= *fine <= 2e-3 && *fine <= coarse.max(GAP_FLOOR);
            }
            None => ok = false,
        }
    }
    SuiteResult::new(
        "lp_matches_fixed_priority",
        ok,
        worst,
        format!("{instances} instances with kappa1 <= kappa2 at n = {n}, tolerance 2e-3, refinement from n = {}", n / 2),
    )
}

/// Starts with `q1p + q2p` at least this large count as heavily loaded.
pub const HEAVY_LOAD: f64 = 4.0;

/// LP optima over the default start grid with the reference parameters: at
/// most one switch, and class 1 first from heavily loaded starts.
pub fn one_switch_suite(n: usize) -> SuiteResult {
    let p = Params::reference();
    let starts: Vec<State> = DEFAULT_START_GRID
        .iter()
        .flat_map(|&a| DEFAULT_START_GRID.iter().map(move |&b| State::new(a, 0.0, b, 0.0).unwrap()))
        .collect();
    let results: Vec<Option<(usize, Option<Class>)>> = starts
        .par_iter()
        .map(|s0| {
            let sc = SolveConfig::auto(s0, &p, n).ok()?;
            let sol = solve_optimal(&p, s0, &sc).ok()?;
            Some((sol.switch_count, sol.phases.first().map(|ph| ph.class)))
        })
        .collect();
    let mut max_switches = 0usize;
    let mut ok = true;
    for (s0, r) in starts.iter().zip(&results) {
        match r {
            Some((switches, first)) => {
                max_switches = max_switches.max(*switches);
                ok &= *switches <= 1;
                if s0.primary(Class::One) + s0.primary(Class::Two) >= HEAVY_LOAD {
                    ok &= *first == Some(Class::One);
                }
            }
            None => ok = false,
        }
    }
    SuiteResult::new(
        "one_switch",
        ok,
        max_switches as f64,
        format!("5x5 start grid at n = {n}, max switch count reported"),
    )
}

/// Every suite, in report order.
pub fn run_all(cfg: &ExperimentConfig) -> VerifyReport {
    let seed = cfg.seed;
    VerifyReport {
        results: vec![
            lemma1_suite(seed, default_kernel),
            kernel_decomposition_suite(seed, 100),
            work_drain_suite(seed, 100),
            certificate_suite(seed, 100),
            oracle_equivalence_suite(),
            stage_b_bound_suite(),
            clearance_series_suite(),
            sign_flip_suite(),
            small_eps_coefficient_suite(seed, 10),
            large_eps_coefficient_suite(),
            fixed_priority_optimality_suite(seed, cfg.lp_instances, cfg.grid_points),
            one_switch_suite(cfg.grid_points),
        ],
    }
}
