//! Closed-form costs of the fixed-priority policies from the symmetric start
//! `(eps, 0, eps, 0)`, and their small- and large-load expansions.
//!
//! Under the policy prioritizing class `i`, stage A runs until class `i`'s
//! backlog clears at `t_i`; in stage B class `i` is held empty with the
//! decaying allocation `a_i e^{-lambda_i (t - t_i)}` while class `j` gets the
//! rest, until class `j` clears at `t_i + Delta_j`. Afterwards both primary
//! queues stay empty and no further cost accrues.

use crate::error::{Error, Result};
use crate::model::{Class, Params};
use crate::roots;
use crate::special::decay1;

/// Root of `eps = mu [(1 - r) t + (r / gamma)(1 - e^{-gamma t})]`.
pub fn clearance_time(params: &Params, class: Class, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidState(format!(
            "load must be finite and nonnegative, got {epsilon}"
        )));
    }
    if epsilon == 0.0 {
        return Ok(0.0);
    }
    let (r, g, mu) = (params.r(class), params.gamma(class), params.mu());
    let x = epsilon / mu;
    // decay1(g, t) = (1 - e^{-g t}) / g without cancellation
    let residual = |t: f64| (1.0 - r) * t + r * decay1(g, t) - x;
    Ok(roots::bisect(residual, x, x / (1.0 - r), 1e-16))
}

/// Stage-by-stage cost of the fixed priority of one class from `(eps, 0, eps, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPriorityBreakdown {
    pub prioritized_class: Class,
    pub epsilon: f64,
    pub t_i: f64,
    /// Allocation needed to hold class `i` empty right after it clears.
    pub a_i: f64,
    /// `(1 - r_i) gamma_i`, the decay rate of the holding allocation.
    pub lambda_i: f64,
    /// Length of stage B.
    pub delta_j: f64,
    /// Return queue of class `j` when its backlog clears.
    pub qjr_end: f64,
    pub cost_stage_a: f64,
    pub cost_stage_b: f64,
    pub total: f64,
}

/// Stage-B quantities depending on `Delta` for fixed `(i, j)`.
struct StageB {
    eps: f64,
    mu: f64,
    rj: f64,
    gj: f64,
    a: f64,
    lam: f64,
    degenerate: bool,
}

impl StageB {
    fn new(params: &Params, i: Class, eps: f64, a: f64) -> Self {
        let j = i.other();
        let lam = params.hold_decay(i);
        let gj = params.gamma(j);
        StageB {
            eps,
            mu: params.mu(),
            rj: params.r(j),
            gj,
            a,
            lam,
            degenerate: (gj - lam).abs() < 1e-9 * gj.max(lam),
        }
    }

    /// `(e^{-lambda D} - e^{-gamma_j D}) / (gamma_j - lambda)`, or its limit `D e^{-lambda D}`.
    fn exp_gap(&self, d: f64) -> f64 {
        if self.degenerate {
            d * (-self.lam * d).exp()
        } else {
            // factor out the slower exponential so the remaining difference goes through exp_m1
            let (slow, fast) = if self.lam < self.gj { (self.lam, self.gj) } else { (self.gj, self.lam) };
            let diff = -(-slow * d).exp() * (-(fast - slow) * d).exp_m1();
            let signed = if self.lam < self.gj { diff } else { -diff };
            signed / (self.gj - self.lam)
        }
    }

    fn exp_gap_rate(&self, d: f64) -> f64 {
        if self.degenerate {
            (1.0 - self.lam * d) * (-self.lam * d).exp()
        } else {
            (-self.lam * (-self.lam * d).exp() + self.gj * (-self.gj * d).exp()) / (self.gj - self.lam)
        }
    }

    /// `q_j^r` at the end of a stage B of length `d`.
    fn qjr(&self, d: f64) -> f64 {
        let one_minus = -(-self.gj * d).exp_m1();
        self.rj * self.mu / self.gj * one_minus - self.rj * self.mu * self.a * self.exp_gap(d)
    }

    fn qjr_rate(&self, d: f64) -> f64 {
        self.rj * self.mu * (-self.gj * d).exp() - self.rj * self.mu * self.a * self.exp_gap_rate(d)
    }

    /// `Delta - (a / lambda)(1 - e^{-lambda Delta}) - (eps - q_j^r) / ((1 - r_j) mu)`;
    /// equals `-q_j^p / ((1 - r_j) mu)`.
    fn residual(&self, d: f64) -> f64 {
        let one_minus = -(-self.lam * d).exp_m1();
        d - self.a / self.lam * one_minus - (self.eps - self.qjr(d)) / ((1.0 - self.rj) * self.mu)
    }

    fn residual_rate(&self, d: f64) -> f64 {
        1.0 - self.a * (-self.lam * d).exp() + self.qjr_rate(d) / ((1.0 - self.rj) * self.mu)
    }

    /// Stage B cost for a stage of length `d`.
    fn cost(&self, d: f64) -> f64 {
        let StageB {
            eps,
            mu,
            rj,
            gj,
            a,
            lam,
            ..
        } = *self;
        // e^{-y} - 1 through exp_m1 keeps the small-load regime accurate
        let em1_l = (-lam * d).exp_m1();
        let em1_g = (-gj * d).exp_m1();
        let last = if self.degenerate {
            -em1_l / (lam * lam) - d * (-lam * d).exp() / lam
        } else {
            (-em1_l / lam + em1_g / gj) / (gj - lam)
        };
        eps * d - 0.5 * (1.0 - rj) * mu * d * d
            + (1.0 - rj) * mu * a / lam * (d + em1_l / lam)
            - rj * mu / gj * (d + em1_g / gj)
            + rj * mu * a * last
    }
}

pub fn breakdown(params: &Params, prioritized_class: Class, epsilon: f64) -> Result<FixedPriorityBreakdown> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidState(format!(
            "load must be finite and positive, got {epsilon}"
        )));
    }
    let i = prioritized_class;
    let j = i.other();
    let (ri, gi, mu) = (params.r(i), params.gamma(i), params.mu());
    let x = epsilon / mu;

    let t_i = clearance_time(params, i, epsilon)?;
    let one_minus = -(-gi * t_i).exp_m1();
    let a_i = ri * one_minus;

    // stage A: class i drains at full capacity, class j waits at eps
    let integral_i = epsilon * t_i
        - 0.5 * (1.0 - ri) * mu * t_i * t_i
        - ri * mu / gi * (t_i - one_minus / gi);
    let cost_stage_a = integral_i + epsilon * t_i;

    let stage = StageB::new(params, i, epsilon, a_i);
    let upper = 2.0 * x / ((1.0 - params.r(j)) * (1.0 - a_i));
    let samples = ((4.0 * upper * stage.gj.max(stage.lam)).ceil() as usize).clamp(64, 4096);
    let delta_j = roots::first_crossing(
        |d| -stage.residual(d),
        |d| -stage.residual_rate(d),
        upper,
        samples,
    )
    .ok_or_else(|| {
        Error::InvalidState(format!(
            "class {j} backlog does not clear within {upper} after stage A (eps = {epsilon})"
        ))
    })?;
    let cost_stage_b = stage.cost(delta_j);

    Ok(FixedPriorityBreakdown {
        prioritized_class: i,
        epsilon,
        t_i,
        a_i,
        lambda_i: stage.lam,
        delta_j,
        qjr_end: stage.qjr(delta_j),
        cost_stage_a,
        cost_stage_b,
        total: cost_stage_a + cost_stage_b,
    })
}

/// Third-order small-load expansion of the two stage costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPrediction {
    pub stage_a: f64,
    pub stage_b: f64,
    pub total: f64,
}

/// `C_A / mu ~ 3/2 x^2 + 2/3 kappa_i x^3`, `C_B / mu ~ 1/2 x^2 + (kappa_i / 2 + kappa_j / 6) x^3`.
pub fn small_eps_prediction(params: &Params, prioritized_class: Class, epsilon: f64) -> Result<CostPrediction> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidState(format!("load must be positive, got {epsilon}")));
    }
    let mu = params.mu();
    let x = epsilon / mu;
    let ki = params.kappa(prioritized_class);
    let kj = params.kappa(prioritized_class.other());
    let stage_a = mu * (1.5 * x * x + 2.0 / 3.0 * ki * x.powi(3));
    let stage_b = mu * (0.5 * x * x + (0.5 * ki + kj / 6.0) * x.powi(3));
    Ok(CostPrediction {
        stage_a,
        stage_b,
        total: stage_a + stage_b,
    })
}

/// Leading large-load term `(eps^2 / mu) [3 / (2 (1 - r_i)) + 1 / (2 (1 - r_j))]`.
pub fn large_eps_prediction(params: &Params, prioritized_class: Class, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidState(format!("load must be positive, got {epsilon}")));
    }
    let ri = params.r(prioritized_class);
    let rj = params.r(prioritized_class.other());
    Ok(epsilon * epsilon / params.mu() * (1.5 / (1.0 - ri) + 0.5 / (1.0 - rj)))
}

/// Small-load expansion of the clearance time through `x^3`.
pub fn clearance_time_series(params: &Params, class: Class, x: f64) -> f64 {
    let (r, g) = (params.r(class), params.gamma(class));
    x + r * g * x * x / 2.0 + g * g * r * (3.0 * r - 1.0) * x.powi(3) / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use crate::model::State;
    use crate::optimal::default_horizon;
    use crate::policies::fixed_priority;

    fn fig2() -> Params {
        Params::reference()
    }

    fn simulated(params: &Params, class: Class, eps: f64) -> f64 {
        let s0 = State::symmetric(eps).unwrap();
        let t = default_horizon(&s0, params);
        simulate(&fixed_priority(class), &s0, params, t).unwrap().accumulated_cost
    }

    #[test]
    fn clearance_time_edge_cases() {
        let p = fig2();
        assert_eq!(clearance_time(&p, Class::One, 0.0).unwrap(), 0.0);
        assert!(clearance_time(&p, Class::One, -1.0).is_err());
        let eps = 1e4;
        for c in Class::BOTH {
            let t = clearance_time(&p, c, eps).unwrap();
            let lead = eps / ((1.0 - p.r(c)) * p.mu());
            // lead - r / ((1 - r) gamma) <= t <= lead
            let slack = 1e-12 * lead;
            assert!(t <= lead + slack);
            assert!(t >= lead - p.r(c) / ((1.0 - p.r(c)) * p.gamma(c)) - slack);
        }
    }

    #[test]
    fn clearance_time_series_orders() {
        let p = fig2();
        for c in Class::BOTH {
            let mut ratios = Vec::new();
            for x in [1e-2, 1e-3, 1e-4] {
                let t = clearance_time(&p, c, x * p.mu()).unwrap();
                let second = x + p.r(c) * p.gamma(c) * x * x / 2.0;
                assert!((t - second).abs() / x.powi(3) < 10.0);
                ratios.push((t - clearance_time_series(&p, c, x)).abs() / x.powi(4));
            }
            assert!(ratios.iter().all(|r| *r < 10.0), "{ratios:?}");
        }
    }

    #[test]
    fn breakdown_matches_simulation() {
        let params = [
            fig2(),
            Params::new(0.2, 0.8, 1.0, 1.0, 2.0).unwrap(),
            Params::new(0.1, 0.5, 0.3, 3.0, 1.0).unwrap(),
        ];
        for p in params {
            for eps in [1e-3, 0.1, 1.0, 10.0, 100.0] {
                for c in Class::BOTH {
                    let b = breakdown(&p, c, eps).unwrap();
                    let sim = simulated(&p, c, eps);
                    let rel = (b.total - sim).abs() / sim;
                    assert!(rel < 1e-6, "{p:?} eps {eps} class {c}: {} vs {sim}", b.total);
                }
            }
        }
    }

    #[test]
    fn breakdown_invariants() {
        let p = fig2();
        for eps in [1e-4, 1e-2, 1.0, 1e2, 1e4] {
            for c in Class::BOTH {
                let b = breakdown(&p, c, eps).unwrap();
                assert!(b.t_i > 0.0 && b.delta_j > 0.0);
                // e^{-gamma t_i} underflows relative to 1 for the largest loads
                assert!(b.a_i > 0.0 && b.a_i <= p.r(c));
                if p.gamma(c) * b.t_i < 30.0 {
                    assert!(b.a_i < p.r(c));
                }
                assert_eq!(b.total, b.cost_stage_a + b.cost_stage_b);
                // Delta_j <= x / ((1 - r_j)(1 - a_i))
                let x = eps / p.mu();
                assert!(b.delta_j <= x / ((1.0 - p.r(c.other())) * (1.0 - b.a_i)) * (1.0 + 1e-12));
            }
        }
        assert!(breakdown(&p, Class::One, 0.0).is_err());
    }

    #[test]
    fn stage_b_length_second_order() {
        let p = fig2();
        let eps = 1e-3;
        let x = eps / p.mu();
        let b = breakdown(&p, Class::One, eps).unwrap();
        let series = x + (p.kappa(Class::One) + 0.5 * p.kappa(Class::Two)) * x * x;
        assert!((b.delta_j - series).abs() / x.powi(3) < 10.0);
    }

    #[test]
    fn degenerate_rate_uses_limit() {
        // lambda_1 = 0.8 * 1.0 = 0.8 = gamma_2
        let p = Params::new(0.2, 0.5, 1.0, 0.8, 2.0).unwrap();
        let q = Params::new(0.2, 0.5, 1.0, 0.8 * (1.0 + 1e-6), 2.0).unwrap();
        for eps in [0.01, 1.0, 10.0] {
            let a = breakdown(&p, Class::One, eps).unwrap();
            let b = breakdown(&q, Class::One, eps).unwrap();
            assert!(a.total.is_finite());
            assert!((a.total - b.total).abs() < 1e-5 * a.total);
            let sim = simulated(&p, Class::One, eps);
            assert!((a.total - sim).abs() < 1e-6 * sim);
        }
    }

    #[test]
    fn small_load_prediction_order() {
        let p = fig2();
        for c in Class::BOTH {
            let mut errs = Vec::new();
            for x in [1e-2, 1e-3, 1e-4] {
                let eps = x * p.mu();
                let b = breakdown(&p, c, eps).unwrap();
                let pred = small_eps_prediction(&p, c, eps).unwrap();
                errs.push((b.total - pred.total).abs() / (p.mu() * x.powi(3)));
            }
            assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        }
    }

    #[test]
    fn fixed_priority_ranking_flips_with_load() {
        let p = fig2();
        let small = (breakdown(&p, Class::One, 1e-3).unwrap(), breakdown(&p, Class::Two, 1e-3).unwrap());
        assert!(small.1.total < small.0.total);
        let large = (breakdown(&p, Class::One, 1e3).unwrap(), breakdown(&p, Class::Two, 1e3).unwrap());
        assert!(large.0.total < large.1.total);
    }

    #[test]
    fn large_load_leading_term() {
        let p = fig2();
        let coeff = large_eps_prediction(&p, Class::One, 1.0).unwrap();
        assert!((coeff - 4.375 / 2.0).abs() < 1e-12);
        for c in Class::BOTH {
            let eps = 1e3;
            let ratio = breakdown(&p, c, eps).unwrap().total / large_eps_prediction(&p, c, eps).unwrap();
            assert!((ratio - 1.0).abs() < 0.02, "{c}: {ratio}");
        }
    }
}
