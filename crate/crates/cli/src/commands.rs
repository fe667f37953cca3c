//! The experiment subcommands, as functions returning tables.

use rayon::prelude::*;

use reentrant_sched::asymptotics::{breakdown, large_eps_prediction, small_eps_prediction};
use reentrant_sched::optimal::{best_single_switch, solve_optimal, OptimalSolution, SolveConfig};
use reentrant_sched::{fixed_priority, simulate, Class, Params, State, Trajectory};

use crate::config::{ExperimentConfig, Field, PolicySpec};
use crate::error::{CliError, CliResult};
use crate::table::{num, Table};

/// Largest relative change of the reported optimal cost tolerated by the
/// horizon-doubling check.
pub const HORIZON_CHANGE_LIMIT: f64 = 1e-9;

/// Start values used by `trajectories` when the config has no sweep.
pub const DEFAULT_START_GRID: [f64; 5] = [0.25, 0.9375, 1.625, 2.3125, 3.0];

pub const DEFAULT_GAMMA2_SWEEP: [f64; 6] = [0.05, 0.10, 0.20, 0.30, 0.40, 0.50];

fn row_error(context: String) -> impl FnOnce(reentrant_sched::Error) -> CliError {
    move |source| CliError::Row { context, source }
}

pub const TRAJECTORY_HEADER: [&str; 8] = ["time", "q1p", "q1r", "q2p", "q2r", "u1", "u2", "running_cost"];

/// Segment breakpoints plus `samples` uniform times, then the horizon.
pub fn trajectory_table(traj: &Trajectory, samples: usize) -> Table {
    let mut table = Table::new(&TRAJECTORY_HEADER);
    let horizon = traj.horizon;
    if traj.initial_state.is_zero() {
        let s = traj.initial_state;
        table.push_numbers(&[0.0, s.primary[0], s.returning[0], s.primary[1], s.returning[1], 0.0, 0.0, 0.0]);
        return table;
    }
    // (time, exact breakpoint state?)
    let mut times: Vec<(f64, Option<usize>)> = traj
        .segments
        .iter()
        .enumerate()
        .map(|(i, seg)| (seg.start, Some(i)))
        .collect();
    times.extend((0..samples).map(|k| (horizon * k as f64 / samples as f64, None)));
    times.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.is_some().cmp(&a.1.is_some())));
    times.dedup_by(|later, earlier| later.0 == earlier.0);

    for (t, seg) in times {
        let (state, alloc) = match seg {
            Some(i) => {
                let seg = &traj.segments[i];
                (seg.state, seg.law.allocation_at(0.0))
            }
            None => (traj.state_at(t), traj.allocation_at(t)),
        };
        table.push_numbers(&[
            t,
            state.primary[0],
            state.returning[0],
            state.primary[1],
            state.returning[1],
            alloc.u[0],
            alloc.u[1],
            traj.cost_until(t),
        ]);
    }
    let s = traj.final_state;
    let a = traj.allocation_at(horizon);
    table.push_numbers(&[
        horizon,
        s.primary[0],
        s.returning[0],
        s.primary[1],
        s.returning[1],
        a.u[0],
        a.u[1],
        traj.accumulated_cost,
    ]);
    table
}

/// Trajectory of the configured policy from the configured start.
pub fn run_simulation(cfg: &ExperimentConfig) -> CliResult<Trajectory> {
    if !cfg.sweep.is_empty() {
        return Err(CliError::config("sweep", "simulate runs a single configuration"));
    }
    let params = cfg.model.params()?;
    let state0 = cfg.model.state()?;
    let horizon = cfg.horizon.resolve(&state0, &params);
    match cfg.policy {
        PolicySpec::Closed(policy) => Ok(simulate(&policy, &state0, &params, horizon)?),
        PolicySpec::Optimal => {
            let sc = cfg.solve_config(&state0, &params)?;
            Ok(solve_optimal(&params, &state0, &sc)?.trajectory)
        }
    }
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<(Table, f64)> {
    let traj = run_simulation(cfg)?;
    Ok((trajectory_table(&traj, cfg.samples), traj.accumulated_cost))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub swept_value: f64,
    /// Percent above the best cost found.
    pub fp1_gap: f64,
    pub fp2_gap: f64,
    /// Smallest of the LP, fixed-priority and best single-switch costs.
    pub optimal_cost: f64,
    pub fp1_cost: f64,
    pub fp2_cost: f64,
    pub lp_cost: f64,
    pub single_switch_cost: f64,
    pub switch_count: usize,
    pub horizon: f64,
    /// Relative change of `optimal_cost` when the horizon and the number of
    /// cells are both doubled.
    pub horizon_change: Option<f64>,
    /// Same for the LP cost alone.
    pub lp_horizon_change: Option<f64>,
}

struct Costs {
    optimal: f64,
    fp1: f64,
    fp2: f64,
    lp: f64,
    single: f64,
    switches: usize,
}

fn costs(params: &Params, state0: &State, sc: &SolveConfig) -> reentrant_sched::Result<Costs> {
    let sol = solve_optimal(params, state0, sc)?;
    let fp = |c| simulate(&fixed_priority(c), state0, params, sc.horizon).map(|t| t.accumulated_cost);
    let fp1 = fp(Class::One)?;
    let fp2 = fp(Class::Two)?;
    let single = best_single_switch(params, state0, sc)?.cost;
    Ok(Costs {
        optimal: sol.cost.min(fp1).min(fp2).min(single),
        fp1,
        fp2,
        lp: sol.cost,
        single,
        switches: sol.switch_count,
    })
}

fn percent_gap(cost: f64, best: f64) -> f64 {
    if best > 0.0 {
        100.0 * (cost - best) / best
    } else {
        0.0
    }
}

pub fn gap_rows(cfg: &ExperimentConfig, horizon_double_check: bool) -> CliResult<Vec<GapRow>> {
    let mut cfg = cfg.clone();
    if cfg.sweep.is_empty() {
        cfg.sweep.push((Field::Gamma2, DEFAULT_GAMMA2_SWEEP.to_vec()));
    }
    if cfg.sweep.len() != 1 {
        return Err(CliError::config("sweep", "gap-table sweeps exactly one field"));
    }
    let points = cfg.sweep_points();
    points
        .par_iter()
        .map(|(swept, model)| {
            let params = model.params()?;
            let state0 = model.state()?;
            let sc = cfg.solve_config(&state0, &params)?;
            let context = model.describe();
            let c = costs(&params, &state0, &sc).map_err(row_error(context.clone()))?;
            let (horizon_change, lp_horizon_change) = if horizon_double_check {
                let doubled = SolveConfig::new(2.0 * sc.horizon, 2 * sc.grid_points)
                    .map_err(row_error(context.clone()))?
                    .with_tolerance(sc.lp_tolerance);
                let d = costs(&params, &state0, &doubled).map_err(row_error(context.clone()))?;
                let rel = |a: f64, b: f64| if a > 0.0 { (b - a).abs() / a } else { (b - a).abs() };
                (Some(rel(c.optimal, d.optimal)), Some(rel(c.lp, d.lp)))
            } else {
                (None, None)
            };
            Ok(GapRow {
                swept_value: swept[0],
                fp1_gap: percent_gap(c.fp1, c.optimal),
                fp2_gap: percent_gap(c.fp2, c.optimal),
                optimal_cost: c.optimal,
                fp1_cost: c.fp1,
                fp2_cost: c.fp2,
                lp_cost: c.lp,
                single_switch_cost: c.single,
                switch_count: c.switches,
                horizon: sc.horizon,
                horizon_change,
                lp_horizon_change,
            })
        })
        .collect()
}

pub fn gap_table(rows: &[GapRow]) -> Table {
    let with_check = rows.iter().any(|r| r.horizon_change.is_some());
    let mut header = vec![
        "swept_value",
        "fp1_gap",
        "fp2_gap",
        "optimal_cost",
        "fp1_cost",
        "fp2_cost",
        "lp_cost",
        "single_switch_cost",
        "switch_count",
        "horizon",
    ];
    if with_check {
        header.extend(["horizon_change", "lp_horizon_change"]);
    }
    let mut table = Table::new(&header);
    for r in rows {
        let mut row = vec![
            num(r.swept_value),
            num(r.fp1_gap),
            num(r.fp2_gap),
            num(r.optimal_cost),
            num(r.fp1_cost),
            num(r.fp2_cost),
            num(r.lp_cost),
            num(r.single_switch_cost),
            r.switch_count.to_string(),
            num(r.horizon),
        ];
        if with_check {
            row.push(num(r.horizon_change.unwrap_or(f64::NAN)));
            row.push(num(r.lp_horizon_change.unwrap_or(f64::NAN)));
        }
        table.push(row);
    }
    table
}

/// Errors out on the first row whose optimal cost moved by more than
/// [`HORIZON_CHANGE_LIMIT`] under horizon doubling.
pub fn check_horizon_changes(rows: &[GapRow]) -> CliResult<()> {
    for r in rows {
        if let Some(change) = r.horizon_change {
            if !(change < HORIZON_CHANGE_LIMIT) {
                return Err(CliError::HorizonSensitive {
                    context: format!("swept value {}", r.swept_value),
                    change,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub start: State,
    pub solution: OptimalSolution,
}

pub fn trajectory_runs(cfg: &ExperimentConfig) -> CliResult<Vec<TrajectoryRun>> {
    let mut cfg = cfg.clone();
    if cfg.sweep.is_empty() {
        cfg.sweep.push((Field::Q1p, DEFAULT_START_GRID.to_vec()));
        cfg.sweep.push((Field::Q2p, DEFAULT_START_GRID.to_vec()));
    }
    cfg.sweep_points()
        .par_iter()
        .map(|(_, model)| {
            let params = model.params()?;
            let start = model.state()?;
            let sc = cfg.solve_config(&start, &params)?;
            let solution = solve_optimal(&params, &start, &sc).map_err(row_error(model.describe()))?;
            Ok(TrajectoryRun { start, solution })
        })
        .collect()
}

/// Node states and cell controls of an LP optimum; the last row repeats the
/// final cell's control.
pub fn optimal_path_table(sol: &OptimalSolution) -> Table {
    let mut table = Table::new(&["time", "q1p", "q1r", "q2p", "q2r", "u1", "u2"]);
    for (k, (t, s)) in sol.grid.iter().zip(&sol.node_states).enumerate() {
        let a = sol.controls[k.min(sol.controls.len() - 1)];
        table.push_numbers(&[*t, s.primary[0], s.returning[0], s.primary[1], s.returning[1], a.u[0], a.u[1]]);
    }
    table
}

/// Phase sequence such as `1>2`, or `none` for an empty system.
pub fn phase_string(sol: &OptimalSolution) -> String {
    if sol.phases.is_empty() {
        return "none".into();
    }
    sol.phases
        .iter()
        .map(|p| p.class.to_string())
        .collect::<Vec<_>>()
        .join(">")
}

pub fn trajectory_summary(runs: &[TrajectoryRun]) -> Table {
    let mut table = Table::new(&[
        "index",
        "q1p0",
        "q1r0",
        "q2p0",
        "q2r0",
        "switch_count",
        "phases",
        "first_switch_time",
        "cost",
    ]);
    for (i, run) in runs.iter().enumerate() {
        let s = run.start;
        let first_switch = run.solution.phases.get(1).map_or(f64::NAN, |p| p.start);
        table.push(vec![
            i.to_string(),
            num(s.primary[0]),
            num(s.returning[0]),
            num(s.primary[1]),
            num(s.returning[1]),
            run.solution.switch_count.to_string(),
            phase_string(&run.solution),
            num(first_switch),
            num(run.solution.cost),
        ]);
    }
    table
}

pub const ASYMPTOTICS_HEADER: [&str; 17] = [
    "r1",
    "r2",
    "gamma1",
    "gamma2",
    "mu",
    "epsilon",
    "prioritized_class",
    "t_i",
    "a_i",
    "lambda_i",
    "delta_j",
    "qjr_end",
    "cost_stage_a",
    "cost_stage_b",
    "total",
    "small_eps_total",
    "large_eps_total",
];

/// Closed-form fixed-priority costs from `(eps, 0, eps, 0)` for every
/// configured load and both priorities.
pub fn cmd_asymptotics(cfg: &ExperimentConfig) -> CliResult<Table> {
    let mut table = Table::new(&ASYMPTOTICS_HEADER);
    for (_, model) in cfg.sweep_points() {
        let p = model.params()?;
        for &eps in &cfg.epsilons {
            for class in Class::BOTH {
                let context = format!("{} epsilon={eps} class={class}", model.describe());
                let b = breakdown(&p, class, eps).map_err(row_error(context.clone()))?;
                let small = small_eps_prediction(&p, class, eps).map_err(row_error(context.clone()))?;
                let large = large_eps_prediction(&p, class, eps).map_err(row_error(context))?;
                let mut row: Vec<String> = [Field::R1, Field::R2, Field::Gamma1, Field::Gamma2, Field::Mu]
                    .iter()
                    .map(|f| num(model.get(*f)))
                    .collect();
                row.push(num(eps));
                row.push(class.to_string());
                row.extend(
                    [
                        b.t_i,
                        b.a_i,
                        b.lambda_i,
                        b.delta_j,
                        b.qjr_end,
                        b.cost_stage_a,
                        b.cost_stage_b,
                        b.total,
                        small.total,
                        large,
                    ]
                    .iter()
                    .map(|&x| num(x)),
                );
                table.push(row);
            }
        }
    }
    Ok(table)
}
