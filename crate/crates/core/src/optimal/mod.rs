//! Optimal control by direct transcription, the single-switch policy search,
//! and the costate certificate.

mod banded;
mod ipm;
mod lp;

pub use ipm::{IpmOptions, IpmSolution, StandardLp};
pub use lp::{transcribe_on_grid, LinearConstraint, LpInstance, RowKind, Sense};

use crate::dynamics::{simulate, simulate_controls, ClassFlow, ControlShape, Trajectory};
use crate::error::{Error, Result};
use crate::model::{Allocation, Class, Params, State};
use crate::policies::switch_at_time;

/// Priority runs shorter than this many cells are merged into a neighbor.
pub const CHATTER_WINDOW: usize = 5;

/// Intra-cell dip of a primary queue tolerated before the grid is refined.
pub const DIP_TOLERANCE: f64 = 1e-6;

const MAX_REFINEMENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub horizon: f64,
    pub grid_points: usize,
    /// Relative optimality gap requested from the LP solver.
    pub lp_tolerance: f64,
}

/// Twice the time needed to drain both classes one after the other at full
/// capacity. Falls back to 1 for the empty system.
pub fn default_horizon(state0: &State, params: &Params) -> f64 {
    let t: f64 = Class::BOTH
        .iter()
        .map(|&c| {
            (state0.primary(c) + state0.returning(c)) / ((1.0 - params.r(c)) * params.mu())
        })
        .sum();
    if t > 0.0 {
        2.0 * t
    } else {
        1.0
    }
}

impl SolveConfig {
    pub const DEFAULT_LP_TOLERANCE: f64 = 1e-10;

    pub fn new(horizon: f64, grid_points: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if grid_points < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid_points must be at least 2, got {grid_points}"
            )));
        }
        Ok(SolveConfig {
            horizon,
            grid_points,
            lp_tolerance: Self::DEFAULT_LP_TOLERANCE,
        })
    }

    /// Config with the default horizon for `state0`.
    pub fn auto(state0: &State, params: &Params, grid_points: usize) -> Result<Self> {
        Self::new(default_horizon(state0, params), grid_points)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.lp_tolerance = tol;
        self
    }

    pub fn uniform_grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        let mut nodes: Vec<f64> = (0..=n).map(|k| self.horizon * k as f64 / n as f64).collect();
        nodes[n] = self.horizon;
        nodes
    }
}

/// A maximal stretch of cells over which one class is prioritized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub class: Class,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub trajectory: Trajectory,
    /// Exact holding cost of the piecewise-constant controls.
    pub cost: f64,
    /// Objective reported by the LP solver.
    pub lp_objective: f64,
    /// Cell boundaries, `grid[0] = 0` and last = horizon.
    pub grid: Vec<f64>,
    pub controls: Vec<Allocation>,
    pub node_states: Vec<State>,
    pub phases: Vec<Phase>,
    pub switch_count: usize,
    /// Number of local grid refinements triggered by intra-cell dips.
    pub refinements: usize,
}

impl OptimalSolution {
    /// Packages piecewise-constant `controls` on `grid` as a solution, with the
    /// exact trajectory, node states and priority phases. Small negative node
    /// values left by discretization are clamped to zero.
    pub fn from_controls(
        params: &Params,
        state0: &State,
        grid: Vec<f64>,
        controls: Vec<Allocation>,
    ) -> Result<Self> {
        if grid.len() != controls.len() + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} cells need {} nodes, got {}",
                controls.len(),
                controls.len() + 1,
                grid.len()
            )));
        }
        let cells: Vec<(f64, Allocation)> = grid
            .windows(2)
            .zip(&controls)
            .map(|(w, a)| (w[1] - w[0], *a))
            .collect();
        let trajectory = simulate_controls(state0, params, &cells, f64::INFINITY)?;
        let mut node_states: Vec<State> = trajectory.segments.iter().map(|s| s.state).collect();
        node_states.push(trajectory.final_state);
        let phases = priority_phases(&grid, &controls, &node_states);
        Ok(OptimalSolution {
            cost: trajectory.accumulated_cost,
            lp_objective: trajectory.accumulated_cost,
            switch_count: phases.len().saturating_sub(1),
            trajectory,
            grid,
            controls,
            node_states,
            phases,
            refinements: 0,
        })
    }
}

/// Cell averages of the controls used by `trajectory` on `grid`.
pub fn discretize_controls(trajectory: &Trajectory, grid: &[f64]) -> Vec<Allocation> {
    grid.windows(2)
        .map(|w| {
            let h = w[1] - w[0];
            let avg = |c| (trajectory.control_integral(c, w[0], w[1]) / h).max(0.0);
            let (u1, u2) = (avg(Class::One), avg(Class::Two));
            let s = u1 + u2;
            if s > 1.0 {
                Allocation { u: [u1 / s, u2 / s] }
            } else {
                Allocation { u: [u1, u2] }
            }
        })
        .collect()
}

/// Class whose needs are served first on each cell, `None` when no choice is
/// being made (everything empty, or an empty class receives nothing).
///
/// A class kept (nearly) empty across a cell while the other waits is the
/// prioritized one; when both primary queues carry work, the larger
/// allocation decides. The emptiness level is `1e-3` times the initial work,
/// coarse enough to absorb the drift of cell-averaged holding controls.
pub fn cell_priorities(controls: &[Allocation], states: &[State]) -> Vec<Option<Class>> {
    let scale = states.first().map(|s| s.total_work()).unwrap_or(0.0).max(1.0);
    let empty_level = 1e-3 * scale;
    controls
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let empty = |c: Class| {
                states[k].primary(c) <= empty_level && states[k + 1].primary(c) <= empty_level
            };
            match (empty(Class::One), empty(Class::Two)) {
                (true, true) => None,
                (true, false) => (a.u[0] > 1e-6).then_some(Class::One),
                (false, true) => (a.u[1] > 1e-6).then_some(Class::Two),
                (false, false) => {
                    if a.u[0] > a.u[1] + 0.1 {
                        Some(Class::One)
                    } else if a.u[1] > a.u[0] + 0.1 {
                        Some(Class::Two)
                    } else {
                        None
                    }
                }
            }
        })
        .collect()
}

/// Priority phases after merging runs shorter than [`CHATTER_WINDOW`] cells.
pub fn priority_phases(grid: &[f64], controls: &[Allocation], states: &[State]) -> Vec<Phase> {
    let prios = cell_priorities(controls, states);
    // (class, first cell, last cell + 1, cells counted)
    let mut runs: Vec<(Class, usize, usize, usize)> = Vec::new();
    for (k, p) in prios.iter().enumerate() {
        let Some(c) = *p else { continue };
        match runs.last_mut() {
            Some(run) if run.0 == c => {
                run.2 = k + 1;
                run.3 += 1;
            }
            _ => runs.push((c, k, k + 1, 1)),
        }
    }
    while runs.len() > 1 {
        let (idx, run) = runs
            .iter()
            .enumerate()
            .min_by_key(|(_, r)| r.3)
            .map(|(i, r)| (i, *r))
            .unwrap();
        if run.3 >= CHATTER_WINDOW {
            break;
        }
        let into = if idx == 0 {
            1
        } else if idx + 1 == runs.len() || runs[idx - 1].3 >= runs[idx + 1].3 {
            idx - 1
        } else {
            idx + 1
        };
        let target = &mut runs[into];
        target.1 = target.1.min(run.1);
        target.2 = target.2.max(run.2);
        target.3 += run.3;
        runs.remove(idx);
        // coalesce neighbors that now share a class
        let mut merged: Vec<(Class, usize, usize, usize)> = Vec::with_capacity(runs.len());
        for r in runs.drain(..) {
            match merged.last_mut() {
                Some(m) if m.0 == r.0 => {
                    m.2 = r.2;
                    m.3 += r.3;
                }
                _ => merged.push(r),
            }
        }
        runs = merged;
    }
    runs.iter()
        .map(|&(class, a, b, _)| Phase {
            class,
            start: grid[a],
            end: grid[b],
        })
        .collect()
}

/// Number of priority changes in `solution` after the chattering filter.
pub fn count_switches(solution: &OptimalSolution) -> usize {
    priority_phases(&solution.grid, &solution.controls, &solution.node_states)
        .len()
        .saturating_sub(1)
}

/// Control-only LP for `config`'s uniform grid.
pub fn transcribe_lp(params: &Params, state0: &State, config: &SolveConfig) -> LpInstance {
    transcribe_on_grid(params, state0, &config.uniform_grid())
}

fn extract_controls(x: &[f64], cells: usize) -> Vec<Allocation> {
    (0..cells)
        .map(|k| {
            let u1 = x[lp::u_col(Class::One, k)].clamp(0.0, 1.0);
            let u2 = x[lp::u_col(Class::Two, k)].clamp(0.0, 1.0);
            let s = u1 + u2;
            if s > 1.0 {
                Allocation { u: [u1 / s, u2 / s] }
            } else {
                Allocation { u: [u1, u2] }
            }
        })
        .collect()
}

/// Cells whose primary queues dip below `-DIP_TOLERANCE` between nodes.
fn dipping_cells(params: &Params, state0: &State, grid: &[f64], controls: &[Allocation]) -> Vec<usize> {
    let mut state = *state0;
    let mut out = Vec::new();
    for (k, a) in controls.iter().enumerate() {
        let h = grid[k + 1] - grid[k];
        let mut next = state;
        let mut dips = false;
        for c in Class::BOTH {
            let flow = ClassFlow::new(params, c, &state, ControlShape::constant(a.get(c)));
            if matches!(flow.first_hit(h, DIP_TOLERANCE), Some(t) if t < h) {
                dips = true;
            }
            next.primary[c.idx()] = flow.primary(h).max(0.0);
            next.returning[c.idx()] = flow.returning(h).max(0.0);
        }
        if dips {
            out.push(k);
        }
        state = next;
    }
    out
}

fn solve_on_grid(
    params: &Params,
    state0: &State,
    grid: &[f64],
    tolerance: f64,
) -> Result<(Vec<Allocation>, f64)> {
    let (lp, constant) = lp::staged_lp(params, state0, grid);
    let sol = lp
        .solve(IpmOptions {
            tolerance,
            ..IpmOptions::default()
        })
        .map_err(|e| match e {
            Error::Lp(msg) => Error::Lp(format!("{msg} (grid of {} cells)", grid.len() - 1)),
            other => other,
        })?;
    Ok((extract_controls(&sol.x, grid.len() - 1), sol.primal_objective + constant))
}

/// Minimum-cost piecewise-constant control on `config`'s grid.
///
/// Queue nonnegativity is imposed at the grid nodes; cells where a primary
/// queue still dips below `-DIP_TOLERANCE` are split and the LP is re-solved.
pub fn solve_optimal(params: &Params, state0: &State, config: &SolveConfig) -> Result<OptimalSolution> {
    let mut grid = config.uniform_grid();
    if state0.is_zero() {
        let controls = vec![Allocation::idle(); config.grid_points];
        return OptimalSolution::from_controls(params, state0, grid, controls);
    }
    let mut refinements = 0;
    loop {
        let (controls, lp_objective) = solve_on_grid(params, state0, &grid, config.lp_tolerance)?;
        let dips = dipping_cells(params, state0, &grid, &controls);
        if dips.is_empty() || refinements == MAX_REFINEMENTS {
            let mut sol = OptimalSolution::from_controls(params, state0, grid, controls)?;
            sol.lp_objective = lp_objective;
            sol.refinements = refinements;
            return Ok(sol);
        }
        refinements += 1;
        let mut refined = Vec::with_capacity(grid.len() + dips.len());
        let mut next_dip = dips.iter().peekable();
        for k in 0..grid.len() - 1 {
            refined.push(grid[k]);
            if next_dip.peek() == Some(&&k) {
                next_dip.next();
                refined.push(0.5 * (grid[k] + grid[k + 1]));
            }
        }
        refined.push(*grid.last().unwrap());
        grid = refined;
    }
}

/// Best policy among "prioritize `first` until `switch_time`, then the other class".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleSwitch {
    pub first: Class,
    pub switch_time: f64,
    pub cost: f64,
}

const COARSE_POINTS: usize = 41;

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimizes the simulated cost over switch times in `[0, T]` for both orderings.
///
/// A switch at time 0 is the fixed priority of the second class and is
/// reported in that form, i.e. `first = other` with the switch at the horizon.
/// Ties go to the class-1-first family.
pub fn best_single_switch(params: &Params, state0: &State, config: &SolveConfig) -> Result<SingleSwitch> {
    let horizon = config.horizon;
    let mut best: Option<SingleSwitch> = None;
    for first in Class::BOTH {
        let cost_at = |t: f64| -> Result<f64> {
            Ok(simulate(&switch_at_time(first, t), state0, params, horizon)?.accumulated_cost)
        };
        let coarse: Vec<(f64, f64)> = (0..COARSE_POINTS)
            .map(|k| {
                let t = horizon * k as f64 / (COARSE_POINTS - 1) as f64;
                cost_at(t).map(|c| (t, c))
            })
            .collect::<Result<_>>()?;
        let (kbest, _) = coarse
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .unwrap();
        let lo = coarse[kbest.saturating_sub(1)].0;
        let hi = coarse[(kbest + 1).min(COARSE_POINTS - 1)].0;
        let f = |t: f64| cost_at(t).unwrap_or(f64::INFINITY);
        let (t_g, c_g) = golden_section(f, lo, hi, 1e-10 * horizon.max(1.0));
        let (mut t, cost) = if c_g < coarse[kbest].1 {
            (t_g, c_g)
        } else {
            coarse[kbest]
        };
        let mut first = first;
        if t <= 0.0 {
            first = first.other();
            t = horizon;
        }
        let cand = SingleSwitch {
            first,
            switch_time: t,
            cost,
        };
        best = match best {
            Some(b) if b.cost <= cand.cost => Some(b),
            _ => Some(cand),
        };
    }
    Ok(best.unwrap())
}

/// Closed-form costates of the minimum principle for the holding-cost problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PontryaginCertificate {
    pub params: Params,
    pub horizon: f64,
}

impl PontryaginCertificate {
    /// `lambda_p(t) = T - t`.
    pub fn costate_p(&self, _class: Class, t: f64) -> f64 {
        self.horizon - t
    }

    /// `lambda_r(t) = T - t - (1 / gamma)(1 - e^{-gamma (T - t)})`.
    pub fn costate_r(&self, class: Class, t: f64) -> f64 {
        let g = self.params.gamma(class);
        let tau = self.horizon - t;
        tau - (1.0 - (-g * tau).exp()) / g
    }

    /// Coefficient of `u_i` in the Hamiltonian, `mu (r lambda_r - lambda_p)`.
    pub fn hamiltonian_coefficient(&self, class: Class, t: f64) -> f64 {
        self.params.mu() * (self.params.r(class) * self.costate_r(class, t) - self.costate_p(class, t))
    }

    /// Largest `|coefficient - K(T - t)|` over `times`.
    pub fn kernel_identity_residual(&self, times: &[f64]) -> f64 {
        times
            .iter()
            .flat_map(|&t| {
                Class::BOTH.map(|c| {
                    let k = crate::kernel::cumulative_kernel(&self.params, c, self.horizon - t);
                    (self.hamiltonian_coefficient(c, t) - k).abs()
                })
            })
            .fold(0.0, f64::max)
    }
}

pub fn pontryagin_certificate(params: &Params, config: &SolveConfig) -> PontryaginCertificate {
    PontryaginCertificate {
        params: *params,
        horizon: config.horizon,
    }
}
