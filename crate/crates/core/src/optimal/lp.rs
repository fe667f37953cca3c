//! Linear programs obtained by holding the controls constant on each grid cell.
//!
//! Two equivalent formulations are built. [`LpInstance`] keeps only the control
//! variables, with every node state written affinely in the controls through
//! the kernel. [`staged_lp`] keeps the node states as variables, which makes
//! the constraint matrix block-bidiagonal and lets the interior-point solver
//! factor its normal equations in linear time.

use super::ipm::StandardLp;
use crate::kernel::{cumulative_kernel, initial_state_cost, weighted_kernel_integral};
use crate::model::{Allocation, Class, Params, State};
use crate::special::{decay1, decay2, decay3};

/// Exact one-cell maps of a class under a constant control `u` over width `h`:
///
/// ```text
/// q_r' = e q_r + alpha u
/// q_p' = q_p + beta q_r + delta u
/// int q_p = h q_p + cost_r q_r + cost_u u
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CellMap {
    pub e: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub cost_r: f64,
    pub cost_u: f64,
}

impl CellMap {
    pub(crate) fn new(params: &Params, class: Class, h: f64) -> Self {
        let (r, g, mu) = (params.r(class), params.gamma(class), params.mu());
        let e1 = decay1(g, h);
        let f = decay2(g, h);
        CellMap {
            e: (-g * h).exp(),
            alpha: r * mu * e1,
            beta: g * e1,
            delta: -mu * h + g * r * mu * f,
            cost_r: g * f,
            cost_u: -0.5 * mu * h * h + g * r * mu * decay3(g, h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `sum a x >= rhs`
    AtLeast,
    /// `sum a x <= rhs`
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `u_i[k] >= 0`
    Bound { class: Class, cell: usize },
    /// `u_1[k] + u_2[k] <= 1`
    JointCapacity { cell: usize },
    /// `q_i^p(t_m) >= 0`
    PrimaryNonnegative { class: Class, node: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub kind: RowKind,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.lhs(x);
        match self.sense {
            Sense::AtLeast => (self.rhs - v).max(0.0),
            Sense::AtMost => (v - self.rhs).max(0.0),
        }
    }
}

/// Control-only transcription. Variable `2 k + i` is `u_{i+1}` on cell `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub grid: Vec<f64>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub constraints: Vec<LinearConstraint>,
}

impl LpInstance {
    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn num_cells(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn flatten(controls: &[Allocation]) -> Vec<f64> {
        controls.iter().flat_map(|a| a.u).collect()
    }

    /// Holding cost of piecewise-constant `controls`.
    pub fn evaluate(&self, controls: &[Allocation]) -> f64 {
        let x = Self::flatten(controls);
        self.objective_constant + self.objective.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>()
    }

    pub fn max_violation(&self, controls: &[Allocation]) -> f64 {
        let x = Self::flatten(controls);
        self.constraints
            .iter()
            .map(|c| c.violation(&x))
            .fold(0.0, f64::max)
    }
}

/// Control-only transcription on the grid `nodes` (`nodes[0] = 0`, last node = horizon).
pub fn transcribe_on_grid(params: &Params, state0: &State, nodes: &[f64]) -> LpInstance {
    let n = nodes.len() - 1;
    let horizon = nodes[n];
    let var = |c: Class, k: usize| 2 * k + c.idx();

    let mut objective = vec![0.0; 2 * n];
    for k in 0..n {
        let h = nodes[k + 1] - nodes[k];
        for c in Class::BOTH {
            objective[var(c, k)] =
                weighted_kernel_integral(params, c, horizon - nodes[k], h, 1.0, 0.0, 0.0);
        }
    }

    let mut constraints = Vec::with_capacity(5 * n + 2);
    for k in 0..n {
        for c in Class::BOTH {
            constraints.push(LinearConstraint {
                kind: RowKind::Bound { class: c, cell: k },
                terms: vec![(var(c, k), 1.0)],
                sense: Sense::AtLeast,
                rhs: 0.0,
            });
        }
    }
    for k in 0..n {
        constraints.push(LinearConstraint {
            kind: RowKind::JointCapacity { cell: k },
            terms: vec![(var(Class::One, k), 1.0), (var(Class::Two, k), 1.0)],
            sense: Sense::AtMost,
            rhs: 1.0,
        });
    }
    for m in 0..=n {
        let tm = nodes[m];
        for c in Class::BOTH {
            let g = params.gamma(c);
            let free = state0.primary(c) + (1.0 - (-g * tm).exp()) * state0.returning(c);
            let terms = (0..m)
                .map(|k| {
                    let a = cumulative_kernel(params, c, tm - nodes[k])
                        - cumulative_kernel(params, c, tm - nodes[k + 1]);
                    (var(c, k), a)
                })
                .collect();
            constraints.push(LinearConstraint {
                kind: RowKind::PrimaryNonnegative { class: c, node: m },
                terms,
                sense: Sense::AtLeast,
                rhs: -free,
            });
        }
    }

    LpInstance {
        grid: nodes.to_vec(),
        objective,
        objective_constant: initial_state_cost(state0, params, horizon),
        constraints,
    }
}

/// Column layout of the staged formulation: per cell `k`, seven variables
/// `[u1, u2, slack, q1r, q1p, q2r, q2p]` (states at node `k + 1`) and five
/// rows `[capacity, r1, p1, r2, p2]`.
pub(crate) const VARS_PER_CELL: usize = 7;
const ROWS_PER_CELL: usize = 5;

pub(crate) fn u_col(c: Class, k: usize) -> usize {
    VARS_PER_CELL * k + c.idx()
}

pub(crate) fn qr_col(c: Class, k: usize) -> usize {
    VARS_PER_CELL * k + 3 + 2 * c.idx()
}

pub(crate) fn qp_col(c: Class, k: usize) -> usize {
    VARS_PER_CELL * k + 4 + 2 * c.idx()
}

fn r_row(c: Class, k: usize) -> usize {
    ROWS_PER_CELL * k + 1 + 2 * c.idx()
}

fn p_row(c: Class, k: usize) -> usize {
    ROWS_PER_CELL * k + 2 + 2 * c.idx()
}

/// State-augmented standard-form LP and the constant part of its objective.
pub(crate) fn staged_lp(params: &Params, state0: &State, nodes: &[f64]) -> (StandardLp, f64) {
    let n = nodes.len() - 1;
    let maps: Vec<[CellMap; 2]> = (0..n)
        .map(|k| {
            let h = nodes[k + 1] - nodes[k];
            Class::BOTH.map(|c| CellMap::new(params, c, h))
        })
        .collect();

    let mut columns = vec![Vec::new(); VARS_PER_CELL * n];
    let mut c = vec![0.0; VARS_PER_CELL * n];
    let mut b = vec![0.0; ROWS_PER_CELL * n];
    let mut constant = 0.0;

    for k in 0..n {
        let h = nodes[k + 1] - nodes[k];
        let cap = ROWS_PER_CELL * k;
        b[cap] = 1.0;
        columns[VARS_PER_CELL * k + 2].push((cap, 1.0));
        for cl in Class::BOTH {
            let m = maps[k][cl.idx()];
            let u = u_col(cl, k);
            columns[u].push((cap, 1.0));
            columns[u].push((r_row(cl, k), -m.alpha));
            columns[u].push((p_row(cl, k), -m.delta));
            c[u] = m.cost_u;

            columns[qr_col(cl, k)].push((r_row(cl, k), 1.0));
            columns[qp_col(cl, k)].push((p_row(cl, k), 1.0));
            if k + 1 < n {
                let next = maps[k + 1][cl.idx()];
                let hn = nodes[k + 2] - nodes[k + 1];
                columns[qr_col(cl, k)].push((r_row(cl, k + 1), -next.e));
                columns[qr_col(cl, k)].push((p_row(cl, k + 1), -next.beta));
                columns[qp_col(cl, k)].push((p_row(cl, k + 1), -1.0));
                c[qr_col(cl, k)] = next.cost_r;
                c[qp_col(cl, k)] = hn;
            }
            if k == 0 {
                let (qp, qr) = (state0.primary(cl), state0.returning(cl));
                b[r_row(cl, 0)] = m.e * qr;
                b[p_row(cl, 0)] = qp + m.beta * qr;
                constant += h * qp + m.cost_r * qr;
            }
        }
    }
    let rows = ROWS_PER_CELL * n;
    (StandardLp { rows, columns, b, c }, constant)
}
