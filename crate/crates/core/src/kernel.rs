//! Kernel representation of the holding cost.
//!
//! Under any control, `q_p(t) = q_p(0) + (1 - e^{-gamma t}) q_r(0) + int_0^t k(t - s) u(s) ds`
//! with `k(tau) = mu [(r - 1) - r e^{-gamma tau}]`. Integrating over the
//! horizon splits the cost into a part fixed by the initial state and a part
//! linear in the control with weights `K(T - s)`, `K` the antiderivative of `k`.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::model::{Class, Params, State};
use crate::special::{conv1, decay1, decay2, ramp_decay};

pub fn kernel_k(params: &Params, class: Class, tau: f64) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::NegativeTime(tau));
    }
    Ok(kernel_k_unchecked(params, class, tau))
}

pub(crate) fn kernel_k_unchecked(params: &Params, class: Class, tau: f64) -> f64 {
    let (r, g) = (params.r(class), params.gamma(class));
    params.mu() * ((r - 1.0) - r * (-g * tau).exp())
}

/// Cumulative kernel `K(tau) = int_0^tau k`.
#[allow(non_snake_case)]
pub fn kernel_K(params: &Params, class: Class, tau: f64) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::NegativeTime(tau));
    }
    Ok(cumulative_kernel(params, class, tau))
}

pub(crate) fn cumulative_kernel(params: &Params, class: Class, tau: f64) -> f64 {
    let (r, g) = (params.r(class), params.gamma(class));
    params.mu() * ((r - 1.0) * tau - r * decay1(g, tau))
}

/// `C_T(q0) + sum_i int u_i(s) K_i(T - s) ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostDecomposition {
    pub constant_part: f64,
    pub control_part: f64,
    pub total: f64,
}

/// Part of the cost fixed by the initial state:
/// `sum_i int_0^T [q_p,i(0) + (1 - e^{-gamma_i t}) q_r,i(0)] dt`.
pub fn initial_state_cost(state0: &State, params: &Params, horizon: f64) -> f64 {
    Class::BOTH
        .iter()
        .map(|&c| {
            let g = params.gamma(c);
            state0.primary(c) * horizon + state0.returning(c) * g * decay2(g, horizon)
        })
        .sum()
}

/// Exact `int_{s0}^{s0+d} (base + amp e^{-rate (s - s0)}) K(T - s) ds`, where
/// `tau0 = T - s0`.
pub(crate) fn weighted_kernel_integral(
    params: &Params,
    class: Class,
    tau0: f64,
    d: f64,
    base: f64,
    amp: f64,
    rate: f64,
) -> f64 {
    let (r, g, mu) = (params.r(class), params.gamma(class), params.mu());
    // tau0 - d = T - s1 >= 0; keep it exact when the segment ends at T
    let tail = (tau0 - d).max(0.0);
    let tail_decay = (-g * tail).exp();

    // constant weight pieces
    let lin = tau0 * d - 0.5 * d * d; // int (tau0 - v)
    let ret = d - tail_decay * decay1(g, d); // int (1 - e^{-g (tau0 - v)})
    let mut acc = base * ((r - 1.0) * lin - (r / g) * ret);

    if amp != 0.0 {
        let lin_e = tau0 * decay1(rate, d) - ramp_decay(rate, d);
        let ret_e = decay1(rate, d) - tail_decay * conv1(g, rate, d);
        acc += amp * ((r - 1.0) * lin_e - (r / g) * ret_e);
    }
    mu * acc
}

/// Cost of `trajectory` split into the initial-state part and the kernel-weighted
/// control part, each evaluated in closed form.
pub fn cost_via_kernel(
    trajectory: &Trajectory,
    state0: &State,
    params: &Params,
    horizon: f64,
) -> Result<CostDecomposition> {
    let covered = trajectory.horizon;
    if (covered - horizon).abs() > 1e-12 * horizon.abs().max(1.0) {
        return Err(Error::HorizonMismatch {
            expected: horizon,
            found: covered,
        });
    }
    let constant_part = initial_state_cost(state0, params, horizon);
    let mut control_part = 0.0;
    for seg in &trajectory.segments {
        let tau0 = horizon - seg.start;
        for c in Class::BOTH {
            let shape = seg.law.shape[c.idx()];
            control_part += weighted_kernel_integral(
                params,
                c,
                tau0,
                seg.duration,
                shape.base,
                shape.amp,
                shape.rate,
            );
        }
    }
    Ok(CostDecomposition {
        constant_part,
        control_part,
        total: constant_part + control_part,
    })
}

/// Outcome of checking the sign and ordering of the cumulative kernels on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Report {
    /// `K_1, K_2 <= 1e-12` on the whole grid.
    pub all_nonpositive: bool,
    /// `K_1 <= K_2 + 1e-12` on the grid; `None` when `kappa1 > kappa2`.
    pub dominance_holds: Option<bool>,
    /// `max(K_1, K_2)` over the grid.
    pub worst_sign: f64,
    /// `max(K_1 - K_2)` over the grid (only meaningful with dominance).
    pub worst_dominance: f64,
}

pub const LEMMA1_TOLERANCE: f64 = 1e-12;

pub fn lemma1_check(params: &Params, tau_grid: &[f64]) -> Lemma1Report {
    lemma1_check_with(params, tau_grid, cumulative_kernel)
}

/// Same check with a caller-supplied cumulative kernel.
pub fn lemma1_check_with(
    params: &Params,
    tau_grid: &[f64],
    kernel: impl Fn(&Params, Class, f64) -> f64,
) -> Lemma1Report {
    let mut worst_sign = f64::NEG_INFINITY;
    let mut worst_dominance = f64::NEG_INFINITY;
    for &tau in tau_grid {
        let k1 = kernel(params, Class::One, tau);
        let k2 = kernel(params, Class::Two, tau);
        worst_sign = worst_sign.max(k1).max(k2);
        worst_dominance = worst_dominance.max(k1 - k2);
    }
    let applicable = params.kappa(Class::One) <= params.kappa(Class::Two);
    Lemma1Report {
        all_nonpositive: worst_sign <= LEMMA1_TOLERANCE,
        dominance_holds: applicable.then_some(worst_dominance <= LEMMA1_TOLERANCE),
        worst_sign,
        worst_dominance,
    }
}

/// `[0, 100 / min(gamma1, gamma2)]` with `points` evenly spaced nodes.
pub fn default_tau_grid(params: &Params, points: usize) -> Vec<f64> {
    let end = 100.0 / params.gamma(Class::One).min(params.gamma(Class::Two));
    let n = points.max(2);
    (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect()
}
