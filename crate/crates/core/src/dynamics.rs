//! Exact propagation of the reentrant fluid dynamics.
//!
//! Given a control, each class evolves independently:
//!
//! ```text
//! d/dt q_p = -mu u + gamma q_r
//! d/dt q_r = r mu u - gamma q_r
//! ```
//!
//! Controls are represented per segment as `u(s) = base + amp * e^{-rate s}`.
//! This covers constant allocations as well as the boundary-holding allocation
//! `gamma q_r(s) / mu`, whose return queue decays at `(1 - r) gamma`, and the
//! leftover capacity handed to the other class. Every quantity below, including
//! the holding-cost integral, is evaluated in closed form.

use crate::error::{Error, Result};
use crate::model::{Allocation, Class, Params, State, CAPACITY_SLACK};
use crate::policies::Policy;
use crate::roots;
use crate::special::{conv1, conv2, conv3, decay1, decay2, decay3};

/// Absolute zero band for queue levels, scaled by `max(1, total work)`.
pub const ZERO_BAND: f64 = 1e-12;

const MAX_SEGMENTS: usize = 1_000_000;

/// `u(s) = base + amp * e^{-rate s}` over one segment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlShape {
    pub base: f64,
    pub amp: f64,
    pub rate: f64,
}

impl ControlShape {
    pub fn constant(u: f64) -> Self {
        ControlShape {
            base: u,
            amp: 0.0,
            rate: 0.0,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.base + self.amp * (-self.rate * s).exp()
    }

    /// `int_0^s u`.
    pub fn integral(&self, s: f64) -> f64 {
        self.base * s + self.amp * decay1(self.rate, s)
    }

    /// `int_0^s int_0^v u`.
    fn double_integral(&self, s: f64) -> f64 {
        0.5 * self.base * s * s + self.amp * decay2(self.rate, s)
    }

    pub fn is_constant(&self) -> bool {
        self.amp == 0.0
    }
}

/// Controls of both classes over one segment. A held class keeps its primary
/// queue identically empty.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlLaw {
    pub shape: [ControlShape; 2],
    pub held: [bool; 2],
}

impl ControlLaw {
    pub fn constant(alloc: Allocation) -> Self {
        ControlLaw {
            shape: [
                ControlShape::constant(alloc.u[0]),
                ControlShape::constant(alloc.u[1]),
            ],
            held: [false, false],
        }
    }

    pub fn allocation_at(&self, s: f64) -> Allocation {
        Allocation {
            u: [self.shape[0].value(s), self.shape[1].value(s)],
        }
    }
}

/// Closed-form evolution of a single class from `(qp, qr)` under `shape`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ClassFlow {
    r: f64,
    gamma: f64,
    mu: f64,
    qp: f64,
    qr: f64,
    shape: ControlShape,
}

impl ClassFlow {
    pub(crate) fn new(params: &Params, class: Class, state: &State, shape: ControlShape) -> Self {
        ClassFlow {
            r: params.r(class),
            gamma: params.gamma(class),
            mu: params.mu(),
            qp: state.primary(class),
            qr: state.returning(class),
            shape,
        }
    }

    pub(crate) fn returning(&self, s: f64) -> f64 {
        let ControlShape { base, amp, rate } = self.shape;
        let g = self.gamma;
        (-g * s).exp() * self.qr + self.r * self.mu * (base * decay1(g, s) + amp * conv1(g, rate, s))
    }

    /// `int_0^s q_r`.
    fn returning_integral(&self, s: f64) -> f64 {
        let ControlShape { base, amp, rate } = self.shape;
        let g = self.gamma;
        self.qr * decay1(g, s) + self.r * self.mu * (base * decay2(g, s) + amp * conv2(g, rate, s))
    }

    /// `int_0^s int_0^v q_r`.
    fn returning_double_integral(&self, s: f64) -> f64 {
        let ControlShape { base, amp, rate } = self.shape;
        let g = self.gamma;
        self.qr * decay2(g, s) + self.r * self.mu * (base * decay3(g, s) + amp * conv3(g, rate, s))
    }

    pub(crate) fn primary(&self, s: f64) -> f64 {
        self.qp - self.mu * self.shape.integral(s) + self.gamma * self.returning_integral(s)
    }

    pub(crate) fn primary_rate(&self, s: f64) -> f64 {
        -self.mu * self.shape.value(s) + self.gamma * self.returning(s)
    }

    /// `int_0^s q_p`.
    pub(crate) fn primary_cost(&self, s: f64) -> f64 {
        self.qp * s - self.mu * self.shape.double_integral(s)
            + self.gamma * self.returning_double_integral(s)
    }

    /// Scan resolution for event detection on a window of length `d`.
    fn samples(&self, d: f64) -> usize {
        let fastest = self.gamma.max(self.shape.rate);
        ((4.0 * d * fastest).ceil() as usize).clamp(16, 4096)
    }

    /// First time in `(0, d]` at which the primary queue falls to `-floor`.
    pub(crate) fn first_hit(&self, d: f64, floor: f64) -> Option<f64> {
        roots::first_crossing(
            |s| self.primary(s) + floor,
            |s| self.primary_rate(s),
            d,
            self.samples(d),
        )
    }
}

/// Per-class state derivative `(dq1p, dq1r, dq2p, dq2r)`.
pub fn drift(state: &State, alloc: &Allocation, params: &Params) -> Result<[f64; 4]> {
    if !admissible_bounds(state, params).contains(alloc) {
        return Err(Error::Inadmissible {
            time: f64::NAN,
            state: *state,
            allocation: *alloc,
        });
    }
    let mut out = [0.0; 4];
    for c in Class::BOTH {
        let (g, r, mu, u) = (params.gamma(c), params.r(c), params.mu(), alloc.get(c));
        out[2 * c.idx()] = -mu * u + g * state.returning(c);
        out[2 * c.idx() + 1] = r * mu * u - g * state.returning(c);
    }
    Ok(out)
}

/// The admissible set at a state: per-class caps plus `u1 + u2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleBounds {
    pub u_max: [f64; 2],
    pub joint_cap: f64,
}

impl AdmissibleBounds {
    pub fn contains(&self, alloc: &Allocation) -> bool {
        let [u1, u2] = alloc.u;
        let slack = CAPACITY_SLACK;
        u1 >= 0.0
            && u2 >= 0.0
            && u1 <= self.u_max[0] * (1.0 + slack) + slack
            && u2 <= self.u_max[1] * (1.0 + slack) + slack
            && u1 + u2 <= self.joint_cap + slack
    }
}

/// Boundary-holding rate `min(1, gamma q_r / mu)` of a class with an empty
/// primary queue.
pub fn holding_rate(state: &State, params: &Params, class: Class) -> f64 {
    (params.gamma(class) * state.returning(class) / params.mu()).min(1.0)
}

pub fn admissible_bounds(state: &State, params: &Params) -> AdmissibleBounds {
    let band = ZERO_BAND * state.total_work().max(1.0);
    let cap = |c: Class| {
        if state.primary(c) > band {
            1.0
        } else {
            holding_rate(state, params, c)
        }
    };
    AdmissibleBounds {
        u_max: [cap(Class::One), cap(Class::Two)],
        joint_cap: 1.0,
    }
}

/// Advance `state` by `dt` under a fixed allocation, exactly.
///
/// The caller promises no primary queue crosses zero inside the interval; a
/// crossing beyond the zero band is reported with its bracketing times.
pub fn propagate_constant_control(
    state: &State,
    alloc: &Allocation,
    params: &Params,
    dt: f64,
) -> Result<State> {
    if dt < 0.0 {
        return Err(Error::NegativeTime(dt));
    }
    if !admissible_bounds(state, params).contains(alloc) {
        return Err(Error::Inadmissible {
            time: 0.0,
            state: *state,
            allocation: *alloc,
        });
    }
    let band = ZERO_BAND * state.total_work().max(1.0);
    let law = ControlLaw::constant(*alloc);
    for c in Class::BOTH {
        let flow = ClassFlow::new(params, c, state, law.shape[c.idx()]);
        if let Some(hit) = flow.first_hit(dt, band) {
            return Err(Error::BoundaryViolation {
                class: c,
                lo: hit,
                hi: dt,
            });
        }
    }
    Ok(clamp_band(propagate_law(state, &law, params, dt), band))
}

/// First time the primary queue of `class` reaches zero under a constant
/// allocation, or `None` if it stays positive forever.
pub fn hit_time(state: &State, alloc: &Allocation, params: &Params, class: Class) -> Option<f64> {
    let u = alloc.get(class);
    if u <= 0.0 {
        // q_p is nondecreasing without service
        return None;
    }
    // q_p + q_r falls at (1 - r) mu u and q_r >= 0, so q_p is gone by then.
    let work = state.primary(class) + state.returning(class);
    let bound = work / ((1.0 - params.r(class)) * params.mu() * u);
    let end = bound * (1.0 + 1e-9) + f64::MIN_POSITIVE;
    let flow = ClassFlow::new(params, class, state, ControlShape::constant(u));
    flow.first_hit(end, 0.0)
}

/// State after running `law` for `s` time units (unclamped, except that held
/// classes stay exactly empty).
pub fn propagate_law(state: &State, law: &ControlLaw, params: &Params, s: f64) -> State {
    let mut next = State::zero();
    for c in Class::BOTH {
        let flow = ClassFlow::new(params, c, state, law.shape[c.idx()]);
        let i = c.idx();
        next.returning[i] = flow.returning(s);
        next.primary[i] = if law.held[i] { 0.0 } else { flow.primary(s) };
    }
    next
}

/// Holding cost `int_0^s (q1p + q2p)` accrued while running `law`.
pub fn law_cost(state: &State, law: &ControlLaw, params: &Params, s: f64) -> f64 {
    Class::BOTH
        .iter()
        .filter(|c| !law.held[c.idx()])
        .map(|&c| ClassFlow::new(params, c, state, law.shape[c.idx()]).primary_cost(s))
        .sum()
}

fn clamp_band(mut s: State, band: f64) -> State {
    for v in s.primary.iter_mut().chain(s.returning.iter_mut()) {
        if *v < 0.0 && *v >= -band {
            *v = 0.0;
        }
    }
    s
}

/// One piece of a trajectory on which the control law is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub state: State,
    pub law: ControlLaw,
}

impl Segment {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// A piecewise-analytic sample path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub horizon: f64,
    pub initial_state: State,
    pub final_state: State,
    pub accumulated_cost: f64,
    pub params: Params,
}

impl Trajectory {
    /// `(time, state, allocation)` at each segment start.
    pub fn breakpoints(&self) -> Vec<(f64, State, Allocation)> {
        self.segments
            .iter()
            .map(|seg| (seg.start, seg.state, seg.law.allocation_at(0.0)))
            .collect()
    }

    fn segment_index(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() {
            return None;
        }
        let idx = self.segments.partition_point(|seg| seg.start <= t);
        Some(idx.saturating_sub(1))
    }

    pub fn state_at(&self, t: f64) -> State {
        if t >= self.horizon {
            return self.final_state;
        }
        match self.segment_index(t) {
            None => self.initial_state,
            Some(i) => {
                let seg = &self.segments[i];
                let s = (t - seg.start).clamp(0.0, seg.duration);
                let mut st = propagate_law(&seg.state, &seg.law, &self.params, s);
                for v in st.primary.iter_mut().chain(st.returning.iter_mut()) {
                    *v = v.max(0.0);
                }
                st
            }
        }
    }

    pub fn allocation_at(&self, t: f64) -> Allocation {
        match self.segment_index(t.min(self.horizon)) {
            None => Allocation::idle(),
            Some(i) => {
                let seg = &self.segments[i];
                seg.law.allocation_at((t - seg.start).clamp(0.0, seg.duration))
            }
        }
    }

    /// `int_a^b u_class`.
    pub fn control_integral(&self, class: Class, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(0.0), b.min(self.horizon));
        self.segments
            .iter()
            .filter(|seg| seg.end() > a && seg.start < b)
            .map(|seg| {
                let shape = &seg.law.shape[class.idx()];
                let lo = (a - seg.start).max(0.0);
                let hi = (b - seg.start).min(seg.duration);
                shape.integral(hi) - shape.integral(lo)
            })
            .sum()
    }

    /// Holding cost accrued on `[0, t]`.
    pub fn cost_until(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for seg in &self.segments {
            if seg.start >= t {
                break;
            }
            let s = (t - seg.start).min(seg.duration);
            acc += law_cost(&seg.state, &seg.law, &self.params, s);
        }
        acc
    }

    /// Time after which the state is identically zero, if that happens.
    pub fn idle_from(&self) -> Option<f64> {
        if self.initial_state.is_zero() {
            return Some(0.0);
        }
        self.segments
            .iter()
            .find(|seg| seg.state.is_zero())
            .map(|seg| seg.start)
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "horizon must be finite and nonnegative, got {horizon}"
        )));
    }
    Ok(())
}

/// Closed-loop simulation of `policy` from `state0` over `[0, horizon]`.
///
/// Segments end at boundary hits of a primary queue, at policy switches and
/// at the horizon. The cost is the exact integral of `q1p + q2p`.
pub fn simulate(policy: &Policy, state0: &State, params: &Params, horizon: f64) -> Result<Trajectory> {
    check_horizon(horizon)?;
    let band = ZERO_BAND * state0.total_work().max(1.0);
    let mut policy = policy.latched_for(state0);
    let mut t = 0.0;
    let mut state = *state0;
    let mut segments = Vec::new();
    let mut cost = 0.0;

    while t < horizon {
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::TooManySegments(MAX_SEGMENTS));
        }
        let law = policy.law(&state, t, params);
        let start_alloc = law.allocation_at(0.0);
        if !admissible_bounds(&state, params).contains(&start_alloc) {
            return Err(Error::Inadmissible {
                time: t,
                state,
                allocation: start_alloc,
            });
        }

        let mut d = horizon - t;
        let mut ends_at_switch = None;
        if let Some(ts) = policy.next_switch_after(t) {
            if ts - t < d {
                d = ts - t;
                ends_at_switch = Some(ts);
            }
        }

        let flows = Class::BOTH.map(|c| ClassFlow::new(params, c, &state, law.shape[c.idx()]));
        let mut hit = [None, None];
        for c in Class::BOTH {
            if !law.held[c.idx()] {
                hit[c.idx()] = flows[c.idx()].first_hit(d, 0.0);
            }
        }
        let mut curve_hit = None;
        if let Some(threshold) = policy.backlog_threshold() {
            let backlog = |s: f64| flows[0].primary(s) + flows[1].primary(s) - threshold;
            let rate = |s: f64| flows[0].primary_rate(s) + flows[1].primary_rate(s);
            curve_hit = roots::first_crossing(
                backlog,
                rate,
                d,
                flows[0].samples(d).max(flows[1].samples(d)),
            );
        }

        let first = hit
            .iter()
            .chain(std::iter::once(&curve_hit))
            .flatten()
            .fold(f64::INFINITY, |m, &h| m.min(h));
        if first < d {
            d = first;
            ends_at_switch = None;
        }

        let mut next = propagate_law(&state, &law, params, d);
        for c in Class::BOTH {
            let i = c.idx();
            let hit_now = matches!(hit[i], Some(h) if h <= d * (1.0 + 1e-12) + band);
            if hit_now || next.primary[i].abs() <= band {
                next.primary[i] = 0.0;
            }
        }
        if next.components().iter().any(|v| *v < -band) {
            let class = if next.primary[0] < -band { Class::One } else { Class::Two };
            return Err(Error::BoundaryViolation {
                class,
                lo: t,
                hi: t + d,
            });
        }
        for v in next.primary.iter_mut().chain(next.returning.iter_mut()) {
            *v = v.max(0.0);
        }

        cost += law_cost(&state, &law, params, d);
        segments.push(Segment {
            start: t,
            duration: d,
            state,
            law,
        });
        if matches!(curve_hit, Some(h) if h <= d) {
            policy = policy.after_backlog_crossing();
        }
        t = match ends_at_switch {
            Some(ts) => ts,
            None => t + d,
        };
        state = next;
    }

    Ok(Trajectory {
        segments,
        horizon,
        initial_state: *state0,
        final_state: state,
        accumulated_cost: cost,
        params: *params,
    })
}

/// Open-loop simulation of piecewise-constant controls given as
/// `(duration, allocation)` cells. A primary queue dipping below `-tolerance`
/// inside a cell is a [`Error::BoundaryViolation`]; smaller excursions are
/// clamped at cell ends.
pub fn simulate_controls(
    state0: &State,
    params: &Params,
    cells: &[(f64, Allocation)],
    tolerance: f64,
) -> Result<Trajectory> {
    let mut t = 0.0;
    let mut state = *state0;
    let mut segments = Vec::with_capacity(cells.len());
    let mut cost = 0.0;
    for &(d, alloc) in cells {
        if d < 0.0 {
            return Err(Error::NegativeTime(d));
        }
        let [u1, u2] = alloc.u;
        if u1 < 0.0 || u2 < 0.0 || u1 + u2 > 1.0 + CAPACITY_SLACK {
            return Err(Error::Inadmissible {
                time: t,
                state,
                allocation: alloc,
            });
        }
        let law = ControlLaw::constant(alloc);
        for c in Class::BOTH {
            let flow = ClassFlow::new(params, c, &state, law.shape[c.idx()]);
            if let Some(h) = flow.first_hit(d, tolerance) {
                if h < d || flow.primary(d) < -tolerance {
                    return Err(Error::BoundaryViolation {
                        class: c,
                        lo: t,
                        hi: t + h,
                    });
                }
            }
        }
        let mut next = propagate_law(&state, &law, params, d);
        for v in next.primary.iter_mut().chain(next.returning.iter_mut()) {
            *v = v.max(0.0);
        }
        cost += law_cost(&state, &law, params, d);
        segments.push(Segment {
            start: t,
            duration: d,
            state,
            law,
        });
        t += d;
        state = next;
    }
    Ok(Trajectory {
        segments,
        horizon: t,
        initial_state: *state0,
        final_state: state,
        accumulated_cost: cost,
        params: *params,
    })
}
