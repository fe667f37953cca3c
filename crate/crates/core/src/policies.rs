//! Priority-based scheduling policies.
//!
//! A class is *prioritized* when it gets the full capacity while its primary
//! queue is nonempty and exactly its holding rate `gamma q_r / mu` while the
//! primary queue is empty. Whatever is left goes to the other class, which is
//! itself held empty if the leftover suffices.

use crate::dynamics::{ControlLaw, ControlShape, ZERO_BAND};
use crate::model::{Allocation, Class, Params, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Prioritize one class at every state.
    FixedPriority(Class),
    /// Prioritize `first` before time `at`, the other class from `at` on.
    SwitchAtTime { first: Class, at: f64 },
    /// Prioritize `first` until the total primary backlog `q1p + q2p` first
    /// drops to `threshold`, then the other class.
    SwitchOnCurve { first: Class, threshold: f64 },
}

pub fn fixed_priority(class: Class) -> Policy {
    Policy::FixedPriority(class)
}

/// `at` may be `f64::INFINITY` (never switch). Negative times are treated as 0.
pub fn switch_at_time(first: Class, at: f64) -> Policy {
    Policy::SwitchAtTime {
        first,
        at: at.max(0.0),
    }
}

pub fn switch_on_curve(first: Class, threshold: f64) -> Policy {
    Policy::SwitchOnCurve {
        first,
        threshold: threshold.max(0.0),
    }
}

/// The class `policy` prioritizes at `(state, time)`; `None` when the system
/// holds no work at all.
pub fn priority_of(policy: &Policy, state: &State, time: f64) -> Option<Class> {
    policy.priority_at(state, time)
}

impl Policy {
    pub fn priority_at(&self, state: &State, time: f64) -> Option<Class> {
        if state.is_zero() {
            None
        } else {
            Some(self.prioritized(state, time))
        }
    }

    fn prioritized(&self, state: &State, time: f64) -> Class {
        match *self {
            Policy::FixedPriority(c) => c,
            Policy::SwitchAtTime { first, at } => {
                if time < at {
                    first
                } else {
                    first.other()
                }
            }
            Policy::SwitchOnCurve { first, threshold } => {
                if state.primary[0] + state.primary[1] > threshold {
                    first
                } else {
                    first.other()
                }
            }
        }
    }

    /// Control law in force from `(state, time)` until the next event.
    pub fn law(&self, state: &State, time: f64, params: &Params) -> ControlLaw {
        priority_law(state, params, self.prioritized(state, time))
    }

    /// Instantaneous allocation at `(state, time)`.
    pub fn allocation(&self, state: &State, time: f64, params: &Params) -> Allocation {
        self.law(state, time, params).allocation_at(0.0)
    }

    /// Next time-triggered switch strictly after `t`.
    pub fn next_switch_after(&self, t: f64) -> Option<f64> {
        match *self {
            Policy::SwitchAtTime { at, .. } if at > t && at.is_finite() => Some(at),
            _ => None,
        }
    }

    /// Backlog level whose downward crossing triggers a switch.
    pub fn backlog_threshold(&self) -> Option<f64> {
        match *self {
            Policy::SwitchOnCurve { threshold, .. } => Some(threshold),
            _ => None,
        }
    }

    /// The policy that remains after the backlog threshold has been crossed.
    pub(crate) fn after_backlog_crossing(self) -> Policy {
        match self {
            Policy::SwitchOnCurve { first, .. } => Policy::FixedPriority(first.other()),
            other => other,
        }
    }

    /// Curve policies that start at or below their threshold have already switched.
    pub(crate) fn latched_for(self, state0: &State) -> Policy {
        match self {
            Policy::SwitchOnCurve { threshold, .. }
                if state0.primary[0] + state0.primary[1] <= threshold =>
            {
                self.after_backlog_crossing()
            }
            other => other,
        }
    }
}

/// Control law that prioritizes `class` at `state`.
pub fn priority_law(state: &State, params: &Params, class: Class) -> ControlLaw {
    let band = ZERO_BAND * state.total_work().max(1.0);
    let (i, j) = (class, class.other());
    let need = |c: Class| params.gamma(c) * state.returning(c) / params.mu();

    let mut law = ControlLaw::default();
    let need_i = need(i);
    if state.primary(i) <= band && need_i <= 1.0 {
        law.shape[i.idx()] = ControlShape {
            base: 0.0,
            amp: need_i,
            rate: params.hold_decay(i),
        };
        law.held[i.idx()] = true;
    } else {
        law.shape[i.idx()] = ControlShape::constant(1.0);
    }

    let ui = law.shape[i.idx()];
    let leftover = ControlShape {
        base: 1.0 - ui.base,
        amp: -ui.amp,
        rate: ui.rate,
    };
    let need_j = need(j);
    if state.primary(j) <= band && need_j <= leftover.value(0.0) {
        law.shape[j.idx()] = ControlShape {
            base: 0.0,
            amp: need_j,
            rate: params.hold_decay(j),
        };
        law.held[j.idx()] = true;
    } else {
        law.shape[j.idx()] = leftover;
    }
    law
}
