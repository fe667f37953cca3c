//! Model constants, queue states, capacity allocations and the regime split.

use std::fmt;

use crate::error::{Error, Result};

/// One of the two job classes. Class 1 always has the smaller return probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::One, Class::Two];

    /// Zero-based index, for per-class arrays.
    pub fn idx(self) -> usize {
        match self {
            Class::One => 0,
            Class::Two => 1,
        }
    }

    pub fn other(self) -> Class {
        match self {
            Class::One => Class::Two,
            Class::Two => Class::One,
        }
    }

    /// Parses the 1-based class number.
    pub fn from_number(n: u32) -> Option<Class> {
        match n {
            1 => Some(Class::One),
            2 => Some(Class::Two),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        self.idx() as u32 + 1
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Return probabilities `r`, return rates `gamma` and the service capacity `mu`.
///
/// Constructed only through [`Params::new`], which enforces
/// `0 < r1 < r2 < 1` and strictly positive rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    r: [f64; 2],
    gamma: [f64; 2],
    mu: f64,
}

impl Params {
    pub fn new(r1: f64, r2: f64, gamma1: f64, gamma2: f64, mu: f64) -> Result<Self> {
        let all = [r1, r2, gamma1, gamma2, mu];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "all constants must be finite, got {all:?}"
            )));
        }
        if !(0.0 < r1 && r1 < r2 && r2 < 1.0) {
            return Err(Error::InvalidParams(format!(
                "return probabilities must satisfy 0 < r1 < r2 < 1 (r1 = {r1}, r2 = {r2})"
            )));
        }
        if gamma1 <= 0.0 || gamma2 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "return rates must be positive (gamma1 = {gamma1}, gamma2 = {gamma2})"
            )));
        }
        if mu <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "service rate must be positive (mu = {mu})"
            )));
        }
        Ok(Params {
            r: [r1, r2],
            gamma: [gamma1, gamma2],
            mu,
        })
    }

    /// Reference parameter set, used by the start grid and the gap table:
    /// `r = (0.2, 0.8)`, `gamma = (2, 0.2)`, `mu = 2`.
    pub fn reference() -> Self {
        Params::new(0.2, 0.8, 2.0, 0.2, 2.0).expect("reference parameters are valid")
    }

    pub fn r(&self, class: Class) -> f64 {
        self.r[class.idx()]
    }

    pub fn gamma(&self, class: Class) -> f64 {
        self.gamma[class.idx()]
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Effective return rate `r_i * gamma_i`.
    pub fn kappa(&self, class: Class) -> f64 {
        self.r(class) * self.gamma(class)
    }

    /// Decay rate `(1 - r_i) gamma_i` of the return queue while the primary
    /// queue is held empty.
    pub fn hold_decay(&self, class: Class) -> f64 {
        (1.0 - self.r(class)) * self.gamma(class)
    }

    /// Copy with both return rates multiplied by `c`.
    pub fn with_scaled_gammas(&self, c: f64) -> Result<Self> {
        Params::new(
            self.r[0],
            self.r[1],
            c * self.gamma[0],
            c * self.gamma[1],
            self.mu,
        )
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self)
    }
}

pub fn effective_return_rate(params: &Params, class: Class) -> f64 {
    params.kappa(class)
}

/// Which of the two structural regimes a parameter set falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `kappa1 <= kappa2`: always prioritizing class 1 is optimal.
    FixedPriorityOptimal,
    /// `kappa1 > kappa2`: every fixed priority rule is beaten somewhere.
    StateDependentNeeded,
}

/// Exact comparison of the two effective return rates; the tie belongs to
/// the fixed-priority side.
pub fn classify_regime(params: &Params) -> Regime {
    if params.kappa(Class::One) <= params.kappa(Class::Two) {
        Regime::FixedPriorityOptimal
    } else {
        Regime::StateDependentNeeded
    }
}

/// Work levels `(q1p, q1r, q2p, q2r)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub primary: [f64; 2],
    pub returning: [f64; 2],
}

impl State {
    pub fn new(q1p: f64, q1r: f64, q2p: f64, q2r: f64) -> Result<Self> {
        let s = State {
            primary: [q1p, q2p],
            returning: [q1r, q2r],
        };
        if s.components().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidState(format!(
                "queue levels must be finite and nonnegative, got {:?}",
                s.components()
            )));
        }
        Ok(s)
    }

    pub fn zero() -> Self {
        State::default()
    }

    /// The symmetric start `(eps, 0, eps, 0)`.
    pub fn symmetric(eps: f64) -> Result<Self> {
        State::new(eps, 0.0, eps, 0.0)
    }

    pub fn primary(&self, class: Class) -> f64 {
        self.primary[class.idx()]
    }

    pub fn returning(&self, class: Class) -> f64 {
        self.returning[class.idx()]
    }

    /// `(q1p, q1r, q2p, q2r)`.
    pub fn components(&self) -> [f64; 4] {
        [
            self.primary[0],
            self.returning[0],
            self.primary[1],
            self.returning[1],
        ]
    }

    pub fn is_zero(&self) -> bool {
        self.components().iter().all(|v| *v == 0.0)
    }

    /// Sum of all four queue levels.
    pub fn total_work(&self) -> f64 {
        self.components().iter().sum()
    }
}

/// Primary plus returning work of one class.
pub fn total_class_work(state: &State, class: Class) -> f64 {
    state.primary(class) + state.returning(class)
}

/// Capacity fractions `(u1, u2)` with `u_i >= 0` and `u1 + u2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Allocation {
    pub u: [f64; 2],
}

/// Slack tolerated on `u1 + u2 <= 1` from rounding.
pub(crate) const CAPACITY_SLACK: f64 = 1e-12;

impl Allocation {
    pub fn new(u1: f64, u2: f64) -> Result<Self> {
        let reason = if !u1.is_finite() || !u2.is_finite() {
            Some("fractions must be finite")
        } else if u1 < 0.0 || u2 < 0.0 {
            Some("fractions must be nonnegative")
        } else if u1 + u2 > 1.0 + CAPACITY_SLACK {
            Some("fractions must sum to at most 1")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidAllocation {
                u1,
                u2,
                reason: reason.to_string(),
            }),
            None => Ok(Allocation { u: [u1, u2] }),
        }
    }

    pub fn idle() -> Self {
        Allocation::default()
    }

    pub fn get(&self, class: Class) -> f64 {
        self.u[class.idx()]
    }

    /// `w * self + (1 - w) * other`.
    pub fn blend(&self, other: &Allocation, w: f64) -> Allocation {
        Allocation {
            u: [
                w * self.u[0] + (1.0 - w) * other.u[0],
                w * self.u[1] + (1.0 - w) * other.u[1],
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_return_rates_of_reference_params() {
        let p = Params::reference();
        assert_eq!(effective_return_rate(&p, Class::One), 0.2 * 2.0);
        assert!((effective_return_rate(&p, Class::One) - 0.4).abs() < 1e-15);
        assert!((effective_return_rate(&p, Class::Two) - 0.16).abs() < 1e-15);
    }

    #[test]
    fn zero_return_rate_is_rejected() {
        assert!(Params::new(0.2, 0.5, 1.0, 0.0, 1.0).is_err());
        assert!(Params::new(0.5, 0.8, 0.0, 1.0, 1.0).is_err());
        assert!(Params::new(0.2, 0.8, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn return_probabilities_must_be_ordered() {
        assert!(Params::new(0.8, 0.2, 1.0, 1.0, 1.0).is_err());
        assert!(Params::new(0.5, 0.5, 1.0, 1.0, 1.0).is_err());
        assert!(Params::new(0.0, 0.5, 1.0, 1.0, 1.0).is_err());
        assert!(Params::new(0.2, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(Params::new(0.2, f64::NAN, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn regimes() {
        assert_eq!(
            classify_regime(&Params::reference()),
            Regime::StateDependentNeeded
        );
        let p = Params::new(0.2, 0.8, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(classify_regime(&p), Regime::FixedPriorityOptimal);
        // kappa1 = 0.4 = kappa2
        let p = Params::new(0.2, 0.8, 2.0, 0.5, 1.0).unwrap();
        assert_eq!(p.kappa(Class::One), p.kappa(Class::Two));
        assert_eq!(classify_regime(&p), Regime::FixedPriorityOptimal);
    }

    #[test]
    fn class_work_sums() {
        let s = State::new(2.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(total_class_work(&s, Class::One), 2.0);
        assert_eq!(total_class_work(&State::zero(), Class::Two), 0.0);
        let s = State::new(1.5, 0.25, 0.0, 0.0).unwrap();
        assert_eq!(total_class_work(&s, Class::One), 1.75);
    }

    #[test]
    fn negative_state_rejected() {
        assert!(State::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn allocation_bounds() {
        assert!(Allocation::new(0.5, 0.5).is_ok());
        assert!(Allocation::new(0.6, 0.5).is_err());
        assert!(Allocation::new(-0.1, 0.5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = Params> {
            (0.01f64..0.98, 0.01f64..0.99, 0.01f64..20.0, 0.01f64..20.0, 0.1f64..10.0)
                .prop_filter_map("ordered r", |(a, b, g1, g2, mu)| {
                    let (r1, r2) = (a.min(b), a.max(b));
                    Params::new(r1, r2, g1, g2, mu).ok()
                })
        }

        proptest! {
            #[test]
            fn kappas_positive(p in params()) {
                prop_assert!(p.kappa(Class::One) > 0.0);
                prop_assert!(p.kappa(Class::Two) > 0.0);
            }

            #[test]
            fn regime_invariant_under_gamma_scaling(p in params(), c in 0.01f64..100.0) {
                let scaled = p.with_scaled_gammas(c).unwrap();
                prop_assert_eq!(classify_regime(&p), classify_regime(&scaled));
            }

            #[test]
            fn allocations_closed_under_convex_combination(
                a1 in 0.0f64..1.0, a2 in 0.0f64..1.0,
                b1 in 0.0f64..1.0, b2 in 0.0f64..1.0,
                w in 0.0f64..=1.0,
            ) {
                let a = Allocation::new(a1, a2 * (1.0 - a1)).unwrap();
                let b = Allocation::new(b1 * (1.0 - b2), b2).unwrap();
                let c = a.blend(&b, w);
                prop_assert!(Allocation::new(c.u[0], c.u[1]).is_ok());
            }
        }
    }
}
