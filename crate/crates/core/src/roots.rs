//! Scalar root finding: plain bisection, Newton with a bisection fallback,
//! and a sampled scan for the first positive-to-nonpositive crossing.

/// Bisection on a bracket where `f(lo)` and `f(hi)` have opposite signs (or
/// one of them is zero). Stops when the bracket is below `rel_tol` relative
/// to `max(|hi|, tiny)`, returning the midpoint.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= rel_tol * hi.abs().max(lo.abs()) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Newton iteration kept inside `[lo, hi]`, with `f(lo) > 0 >= f(hi)`.
/// Out-of-bracket Newton steps are replaced by bisection, and every third
/// step bisects regardless so the bracket keeps shrinking from both sides.
/// Returns the right end of the final bracket (`f <= 0` there).
pub fn newton_bisect(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for iter in 0..400 {
        let fx = f(x);
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
            if fx == 0.0 {
                return x;
            }
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let newton = x - fx / df(x);
        x = if iter % 3 != 2 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            mid
        };
        if x <= lo || x >= hi {
            break;
        }
    }
    hi
}

/// First time `s` in `(0, end]` at which `f` passes from positive to
/// nonpositive, scanning `samples` equal subintervals and also inspecting
/// interior minima between samples (detected through the sign of `df`).
///
/// A start value of exactly zero counts as positive when `df(0) > 0`.
pub fn first_crossing(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    end: f64,
    samples: usize,
) -> Option<f64> {
    if end <= 0.0 {
        return None;
    }
    let f0 = f(0.0);
    if f0 < 0.0 || (f0 == 0.0 && df(0.0) <= 0.0) {
        return None;
    }
    let n = samples.max(1);
    let mut a = 0.0;
    let mut fa = f0;
    let mut da = df(0.0);
    for k in 1..=n {
        let b = if k == n { end } else { end * k as f64 / n as f64 };
        let fb = f(b);
        let db = df(b);
        let left_positive = fa > 0.0 || (a == 0.0 && fa == 0.0);
        if left_positive && fb <= 0.0 {
            let lo = if fa > 0.0 { a } else { first_positive_after(&f, a, b) };
            return Some(newton_bisect(&f, &df, lo, b));
        }
        if left_positive && fb > 0.0 && da < 0.0 && db > 0.0 {
            // Possible dip between samples: locate the interior minimum.
            let m = bisect(&df, a, b, 1e-15);
            if f(m) <= 0.0 {
                let lo = if fa > 0.0 { a } else { first_positive_after(&f, a, m) };
                return Some(newton_bisect(&f, &df, lo, m));
            }
        }
        a = b;
        fa = fb;
        da = db;
    }
    None
}

/// A point in `(a, b)` with `f > 0`, used when the scan starts on an exact zero.
fn first_positive_after(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut h = (b - a) * 0.5;
    while h > 0.0 {
        if f(a + h) > 0.0 {
            return a + h;
        }
        h *= 0.5;
        if a + h <= a {
            break;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15);
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn newton_bisect_converges() {
        let r = newton_bisect(|x| 1.0 - x * x * x, |x| -3.0 * x * x, 0.0, 5.0);
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_crossing_of_line() {
        let t = first_crossing(|s| 1.0 - s, |_| -1.0, 3.0, 8).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        assert!(first_crossing(|s| 1.0 - s, |_| -1.0, 0.5, 8).is_none());
    }

    #[test]
    fn first_crossing_finds_dip_between_samples() {
        // Parabola dipping to -1e-3 around s = 0.5 between samples 0 and 1.
        let f = |s: f64| (s - 0.5) * (s - 0.5) - 1e-3;
        let df = |s: f64| 2.0 * (s - 0.5);
        let t = first_crossing(f, df, 1.0, 1).unwrap();
        assert!((t - (0.5 - 1e-3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn crossing_from_zero_start() {
        // Starts at zero, rises, comes back at s = 2.
        let f = |s: f64| s * (2.0 - s);
        let df = |s: f64| 2.0 - 2.0 * s;
        let t = first_crossing(f, df, 5.0, 10).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        // Zero start with nonpositive slope is not a crossing.
        assert!(first_crossing(|_| 0.0, |_| 0.0, 5.0, 10).is_none());
    }
}
