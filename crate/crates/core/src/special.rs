//! Exponential integrals that appear in the closed-form propagation.
//!
//! Everything is written in terms of `phi_k(z) = sum_{n>=0} z^n / (n+k)!`
//! evaluated at `z = -a s <= 0`, which avoids the cancellation in
//! expressions such as `(s - (1 - e^{-as})/a) / a` for small `a s`.

/// `phi_1`, `phi_2`, `phi_3` at `z`.
pub fn phis(z: f64) -> [f64; 3] {
    if z.abs() < 0.5 {
        let mut term = 1.0 / 6.0;
        let mut p3 = 0.0;
        for n in 0..20 {
            p3 += term;
            term *= z / (n as f64 + 4.0);
        }
        let p2 = 0.5 + z * p3;
        let p1 = 1.0 + z * p2;
        [p1, p2, p3]
    } else {
        let p1 = z.exp_m1() / z;
        let p2 = (p1 - 1.0) / z;
        let p3 = (p2 - 0.5) / z;
        [p1, p2, p3]
    }
}

/// `E(a, s) = int_0^s e^{-a v} dv`.
pub fn decay1(a: f64, s: f64) -> f64 {
    s * phis(-a * s)[0]
}

/// `F(a, s) = int_0^s E(a, v) dv`.
pub fn decay2(a: f64, s: f64) -> f64 {
    s * s * phis(-a * s)[1]
}

/// `H(a, s) = int_0^s F(a, v) dv`.
pub fn decay3(a: f64, s: f64) -> f64 {
    s * s * s * phis(-a * s)[2]
}

/// Convolution `D(g, p, s) = int_0^s e^{-g (s - v)} e^{-p v} dv`.
pub fn conv1(g: f64, p: f64, s: f64) -> f64 {
    let (lo, hi) = if g < p { (g, p) } else { (p, g) };
    (-lo * s).exp() * decay1(hi - lo, s)
}

/// Whether the divided difference between rates `g` and `p` over a window `s`
/// should fall back to the midpoint derivative.
fn nearly_equal_rates(g: f64, p: f64, s: f64) -> bool {
    let scale = g.abs().max(p.abs());
    let window = if scale > 0.0 { s.min(1.0 / scale) } else { s };
    (g - p).abs() * window < 1e-5
}

/// `G(g, p, s) = int_0^s D(g, p, v) dv = (E(p, s) - E(g, s)) / (g - p)`.
pub fn conv2(g: f64, p: f64, s: f64) -> f64 {
    if nearly_equal_rates(g, p, s) {
        let c = 0.5 * (g + p);
        let [p1, p2, _] = phis(-c * s);
        s * s * (p1 - p2)
    } else {
        (decay1(p, s) - decay1(g, s)) / (g - p)
    }
}

/// `J(g, p, s) = int_0^s G(g, p, v) dv = (F(p, s) - F(g, s)) / (g - p)`.
pub fn conv3(g: f64, p: f64, s: f64) -> f64 {
    if nearly_equal_rates(g, p, s) {
        let c = 0.5 * (g + p);
        let [_, p2, p3] = phis(-c * s);
        s * s * s * (p2 - 2.0 * p3)
    } else {
        (decay2(p, s) - decay2(g, s)) / (g - p)
    }
}

/// `int_0^s v e^{-a v} dv`.
pub fn ramp_decay(a: f64, s: f64) -> f64 {
    let [p1, p2, _] = phis(-a * s);
    s * s * (p1 - p2)
}
