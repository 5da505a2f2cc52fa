//! Special functions that the closed-form families need.

/// Hyperbolic cotangent, with the Laurent series near the pole so that
/// `x^k * (x - c * coth(x))` stays accurate as `x -> 0`.
pub fn coth(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let z2 = z * z;
        1.0 / z + z / 3.0 - z * z2 / 45.0 + 2.0 * z * z2 * z2 / 945.0
    } else {
        1.0 / z.tanh()
    }
}

/// `1 / cosh(z)`, safe for large `|z|`.
pub fn sech(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Principal branch `W_0` of the Lambert W function on `[-1/e, inf)`.
///
/// Halley iteration from a branch-point series or a log-based start.
pub fn lambert_w0(x: f64) -> f64 {
    let branch = -(-1.0f64).exp();
    if x.is_nan() || x < branch {
        return f64::NAN;
    }
    if x == branch {
        return -1.0;
    }
    if x == 0.0 {
        return 0.0;
    }
    let mut w = if x < -0.25 {
        // series in p = sqrt(2(e x + 1)) around the branch point
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambert_inverts_w_exp_w() {
        for &x in &[-0.36, -0.3, -2.0 * (-2.0f64).exp(), -0.1, 0.0, 0.5, 1.0, 10.0, 1e6] {
            let w = lambert_w0(x);
            assert!(w >= -1.0);
            assert!((w * w.exp() - x).abs() <= 1e-13 * (1.0 + x.abs()), "x = {x}");
        }
        assert!((lambert_w0(std::f64::consts::E) - 1.0).abs() < 1e-15);
        assert!(lambert_w0(-1.0).is_nan());
    }

    #[test]
    fn coth_series_joins_direct_evaluation() {
        for &z in &[0.0099f64, 0.01, 0.0101] {
            let direct = 1.0 / z.tanh();
            assert!((coth(z) - direct).abs() < 1e-12 * direct);
        }
        // x (x - 2 coth x) -> -2 at the origin
        let x = 1e-9;
        assert!((x * (x - 2.0 * coth(x)) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn sech_handles_overflow_range() {
        assert_eq!(sech(1000.0), 0.0);
        assert!((sech(0.3) - 1.0 / 0.3f64.cosh()).abs() < 1e-15);
    }
}
