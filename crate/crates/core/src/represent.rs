//! Representing functions `f` with `g(x) = E_x f(M_T)` for the closed-form
//! reward families, with declared and grid-audited shape metadata.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::maxlaw::{Integrand, LawError, MaxLaw};
use crate::polynomial::Polynomial;
use crate::problem::interpolate;
use crate::special::coth;

const AUDIT_POINTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepresentError {
    #[error(transparent)]
    Law(#[from] LawError),
    #[error("declared metadata contradicted at x = {x}: {claim}")]
    InconsistentMetadata { claim: String, x: f64 },
    #[error("invalid representing function: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TriState {
    Yes,
    No,
    Unknown,
}

/// Behaviour of `f(x)` as `x -> 0+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Limit {
    Finite(f64),
    NegInfinity,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub monotone_nondecreasing: TriState,
    pub limit_at_zero: Limit,
    pub polynomial_coeffs: Option<Vec<f64>>,
    pub decreasing_on_left_of_min: TriState,
    pub single_sign_change_left_of_min: TriState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Polynomial(Polynomial),
    /// `a e^{b x} - k`
    ExpAffine { a: f64, b: f64, k: f64 },
    /// `x^{m-1} (x - (m / kappa) coth(kappa x))`
    ReflectedPower { kappa: f64, m: u32 },
    /// Piecewise linear through the nodes, extrapolated linearly.
    Tabulated { x: Vec<f64>, f: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentingFunction {
    shape: Shape,
    metadata: Metadata,
    shift: f64,
}

impl RepresentingFunction {
    /// Builds `f` from a shape and its declared metadata, auditing the
    /// claims on `[0, audit_cap]`.
    pub fn new(shape: Shape, metadata: Metadata, audit_cap: f64) -> Result<Self, RepresentError> {
        let f = Self {
            shape,
            metadata,
            shift: 0.0,
        };
        f.audit(audit_cap)?;
        Ok(f)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `f + c`; monotonicity and the left-branch shape are unchanged.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.shift += c;
        if let Some(coeffs) = out.metadata.polynomial_coeffs.as_mut() {
            coeffs[0] += c;
        }
        out.metadata.limit_at_zero = match out.metadata.limit_at_zero {
            Limit::Finite(v) => Limit::Finite(v + c),
            other => other,
        };
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        let base = match &self.shape {
            Shape::Polynomial(p) => p.eval(x),
            Shape::ExpAffine { a, b, k } => a * (b * x).exp() - k,
            Shape::ReflectedPower { kappa, m } => reflected_power(*kappa, *m, x),
            Shape::Tabulated { x: xs, f } => interpolate(xs, f, x),
        };
        base + self.shift
    }

    /// `f` as an integrand for the expectation operators.
    pub fn integrand(&self) -> Integrand {
        match &self.shape {
            Shape::Polynomial(p) => Integrand::Polynomial(p.add_constant(self.shift)),
            Shape::ExpAffine { a, b, k } => Integrand::ExpAffine {
                scale: *a,
                rate: *b,
                offset: self.shift - k,
            },
            _ => {
                let me = Arc::new(self.clone());
                Integrand::from_fn(move |y| me.eval(y))
            }
        }
    }

    fn audit(&self, cap: f64) -> Result<(), RepresentError> {
        let grid: Vec<f64> = (1..=AUDIT_POINTS)
            .map(|i| cap * i as f64 / AUDIT_POINTS as f64)
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&x| self.eval(x)).collect();
        let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let slack = 1e-12 * scale;
        let fail = |claim: &str, x: f64| {
            Err(RepresentError::InconsistentMetadata {
                claim: claim.to_string(),
                x,
            })
        };

        if let Some(coeffs) = &self.metadata.polynomial_coeffs {
            let p = Polynomial::new(coeffs.clone());
            for &x in &grid {
                if (p.eval(x) - self.eval(x)).abs() > 1e-12 * (1.0 + self.eval(x).abs()) {
                    return fail("polynomial coefficients", x);
                }
            }
        }
        let decreases = vals.windows(2).position(|w| w[1] < w[0] - slack);
        match (self.metadata.monotone_nondecreasing, decreases) {
            (TriState::Yes, Some(i)) => return fail("monotone non-decreasing", grid[i + 1]),
            (TriState::No, None) => return fail("not monotone", cap),
            _ => {}
        }
        let probe = 1e-9 * cap.max(1.0);
        match self.metadata.limit_at_zero {
            Limit::Finite(l) => {
                let v = self.eval(probe);
                if (v - l).abs() > 1e-6 * (1.0 + l.abs()) {
                    return fail("finite limit at zero", probe);
                }
            }
            Limit::NegInfinity => {
                if !(self.eval(probe) < -1e6) {
                    return fail("limit -inf at zero", probe);
                }
            }
            Limit::Unknown => {}
        }
        if self.metadata.decreasing_on_left_of_min == TriState::Yes {
            let imin = leftmost_min(&vals);
            if let Some(i) = vals[..=imin].windows(2).position(|w| w[1] > w[0] + slack) {
                return fail("decreasing left of the minimum", grid[i + 1]);
            }
        }
        Ok(())
    }
}

fn leftmost_min(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v < vals[best] {
            best = i;
        }
    }
    best
}

fn reflected_power(kappa: f64, m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return match m {
            1 => f64::NEG_INFINITY,
            2 => -2.0 / (kappa * kappa),
            _ => 0.0,
        };
    }
    let m_f = m as f64;
    if (kappa * x).abs() < 1e-2 {
        // x^{m-1} (x - (m/k) coth(kx)) with the 1/x pole taken out by hand
        let z = kappa * x;
        let z2 = z * z;
        let coth_minus_pole = z / 3.0 - z * z2 / 45.0 + 2.0 * z * z2 * z2 / 945.0;
        let head = -m_f / (kappa * kappa);
        let tail = x * x - m_f / kappa * x * coth_minus_pole;
        return x.powi(m as i32 - 2) * (head + tail);
    }
    x.powi(m as i32 - 1) * (x - m_f / kappa * coth(kappa * x))
}

fn audit_cap(law: &MaxLaw) -> f64 {
    let start = law.lower_boundary().max(0.0);
    let q = law.upper_quantile(start, 1e-10);
    if q.is_finite() {
        q.max(1.0)
    } else {
        50.0
    }
}

/// The `m`-th Appell polynomial of `M_T` under `P_0`: `Q_0 = 1`,
/// `Q_m' = m Q_{m-1}` and `E_0 Q_m(M_T) = 0`.
pub fn appell_polynomial(law: &MaxLaw, m: u32) -> Result<Polynomial, RepresentError> {
    let mut q = Polynomial::constant(1.0);
    for j in 1..=m {
        let raw = q.antiderivative().scale(j as f64);
        let mean = law.restricted_expectation(0.0, &Integrand::Polynomial(raw.clone()), f64::NEG_INFINITY)?;
        q = raw.add_constant(-mean);
    }
    Ok(q)
}

pub fn appell(law: &MaxLaw, m: u32) -> Result<RepresentingFunction, RepresentError> {
    if m == 0 {
        return Err(RepresentError::Invalid("Appell order must be positive".into()));
    }
    let q = appell_polynomial(law, m)?;
    let shape_known = if law.is_translation_invariant() {
        TriState::Yes
    } else {
        TriState::Unknown
    };
    let metadata = Metadata {
        monotone_nondecreasing: if m == 1 { TriState::Yes } else { TriState::No },
        limit_at_zero: Limit::Finite(q.eval(0.0)),
        polynomial_coeffs: Some(q.coeffs().to_vec()),
        decreasing_on_left_of_min: if m == 1 { TriState::Yes } else { shape_known },
        single_sign_change_left_of_min: if m == 1 { TriState::Yes } else { shape_known },
    };
    RepresentingFunction::new(Shape::Polynomial(q), metadata, audit_cap(law))
}

/// `f(x) = a e^{b x} - k` with `a = 1 / E_0 e^{b M_T}`.
pub fn geometric_representing(law: &MaxLaw, b: f64, k: f64) -> Result<RepresentingFunction, RepresentError> {
    if !(b > 0.0 && k.is_finite()) {
        return Err(RepresentError::Invalid(format!("need b > 0 and finite k, got b = {b}, k = {k}")));
    }
    let growth = Integrand::ExpAffine {
        scale: 1.0,
        rate: b,
        offset: 0.0,
    };
    let mean = law.restricted_expectation(0.0, &growth, f64::NEG_INFINITY)?;
    let a = 1.0 / mean;
    let metadata = Metadata {
        monotone_nondecreasing: TriState::Yes,
        limit_at_zero: Limit::Finite(a - k),
        polynomial_coeffs: None,
        decreasing_on_left_of_min: TriState::Yes,
        single_sign_change_left_of_min: TriState::Yes,
    };
    let cap = audit_cap(law).min(700.0 / b);
    RepresentingFunction::new(Shape::ExpAffine { a, b, k }, metadata, cap)
}

/// `f_m` for `g(x) = x^m` and Brownian motion with volatility `sigma`
/// reflected at 0.
pub fn reflected_bm_representing_sigma(rate: f64, sigma: f64, m: u32) -> Result<RepresentingFunction, RepresentError> {
    if !(rate > 0.0 && sigma > 0.0) || m == 0 {
        return Err(RepresentError::Invalid("need rate > 0, sigma > 0 and m >= 1".into()));
    }
    let kappa = (2.0 * rate).sqrt() / sigma;
    let metadata = match m {
        1 => Metadata {
            monotone_nondecreasing: TriState::Yes,
            limit_at_zero: Limit::NegInfinity,
            polynomial_coeffs: None,
            decreasing_on_left_of_min: TriState::Yes,
            single_sign_change_left_of_min: TriState::Yes,
        },
        2 => Metadata {
            monotone_nondecreasing: TriState::Yes,
            limit_at_zero: Limit::Finite(-2.0 / (kappa * kappa)),
            polynomial_coeffs: None,
            decreasing_on_left_of_min: TriState::Yes,
            single_sign_change_left_of_min: TriState::Yes,
        },
        _ => Metadata {
            monotone_nondecreasing: TriState::No,
            limit_at_zero: Limit::Finite(0.0),
            polynomial_coeffs: None,
            decreasing_on_left_of_min: TriState::Yes,
            single_sign_change_left_of_min: TriState::Yes,
        },
    };
    let law = MaxLaw::ReflectedBMMax { rate, sigma };
    RepresentingFunction::new(Shape::ReflectedPower { kappa, m }, metadata, audit_cap(&law))
}

/// Unit-volatility case of [`reflected_bm_representing_sigma`].
pub fn reflected_bm_representing(rate: f64, m: u32) -> Result<RepresentingFunction, RepresentError> {
    reflected_bm_representing_sigma(rate, 1.0, m)
}

/// A caller-supplied table of `f`; the metadata is read off the nodes,
/// which is exact for the piecewise-linear interpolant.
pub fn tabulated(x: Vec<f64>, f: Vec<f64>) -> Result<RepresentingFunction, RepresentError> {
    if x.len() < 2 || x.len() != f.len() || x[0] != 0.0 || x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RepresentError::Invalid("table needs an increasing grid from 0 with matching values".into()));
    }
    let n = f.len();
    // the linear extrapolation continues the last slope
    let nondecreasing = f.windows(2).all(|w| w[1] >= w[0]);
    let imin = leftmost_min(&f);
    let decreasing_left = f[..=imin].windows(2).all(|w| w[1] <= w[0]);
    let sign_changes = f[..=imin]
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    let tri = |b: bool| if b { TriState::Yes } else { TriState::No };
    let metadata = Metadata {
        monotone_nondecreasing: tri(nondecreasing),
        limit_at_zero: Limit::Finite(f[0]),
        polynomial_coeffs: None,
        decreasing_on_left_of_min: tri(decreasing_left),
        single_sign_change_left_of_min: tri(decreasing_left || sign_changes <= 1),
    };
    let cap = x[n - 1];
    RepresentingFunction::new(Shape::Tabulated { x, f }, metadata, cap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentationReport {
    pub max_error: f64,
    pub worst_x: f64,
    pub points: usize,
    pub passed: bool,
}

/// Largest `|E_x f(M_T) - g(x)|` over the grid.
pub fn verify_representation(
    f: &RepresentingFunction,
    law: &MaxLaw,
    g: impl Fn(f64) -> f64,
    grid: &[f64],
    tol: f64,
) -> Result<RepresentationReport, RepresentError> {
    let h = f.integrand();
    let mut max_error: f64 = 0.0;
    let mut worst_x = f64::NAN;
    for &x in grid {
        let err = (law.restricted_expectation(x, &h, f64::NEG_INFINITY)? - g(x)).abs();
        if !(err <= max_error) {
            max_error = err;
            worst_x = x;
        }
    }
    Ok(RepresentationReport {
        max_error,
        worst_x,
        points: grid.len(),
        passed: max_error <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(theta: f64) -> MaxLaw {
        MaxLaw::ExponentialTail { theta }
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn appell_examples_for_exponential_tail() {
        assert_eq!(appell_polynomial(&exp(1.0), 1).unwrap().coeffs(), &[-1.0, 1.0]);
        let q2 = appell_polynomial(&exp(1.0), 2).unwrap();
        assert!((q2.coeffs()[0]).abs() < 1e-15);
        assert!((q2.coeffs()[1] + 2.0).abs() < 1e-14);
        assert!((q2.coeffs()[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn appell_matches_spectrally_negative_form() {
        for &theta in &[0.5, 1.0, 2.0] {
            for m in 1..=6u32 {
                let q = appell_polynomial(&exp(theta), m).unwrap();
                // (x - m/theta) x^{m-1}
                let mut want = vec![0.0; m as usize + 1];
                want[m as usize] = 1.0;
                want[m as usize - 1] = -(m as f64) / theta;
                for (a, b) in q.coeffs().iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "theta {theta} m {m}");
                }
            }
        }
    }

    #[test]
    fn appell_recursion_and_mean_zero() {
        let mixed = MaxLaw::mixed_exponential(0.2, vec![1.0, 3.0], vec![0.5, 0.3]).unwrap();
        let rbm = MaxLaw::ReflectedBMMax { rate: 0.5, sigma: 1.0 };
        for law in [exp(1.3), mixed, rbm] {
            let mut prev = Polynomial::constant(1.0);
            for m in 1..=6u32 {
                let q = appell_polynomial(&law, m).unwrap();
                let lhs = q.derivative();
                let rhs = prev.scale(m as f64);
                for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                    assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
                }
                let h = Integrand::from_fn({
                    let q = q.clone();
                    move |y| q.eval(y)
                });
                let mean = law.restricted_expectation(0.0, &h, f64::NEG_INFINITY).unwrap();
                assert!(mean.abs() < 1e-8, "{law:?} m {m}: {mean}");
                prev = q;
            }
        }
    }

    #[test]
    fn appell_metadata_is_audited() {
        let f = appell(&exp(1.0), 2).unwrap();
        assert_eq!(f.metadata().monotone_nondecreasing, TriState::No);
        assert_eq!(f.metadata().limit_at_zero, Limit::Finite(0.0));
        assert_eq!(appell(&exp(1.0), 1).unwrap().metadata().monotone_nondecreasing, TriState::Yes);
    }

    #[test]
    fn false_metadata_fails_loudly() {
        let md = Metadata {
            monotone_nondecreasing: TriState::Yes,
            limit_at_zero: Limit::Finite(0.0),
            polynomial_coeffs: Some(vec![0.0, -2.0, 1.0]),
            decreasing_on_left_of_min: TriState::Yes,
            single_sign_change_left_of_min: TriState::Yes,
        };
        let err = RepresentingFunction::new(Shape::Polynomial(Polynomial::new(vec![0.0, -2.0, 1.0])), md, 4.0);
        assert!(matches!(err, Err(RepresentError::InconsistentMetadata { .. })));
    }

    #[test]
    fn geometric_examples() {
        let f = geometric_representing(&exp(2.0), 1.0, 2.0).unwrap();
        let Shape::ExpAffine { a, .. } = f.shape() else { panic!() };
        assert!((a - 0.5).abs() < 1e-15);
        assert!((f.eval(0.0) + 1.5).abs() < 1e-15);
        let small = geometric_representing(&exp(2.0), 1e-9, 2.0).unwrap();
        assert!((small.eval(0.0) + 1.0).abs() < 1e-8);
        let grid = linspace(0.0, 5.0, 51);
        let rep = verify_representation(&f, &exp(2.0), |x| x.exp() - 2.0, &grid, 1e-8).unwrap();
        assert!(rep.passed, "{rep:?}");
        // the function route goes through quadrature
        let h = Integrand::from_fn(move |y| 0.5 * y.exp() - 2.0);
        let q = exp(2.0).restricted_expectation(1.0, &h, f64::NEG_INFINITY).unwrap();
        assert!((q - (1f64.exp() - 2.0)).abs() < 1e-8);
    }

    #[test]
    fn reflected_examples() {
        let f1 = reflected_bm_representing(0.5, 1).unwrap();
        assert!(f1.eval(1e-10) < -1e9);
        assert!((f1.eval(2.0) - (2.0 - 1.0 / 2f64.tanh())).abs() < 1e-14);
        let f2 = reflected_bm_representing(0.5, 2).unwrap();
        assert!((f2.eval(0.0) + 2.0).abs() < 1e-15);
        assert!((f2.eval(1e-6) + 2.0).abs() < 1e-10);
        let f3 = reflected_bm_representing(0.5, 3).unwrap();
        let law = MaxLaw::ReflectedBMMax { rate: 0.5, sigma: 1.0 };
        let h = f3.integrand();
        for &x in &[0.5, 1.0, 2.0] {
            let v = law.restricted_expectation(x, &h, f64::NEG_INFINITY).unwrap();
            assert!((v - x * x * x).abs() < 1e-7, "x {x}: {v}");
        }
    }

    #[test]
    fn reflected_series_branch_joins_direct_branch() {
        for m in 1..=4u32 {
            let k = 1.0;
            let x = 1e-2 / k;
            let below = reflected_power(k, m, x * (1.0 - 1e-12));
            let above = {
                let m_f = m as f64;
                x.powi(m as i32 - 1) * (x - m_f / k / (k * x).tanh())
            };
            assert!((below - above).abs() < 1e-9 * (1.0 + above.abs()), "m {m}");
        }
    }

    #[test]
    fn verify_representation_examples() {
        let q2 = appell(&exp(1.0), 2).unwrap();
        let grid = linspace(0.0, 4.0, 41);
        let rep = verify_representation(&q2, &exp(1.0), |x| x * x, &grid, 1e-9).unwrap();
        assert!(rep.passed && rep.max_error < 1e-12);

        let c = RepresentingFunction::new(
            Shape::Polynomial(Polynomial::constant(0.7)),
            Metadata {
                monotone_nondecreasing: TriState::Yes,
                limit_at_zero: Limit::Finite(0.7),
                polynomial_coeffs: Some(vec![0.7]),
                decreasing_on_left_of_min: TriState::Yes,
                single_sign_change_left_of_min: TriState::Yes,
            },
            1.0,
        )
        .unwrap();
        let rep = verify_representation(&c, &exp(1.0), |_| 0.7, &grid, 1e-12).unwrap();
        assert_eq!(rep.max_error, 0.0);

        let q1 = appell(&exp(1.0), 1).unwrap().shifted(0.25);
        let rep = verify_representation(&q1, &exp(1.0), |x| x, &grid, 1e-7).unwrap();
        assert!(!rep.passed && (rep.max_error - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tabulated_metadata_comes_from_nodes() {
        let f = tabulated(vec![0.0, 1.0, 2.0, 3.0], vec![-0.5, -1.0, 0.0, 2.0]).unwrap();
        assert_eq!(f.metadata().monotone_nondecreasing, TriState::No);
        assert_eq!(f.metadata().decreasing_on_left_of_min, TriState::Yes);
        assert!((f.eval(1.5) + 0.5).abs() < 1e-15);
        assert!((f.eval(4.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn shifting_tracks_metadata() {
        let f = appell(&exp(1.0), 2).unwrap().shifted(0.5);
        assert_eq!(f.metadata().limit_at_zero, Limit::Finite(0.5));
        assert!((f.eval(1.0) + 0.5).abs() < 1e-14);
        assert!((f.integrand().eval(1.0) + 0.5).abs() < 1e-14);
    }
}
