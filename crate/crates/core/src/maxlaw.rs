//! Laws of the running maximum `M_T = sup_{t <= T} X_t` at an independent
//! `Exp(r)` time, and the expectation operators built on them.
//!
//! Boundary convention: both `{M_T >= y}` and `{M_T <= y}` are closed, so an
//! atom sitting exactly at the boundary is counted by both operators.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::Polynomial;
use crate::problem::{levy_exponent, levy_exponent_derivative, mixed_exponent_unchecked, ProcessModel};
use crate::quadrature::{integrate, QuadOptions};
use crate::special::sech;

/// Tail mass below which the upper integration limit may be placed.
pub const TRUNCATION_TAIL: f64 = 1e-12;
/// Absolute tolerance of every quadrature-backed expectation.
pub const EXPECTATION_ABS_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("expectation diverges: {0}")]
    Divergent(String),
    #[error("unsupported law variant: {0}")]
    UnsupportedVariant(String),
    #[error("no root of Psi(lambda) = r could be bracketed for {0}")]
    NoRoot(String),
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("start state {x} is outside the law's domain")]
    OutOfDomain { x: f64 },
}

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Function integrated against the law; the structured variants admit
/// closed forms for exponential-type tails.
#[derive(Clone)]
pub enum Integrand {
    Polynomial(Polynomial),
    /// `scale * e^{rate y} + offset`
    ExpAffine { scale: f64, rate: f64, offset: f64 },
    Function(RealFn),
}

impl Integrand {
    pub fn constant(c: f64) -> Self {
        Self::Polynomial(Polynomial::constant(c))
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Self::Polynomial(p) => p.eval(y),
            Self::ExpAffine {
                scale,
                rate,
                offset,
            } => scale * (rate * y).exp() + offset,
            Self::Function(f) => f(y),
        }
    }

    /// `y -> h(y) + c`
    pub fn add_constant(&self, c: f64) -> Self {
        match self {
            Self::Polynomial(p) => Self::Polynomial(p.add_constant(c)),
            Self::ExpAffine {
                scale,
                rate,
                offset,
            } => Self::ExpAffine {
                scale: *scale,
                rate: *rate,
                offset: offset + c,
            },
            Self::Function(f) => {
                let f = f.clone();
                Self::from_fn(move |y| f(y) + c)
            }
        }
    }

    /// `y -> h(x + y)`
    pub fn translate(&self, x: f64) -> Self {
        match self {
            Self::Polynomial(p) => Self::Polynomial(p.translate(x)),
            Self::ExpAffine {
                scale,
                rate,
                offset,
            } => Self::ExpAffine {
                scale: scale * (rate * x).exp(),
                rate: *rate,
                offset: *offset,
            },
            Self::Function(f) => {
                let f = f.clone();
                Self::from_fn(move |y| f(x + y))
            }
        }
    }
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Polynomial(p) => f.debug_tuple("Polynomial").field(p).finish(),
            Self::ExpAffine {
                scale,
                rate,
                offset,
            } => f
                .debug_struct("ExpAffine")
                .field("scale", scale)
                .field("rate", rate)
                .field("offset", offset)
                .finish(),
            Self::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Factorized diffusion law `P_x(M_T >= y) = psi(x) / psi(y)` for `y >= x`,
/// with `psi` increasing and positive on `[lower, inf)`.
#[derive(Clone)]
pub struct Factorization {
    pub psi: RealFn,
    pub dpsi: RealFn,
    pub lower: f64,
}

impl fmt::Debug for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Factorization")
            .field("lower", &self.lower)
            .finish_non_exhaustive()
    }
}

/// Distribution of `M_T` under `P_0` on a grid starting at 0, with a
/// piecewise-linear CDF; `cdf[0]` is the atom at the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedLaw {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    translation_invariant: bool,
}

impl TabulatedLaw {
    pub fn new(grid: Vec<f64>, mut cdf: Vec<f64>, translation_invariant: bool) -> Result<Self, LawError> {
        if grid.len() < 2 || grid.len() != cdf.len() {
            return Err(LawError::InvalidLaw("tabulated law needs matching grids of length >= 2".into()));
        }
        if grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LawError::InvalidLaw("grid must start at 0 and increase strictly".into()));
        }
        if cdf[0] < 0.0 || cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(LawError::InvalidLaw("cdf must be non-negative and non-decreasing".into()));
        }
        let last = *cdf.last().expect("len >= 2");
        if (last - 1.0).abs() > TRUNCATION_TAIL {
            return Err(LawError::InvalidLaw(format!("cdf must reach 1, ends at {last}")));
        }
        *cdf.last_mut().expect("len >= 2") = 1.0;
        Ok(Self {
            grid,
            cdf,
            translation_invariant,
        })
    }

    fn cell_density(&self, i: usize) -> f64 {
        (self.cdf[i + 1] - self.cdf[i]) / (self.grid[i + 1] - self.grid[i])
    }

    fn cdf_at(&self, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else if y >= *self.grid.last().expect("len >= 2") {
            1.0
        } else {
            crate::problem::interpolate(&self.grid, &self.cdf, y)
        }
    }
}

#[derive(Debug, Clone)]
pub enum MaxLaw {
    /// `M_T - x ~ Exp(theta)` under `P_x` (spectrally negative Levy).
    ExponentialTail { theta: f64 },
    /// Atom `atom0` at the start plus density `sum zeta_k eta_k e^{-eta_k (y - x)}`.
    MixedExponential {
        atom0: f64,
        rates: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Maximum of `sigma |W|`; `P_x(M_T >= y) = cosh(k x) / cosh(k y)` with
    /// `k = sqrt(2 r) / sigma`.
    ReflectedBMMax { rate: f64, sigma: f64 },
    DiffusionFactorized(Factorization),
    Tabulated(TabulatedLaw),
}

impl MaxLaw {
    pub fn mixed_exponential(atom0: f64, rates: Vec<f64>, weights: Vec<f64>) -> Result<Self, LawError> {
        if rates.is_empty() || rates.len() != weights.len() {
            return Err(LawError::InvalidLaw("rates and weights must match and be non-empty".into()));
        }
        if rates.iter().any(|&e| !(e > 0.0 && e.is_finite())) || weights.iter().any(|&z| !(z >= 0.0)) {
            return Err(LawError::InvalidLaw("rates must be positive and weights non-negative".into()));
        }
        let mass = atom0 + weights.iter().sum::<f64>();
        if !(0.0..=1.0).contains(&atom0) || (mass - 1.0).abs() > 1e-10 {
            return Err(LawError::InvalidLaw(format!("total mass is {mass}, expected 1")));
        }
        Ok(Self::MixedExponential {
            atom0,
            rates,
            weights,
        })
    }

    pub fn is_translation_invariant(&self) -> bool {
        match self {
            Self::ExponentialTail { .. } | Self::MixedExponential { .. } => true,
            Self::Tabulated(t) => t.translation_invariant,
            Self::ReflectedBMMax { .. } | Self::DiffusionFactorized(_) => false,
        }
    }

    /// Whether `P_x(M_T in dy) = psi(x) sigma(dy)` holds (no overshoot).
    pub fn is_factorized(&self) -> bool {
        matches!(
            self,
            Self::ExponentialTail { .. } | Self::ReflectedBMMax { .. } | Self::DiffusionFactorized(_)
        )
    }

    /// Whether `M_T - x` under `P_x` is an atom at 0 plus a non-increasing
    /// density, for a translation-invariant law.
    pub fn has_nonincreasing_density(&self) -> bool {
        match self {
            Self::ExponentialTail { .. } | Self::MixedExponential { .. } => true,
            Self::Tabulated(t) => {
                t.translation_invariant
                    && (0..t.grid.len() - 1)
                        .collect::<Vec<_>>()
                        .windows(2)
                        .all(|w| t.cell_density(w[1]) <= t.cell_density(w[0]) * (1.0 + 1e-12))
            }
            _ => false,
        }
    }

    /// The increasing function `psi` of a factorized law, normalized so
    /// that `P_x(M_T >= y) = psi(x) / psi(y)`.
    pub fn psi(&self) -> Option<RealFn> {
        match *self {
            Self::ExponentialTail { theta } => Some(Arc::new(move |x: f64| (theta * x).exp())),
            Self::ReflectedBMMax { rate, sigma } => {
                let k = (2.0 * rate).sqrt() / sigma;
                Some(Arc::new(move |x: f64| (k * x).cosh()))
            }
            Self::DiffusionFactorized(ref fac) => Some(fac.psi.clone()),
            _ => None,
        }
    }

    /// Smallest admissible start state.
    pub fn lower_boundary(&self) -> f64 {
        match self {
            Self::ReflectedBMMax { .. } => 0.0,
            Self::DiffusionFactorized(fac) => fac.lower,
            Self::Tabulated(t) if !t.translation_invariant => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    fn check_start(&self, x: f64) -> Result<(), LawError> {
        let ok = match self {
            Self::Tabulated(t) if !t.translation_invariant => x == 0.0,
            _ => x >= self.lower_boundary() && x.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(LawError::OutOfDomain { x })
        }
    }

    /// `P_x(M_T >= y)`.
    pub fn tail_prob(&self, x: f64, y: f64) -> f64 {
        if y <= x {
            return 1.0;
        }
        let d = y - x;
        match self {
            Self::ExponentialTail { theta } => (-theta * d).exp(),
            Self::MixedExponential { rates, weights, .. } => rates
                .iter()
                .zip(weights)
                .map(|(&eta, &z)| z * (-eta * d).exp())
                .sum(),
            Self::ReflectedBMMax { rate, sigma } => {
                let k = (2.0 * rate).sqrt() / sigma;
                let (a, b) = (k * x.max(0.0), k * y);
                (a - b).exp() * (1.0 + (-2.0 * a).exp()) / (1.0 + (-2.0 * b).exp())
            }
            Self::DiffusionFactorized(fac) => ((fac.psi)(x) / (fac.psi)(y)).min(1.0),
            Self::Tabulated(t) => {
                let shift = if t.translation_invariant { x } else { 0.0 };
                1.0 - t.cdf_at(y - shift)
            }
        }
    }

    /// `P_x(M_T = x)`; every variant here only has an atom at the start.
    pub fn atom(&self, _x: f64) -> f64 {
        match self {
            Self::MixedExponential { atom0, .. } => *atom0,
            Self::Tabulated(t) => t.cdf[0],
            _ => 0.0,
        }
    }

    /// `P_x(M_T = y)`.
    pub fn atom_at(&self, x: f64, y: f64) -> f64 {
        if y == x {
            self.atom(x)
        } else {
            0.0
        }
    }

    /// Density of the absolutely continuous part of `M_T` under `P_x` at `y`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        if y < x {
            return 0.0;
        }
        let d = y - x;
        match self {
            Self::ExponentialTail { theta } => theta * (-theta * d).exp(),
            Self::MixedExponential { rates, weights, .. } => rates
                .iter()
                .zip(weights)
                .map(|(&eta, &z)| z * eta * (-eta * d).exp())
                .sum(),
            Self::ReflectedBMMax { rate, sigma } => {
                let k = (2.0 * rate).sqrt() / sigma;
                // k sinh(k y) cosh(k x) / cosh(k y)^2, written to avoid overflow
                k * (k * y).tanh() * sech(k * y) * (k * x).cosh()
            }
            Self::DiffusionFactorized(fac) => {
                let p = (fac.psi)(y);
                (fac.psi)(x) * (fac.dpsi)(y) / (p * p)
            }
            Self::Tabulated(t) => {
                let shift = if t.translation_invariant { x } else { 0.0 };
                let z = y - shift;
                if z < 0.0 || z >= *t.grid.last().expect("len >= 2") {
                    return 0.0;
                }
                let i = t.grid.partition_point(|&g| g <= z) - 1;
                t.cell_density(i)
            }
        }
    }

    /// A level `y >= from` with `P_x(M_T >= y) <= tail`.
    pub fn upper_quantile(&self, x: f64, tail: f64) -> f64 {
        let mut step = 1.0;
        let mut y = x + step;
        while self.tail_prob(x, y) > tail {
            step *= 2.0;
            y = x + step;
            if step > 1e12 {
                return f64::INFINITY;
            }
        }
        // bisect down to a tight level
        let (mut lo, mut hi) = (x, y);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.tail_prob(x, mid) > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// `E_x[h(M_T); M_T >= lower]`.
    pub fn restricted_expectation(&self, x: f64, h: &Integrand, lower: f64) -> Result<f64, LawError> {
        self.check_start(x)?;
        if let Some(v) = self.closed_form_restricted(x, h, lower)? {
            return Ok(v);
        }
        let lo = lower.max(x);
        let atom_part = if lower <= x { self.atom(x) * h.eval(x) } else { 0.0 };
        Ok(atom_part + self.integrate_density(x, h, lo, f64::INFINITY)?)
    }

    /// `E_x[h(M_T); M_T <= upper]`.
    pub fn complement_expectation(&self, x: f64, h: &Integrand, upper: f64) -> Result<f64, LawError> {
        self.check_start(x)?;
        if upper < x {
            return Ok(0.0);
        }
        let atom_part = self.atom(x) * h.eval(x);
        if self.has_closed_forms(h) {
            let total = self
                .closed_form_restricted(x, h, f64::NEG_INFINITY)?
                .expect("closed form available");
            let above = self
                .closed_form_restricted(x, h, upper)?
                .expect("closed form available");
            return Ok(total - above + self.atom_at(x, upper) * h.eval(upper));
        }
        Ok(atom_part + self.integrate_density(x, h, x, upper)?)
    }

    /// `E_0[M_T^m]`.
    pub fn moment(&self, m: u32) -> Result<f64, LawError> {
        let start = if self.lower_boundary() > 0.0 { self.lower_boundary() } else { 0.0 };
        if start != 0.0 {
            return Err(LawError::UnsupportedVariant("law is not defined at 0".into()));
        }
        self.restricted_expectation(0.0, &Integrand::Polynomial(Polynomial::monomial(m as usize)), f64::NEG_INFINITY)
    }

    /// One draw of `M_T` under `P_x` by inverse transform.
    pub fn sample_max<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64, LawError> {
        self.check_start(x)?;
        // u in (0, 1]
        let u: f64 = 1.0 - rng.random::<f64>();
        match self {
            Self::ExponentialTail { theta } => Ok(x - u.ln() / theta),
            Self::MixedExponential {
                atom0,
                rates,
                weights,
            } => {
                if u <= *atom0 {
                    return Ok(x);
                }
                let mut acc = *atom0;
                let mut pick = rates.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u <= acc {
                        pick = i;
                        break;
                    }
                }
                let v: f64 = 1.0 - rng.random::<f64>();
                Ok(x - v.ln() / rates[pick])
            }
            Self::ReflectedBMMax { rate, sigma } => {
                let k = (2.0 * rate).sqrt() / sigma;
                // cosh(k y) = cosh(k x) / u, solved in log space
                let ln_z = (k * x).cosh().ln() - u.ln();
                let ky = if ln_z > 20.0 {
                    ln_z + std::f64::consts::LN_2
                } else {
                    ln_z.exp().acosh()
                };
                Ok((ky / k).max(x))
            }
            Self::DiffusionFactorized(fac) => {
                let target = (fac.psi)(x) / u;
                let mut hi = x + 1.0;
                let mut step = 1.0;
                while (fac.psi)(hi) < target {
                    step *= 2.0;
                    hi = x + step;
                    if step > 1e8 {
                        return Err(LawError::UnsupportedVariant(
                            "diffusion tail cannot be inverted (psi bounded)".into(),
                        ));
                    }
                }
                let mut lo = x;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (fac.psi)(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * (1.0 + hi.abs()) {
                        break;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
            Self::Tabulated(t) => {
                let shift = if t.translation_invariant { x } else { 0.0 };
                let p = 1.0 - u;
                if p <= t.cdf[0] {
                    return Ok(shift);
                }
                let i = t.cdf.partition_point(|&c| c < p).clamp(1, t.grid.len() - 1);
                let (c0, c1) = (t.cdf[i - 1], t.cdf[i]);
                let frac = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
                Ok(shift + t.grid[i - 1] + frac * (t.grid[i] - t.grid[i - 1]))
            }
        }
    }

    fn has_closed_forms(&self, h: &Integrand) -> bool {
        matches!(self, Self::ExponentialTail { .. } | Self::MixedExponential { .. })
            && !matches!(h, Integrand::Function(_))
    }

    /// Exact `E_x[h(M_T); M_T >= lower]` for exponential-type tails against
    /// polynomials and exponentials; `None` when no closed form applies.
    fn closed_form_restricted(&self, x: f64, h: &Integrand, lower: f64) -> Result<Option<f64>, LawError> {
        if !self.has_closed_forms(h) {
            return Ok(None);
        }
        let (atom0, components): (f64, Vec<(f64, f64)>) = match self {
            Self::ExponentialTail { theta } => (0.0, vec![(*theta, 1.0)]),
            Self::MixedExponential {
                atom0,
                rates,
                weights,
            } => (*atom0, rates.iter().cloned().zip(weights.iter().cloned()).collect()),
            _ => unreachable!(),
        };
        let lo = lower.max(x);
        let mut total = if lower <= x { atom0 * h.eval(x) } else { 0.0 };
        match h {
            Integrand::Polynomial(p) => {
                // With M = lo + S, S ~ Exp(eta): E p(lo + S) = sum_k p^(k)(lo) / eta^k.
                let derivs: Vec<f64> = p.derivatives().iter().map(|d| d.eval(lo)).collect();
                for (eta, zeta) in components {
                    let mut inv = 1.0;
                    let mut s = 0.0;
                    for d in &derivs {
                        s += d * inv;
                        inv /= eta;
                    }
                    total += zeta * (-eta * (lo - x)).exp() * s;
                }
            }
            Integrand::ExpAffine {
                scale,
                rate,
                offset,
            } => {
                for (eta, zeta) in components {
                    if *rate >= eta {
                        return Err(LawError::Divergent(format!(
                            "exponential growth rate {rate} is not below tail rate {eta}"
                        )));
                    }
                    let weight = zeta * (-eta * (lo - x)).exp();
                    total += weight * (scale * (rate * lo).exp() * eta / (eta - rate) + offset);
                }
            }
            Integrand::Function(_) => unreachable!(),
        }
        Ok(Some(total))
    }

    /// `int_lo^hi h(y) density(x, y) dy` by adaptive quadrature, with the
    /// infinite upper limit truncated where the weighted tail is negligible.
    fn integrate_density(&self, x: f64, h: &Integrand, lo: f64, hi: f64) -> Result<f64, LawError> {
        if !(hi > lo) {
            return Ok(0.0);
        }
        if let Self::Tabulated(t) = self {
            return self.integrate_tabulated(t, x, h, lo, hi);
        }
        let upper = if hi.is_finite() {
            hi
        } else {
            self.truncation_point(x, h, lo)?
        };
        let opts = QuadOptions {
            abs_tol: 0.1 * EXPECTATION_ABS_TOL,
            initial_pieces: 16,
            ..Default::default()
        };
        let res = integrate(|y| h.eval(y) * self.density(x, y), lo, upper, opts);
        if !res.value.is_finite() {
            return Err(LawError::Divergent("integral is not finite".into()));
        }
        Ok(res.value)
    }

    fn truncation_point(&self, x: f64, h: &Integrand, lo: f64) -> Result<f64, LawError> {
        let mut upper = self.upper_quantile(x, TRUNCATION_TAIL).max(lo + 1.0);
        if !upper.is_finite() {
            return Err(LawError::Divergent("tail does not decay".into()));
        }
        // push further out while the integrand outweighs the remaining tail mass
        let mut prev = f64::INFINITY;
        for _ in 0..60 {
            let weight = h.eval(upper).abs() * self.tail_prob(x, upper);
            if weight < 1e-3 * EXPECTATION_ABS_TOL {
                return Ok(upper);
            }
            if !weight.is_finite() || weight >= prev {
                return Err(LawError::Divergent(
                    "integrand grows faster than the tail decays".into(),
                ));
            }
            prev = weight;
            upper = lo + 1.5 * (upper - lo);
        }
        Err(LawError::Divergent("weighted tail does not become negligible".into()))
    }

    fn integrate_tabulated(&self, t: &TabulatedLaw, x: f64, h: &Integrand, lo: f64, hi: f64) -> Result<f64, LawError> {
        let shift = if t.translation_invariant { x } else { 0.0 };
        let opts = QuadOptions {
            abs_tol: 0.1 * EXPECTATION_ABS_TOL / t.grid.len() as f64,
            initial_pieces: 1,
            ..Default::default()
        };
        let mut total = 0.0;
        for i in 0..t.grid.len() - 1 {
            let a = (t.grid[i] + shift).max(lo);
            let b = (t.grid[i + 1] + shift).min(hi);
            if b > a {
                let dens = t.cell_density(i);
                if dens > 0.0 {
                    total += dens * integrate(|y| h.eval(y), a, b, opts).value;
                }
            }
        }
        Ok(total)
    }
}

/// `theta > 0` with `Psi(theta) = r` for a spectrally negative Levy model.
pub fn theta_from_model(process: &ProcessModel, rate: f64) -> Result<f64, LawError> {
    let name = process.name().to_string();
    if !matches!(
        process,
        ProcessModel::BrownianWithDrift { .. } | ProcessModel::SpectrallyNegativeJumpDiffusion { .. }
    ) || !(rate > 0.0)
    {
        return Err(LawError::NoRoot(name));
    }
    let psi = |l: f64| levy_exponent(process, l).expect("non-negative lambda is in the domain") - rate;
    let mut hi = 1.0;
    while psi(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(LawError::NoRoot(name));
        }
    }
    let mut lo = 0.0;
    let mut lam = 0.5 * hi;
    // safeguarded Newton: fall back to bisection whenever a step leaves the bracket
    for _ in 0..200 {
        let v = psi(lam);
        if v == 0.0 {
            return Ok(lam);
        }
        if v < 0.0 {
            lo = lam;
        } else {
            hi = lam;
        }
        let d = levy_exponent_derivative(process, lam);
        let newton = lam - v / d;
        lam = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) < 1e-15 * hi || psi(lam).abs() < 1e-14 {
            break;
        }
    }
    Ok(lam)
}

/// Mixed-exponential law of `M_T` for Brownian motion plus upward
/// hyper-exponential jumps: one root of `Psi = r` sits in each of
/// `(0, eta_1), (eta_1, eta_2), ..., (eta_n, inf)` and the Laplace transform
/// of `M_T` is `prod beta_j / (beta_j + s) * prod (eta_k + s) / eta_k`.
pub fn mixed_exponential_from_model(process: &ProcessModel, rate: f64) -> Result<MaxLaw, LawError> {
    let ProcessModel::MixedExpUpwardJumpDiffusion {
        up_rates, jump_rate, ..
    } = process
    else {
        return Err(LawError::UnsupportedVariant(process.name().into()));
    };
    let name = process.name().to_string();
    let mut poles: Vec<f64> = if *jump_rate > 0.0 { up_rates.clone() } else { Vec::new() };
    poles.sort_by(f64::total_cmp);
    let psi = |l: f64| mixed_exponent_unchecked(process, l) - rate;

    let mut edges = vec![0.0];
    edges.extend(poles.iter().cloned());
    let mut roots = Vec::with_capacity(edges.len());
    for (i, &lo) in edges.iter().enumerate() {
        let mut hi = match edges.get(i + 1) {
            Some(&h) => h,
            None => {
                let mut h = lo + 1.0;
                while psi(h) <= 0.0 {
                    h = lo + 2.0 * (h - lo);
                    if h > 1e12 {
                        return Err(LawError::NoRoot(name));
                    }
                }
                h
            }
        };
        // sign is negative just right of `lo` and positive just left of `hi`
        let mut a = lo;
        for _ in 0..300 {
            let mid = 0.5 * (a + hi);
            if mid <= a || mid >= hi {
                break;
            }
            if psi(mid) < 0.0 {
                a = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (a + hi);
        if !(psi(root).abs() < 1e-6 * (1.0 + rate)) && hi - a > 1e-12 * hi {
            return Err(LawError::NoRoot(name));
        }
        roots.push(root);
    }
    let weights: Vec<f64> = roots
        .iter()
        .enumerate()
        .map(|(j, &bj)| {
            let others: f64 = roots
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, &bi)| bi / (bi - bj))
                .product();
            let zeros: f64 = poles.iter().map(|&eta| 1.0 - bj / eta).product();
            others * zeros
        })
        .collect();
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(LawError::InvalidLaw(format!("non-positive mixture weights {weights:?}")));
    }
    let atom0 = (1.0 - weights.iter().sum::<f64>()).max(0.0);
    MaxLaw::mixed_exponential(if atom0 < 1e-12 { 0.0 } else { atom0 }, roots, weights)
}

/// The law of `M_T` for a process model and rate.
pub fn law_for(process: &ProcessModel, rate: f64) -> Result<MaxLaw, LawError> {
    match *process {
        ProcessModel::BrownianWithDrift { .. } | ProcessModel::SpectrallyNegativeJumpDiffusion { .. } => {
            Ok(MaxLaw::ExponentialTail {
                theta: theta_from_model(process, rate)?,
            })
        }
        ProcessModel::MixedExpUpwardJumpDiffusion { .. } => mixed_exponential_from_model(process, rate),
        ProcessModel::ReflectedBM { sigma } => Ok(MaxLaw::ReflectedBMMax { rate, sigma }),
    }
}
