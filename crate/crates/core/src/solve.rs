//! Curve sketching of `f`, regime classification, the root `x_c`, the fixed
//! point `c_hat = v_hat_{c_hat}(0)` and the audits of the threshold solution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maxlaw::{law_for, Integrand, LawError, MaxLaw};
use crate::problem::{ProblemError, ProblemSpec, ProcessModel, Reward};
use crate::represent::{
    appell, geometric_representing, reflected_bm_representing_sigma, tabulated, verify_representation, Limit,
    RepresentError, RepresentationReport, RepresentingFunction, Shape, TriState,
};
use crate::special::lambert_w0;

/// `|g(0)|` at or below this counts as `g(0) = 0`.
pub const ZERO_REWARD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("maxlaw: {0}")]
    Law(#[from] LawError),
    #[error("represent: {0}")]
    Represent(#[from] RepresentError),
    #[error("g(0) = {g0} > 0 is outside the problem class")]
    RewardAtZeroPositive { g0: f64 },
    #[error("metadata cannot decide the regime: {0}")]
    InconsistentMetadata(String),
    #[error("shape violation: {0}")]
    ShapeViolation(String),
    #[error("c = {c} is outside [0, {cstar}]")]
    OutOfRange { c: f64, cstar: f64 },
    #[error("z has no sign change on [0, c*]: z(0) = {z0}, z(c*) = {zcstar}")]
    NoSignChange { z0: f64, zcstar: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveSketch {
    pub xmin: f64,
    pub fmin: f64,
    pub cstar: f64,
    pub xbar: f64,
    pub domain_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeTag {
    InfiniteValue,
    Degenerate,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub sketch_grid: usize,
    pub fixed_point_grid: usize,
    pub fixed_point_tol: f64,
    pub assumption2_grid: usize,
    pub assumption2_tol: f64,
    /// Overrides the default search cap for the curve sketch.
    pub cap: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            sketch_grid: 10_000,
            fixed_point_grid: 512,
            fixed_point_tol: 1e-11,
            assumption2_grid: 256,
            assumption2_tol: 1e-9,
            cap: None,
        }
    }
}

/// Search cap: twice the larger of the `1 - 1e-10` quantile of `M_T` under
/// `P_0` and the first doubling point where `f` is positive.
pub fn default_cap(f: &RepresentingFunction, law: &MaxLaw) -> f64 {
    let start = law.lower_boundary().max(0.0);
    let q = law.upper_quantile(start, 1e-10);
    let mut pos = 1.0;
    while f.eval(pos) <= 0.0 && pos < 1e6 {
        pos *= 2.0;
    }
    2.0 * q.max(pos)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

pub fn sketch(f: &RepresentingFunction, cap: f64) -> Result<CurveSketch, SolveError> {
    sketch_with_grid(f, cap, SolverOptions::default().sketch_grid)
}

pub fn sketch_with_grid(f: &RepresentingFunction, cap: f64, n: usize) -> Result<CurveSketch, SolveError> {
    if !(cap > 0.0) || n < 2 {
        return Err(SolveError::ShapeViolation(format!("invalid cap {cap} or grid {n}")));
    }
    let step = cap / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f.eval(step * i as f64)).collect();
    if vals.iter().any(|v| v.is_nan()) || !vals[0].is_finite() {
        return Err(SolveError::ShapeViolation("f is not finite on [0, cap]".into()));
    }
    let mut imin = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v < vals[imin] {
            imin = i;
        }
    }
    let mut xmin = if imin == 0 {
        0.0
    } else {
        let lo = step * (imin - 1) as f64;
        let hi = (step * (imin + 1) as f64).min(cap);
        golden_min(|x| f.eval(x), lo, hi, 1e-12)
    };
    if let Shape::Polynomial(p) = f.shape() {
        if xmin > 0.0 {
            // Newton on p' sharpens the comparison-limited golden section
            let (d1, d2) = (p.derivative(), p.derivative().derivative());
            for _ in 0..20 {
                let s = d2.eval(xmin);
                if !(s > 0.0) {
                    break;
                }
                let next = xmin - d1.eval(xmin) / s;
                if (next - xmin).abs() > step {
                    break;
                }
                let done = (next - xmin).abs() <= 1e-15 * (1.0 + xmin);
                xmin = next;
                if done {
                    break;
                }
            }
        }
    }
    let fmin = f.eval(xmin).min(vals[imin]);
    if !(fmin < 0.0) {
        return Err(SolveError::ShapeViolation(format!(
            "minimum value {fmin} is not negative"
        )));
    }
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in imin..n {
        if vals[i + 1] < vals[i] - 1e-13 * scale {
            return Err(SolveError::ShapeViolation(format!(
                "f decreases beyond its minimum near x = {}",
                step * (i + 1) as f64
            )));
        }
    }
    if !(vals[n] > 0.0) {
        return Err(SolveError::ShapeViolation(format!(
            "f is not positive at the cap {cap}; raise the cap"
        )));
    }
    let (mut lo, mut hi) = (xmin, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.eval(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let xbar = if f.eval(lo).abs() < f.eval(hi).abs() { lo } else { hi };
    Ok(CurveSketch {
        xmin,
        fmin,
        cstar: -fmin,
        xbar,
        domain_cap: cap,
    })
}

/// Regime of the problem from `g(0)` and the declared metadata of `f`.
pub fn classify(f: &RepresentingFunction, g0: f64, sketch: Option<&CurveSketch>) -> Result<RegimeTag, SolveError> {
    if g0 > ZERO_REWARD_TOL {
        return Err(SolveError::RewardAtZeroPositive { g0 });
    }
    let md = f.metadata();
    if g0.abs() <= ZERO_REWARD_TOL {
        match md.limit_at_zero {
            Limit::NegInfinity => return Ok(RegimeTag::InfiniteValue),
            Limit::Unknown => {
                return Err(SolveError::InconsistentMetadata(
                    "g(0) = 0 but the limit of f at 0 is unknown".into(),
                ))
            }
            Limit::Finite(_) => {}
        }
        match md.monotone_nondecreasing {
            TriState::Yes => return Ok(RegimeTag::Degenerate),
            TriState::Unknown => {
                return Err(SolveError::InconsistentMetadata(
                    "g(0) = 0 but monotonicity of f is unknown".into(),
                ))
            }
            TriState::No => {}
        }
        if let Some(s) = sketch {
            if !(s.xmin > 0.0) {
                return Err(SolveError::ShapeViolation(
                    "g(0) = 0 needs an interior minimum of f".into(),
                ));
            }
        }
    }
    Ok(RegimeTag::Threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootReport {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// The unique `x_c` in `[x_min, x_bar]` with `f(x_c) = -c`.
pub fn root_xc(f: &RepresentingFunction, c: f64, sketch: &CurveSketch) -> Result<f64, SolveError> {
    root_xc_report(f, c, sketch).map(|r| r.x)
}

pub fn root_xc_report(f: &RepresentingFunction, c: f64, sketch: &CurveSketch) -> Result<RootReport, SolveError> {
    let slack = 1e-14 * (1.0 + sketch.cstar);
    if !(c >= -slack && c <= sketch.cstar + slack) {
        return Err(SolveError::OutOfRange { c, cstar: sketch.cstar });
    }
    if c >= sketch.cstar {
        return Ok(RootReport {
            x: sketch.xmin,
            residual: (f.eval(sketch.xmin) + c).abs(),
            iterations: 0,
        });
    }
    if c <= 0.0 {
        return Ok(RootReport {
            x: sketch.xbar,
            residual: f.eval(sketch.xbar).abs(),
            iterations: 0,
        });
    }
    let (mut lo, mut hi) = (sketch.xmin, sketch.xbar);
    let mut iterations = 0;
    while iterations < 60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if f.eval(mid) + c < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f.eval(lo) + c, f.eval(hi) + c);
    // secant polish inside the final bracket
    let mut x = if fhi > flo { lo - flo * (hi - lo) / (fhi - flo) } else { 0.5 * (lo + hi) };
    if !(x >= lo && x <= hi) {
        x = 0.5 * (lo + hi);
    }
    let best = [lo, hi, x]
        .into_iter()
        .min_by(|a, b| (f.eval(*a) + c).abs().total_cmp(&(f.eval(*b) + c).abs()))
        .expect("non-empty");
    Ok(RootReport {
        x: best,
        residual: (f.eval(best) + c).abs(),
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub chat: f64,
    pub xstar: f64,
    /// `|z(c_hat)|`
    pub residual: f64,
    pub z_at_zero: f64,
    pub z_at_cstar: f64,
    /// Grid brackets `[c_i, c_{i+1}]` on which `z` changes sign.
    pub sign_changes: Vec<(f64, f64)>,
    pub bracket: (f64, f64),
    pub bisection_iterations: usize,
    pub root_residual: f64,
}

/// `z(c) = c - E_0[(f + c)(M_T); M_T >= x_c]`.
pub fn z_function(f: &RepresentingFunction, law: &MaxLaw, sketch: &CurveSketch, c: f64) -> Result<f64, SolveError> {
    let xc = root_xc(f, c, sketch)?;
    let value = law.restricted_expectation(0.0, &f.integrand().add_constant(c), xc)?;
    Ok(c - value)
}

/// Smallest root `c_hat` of `z` in `(0, c*]` and `x* = x_{c_hat}`.
pub fn fixed_point_chat(f: &RepresentingFunction, law: &MaxLaw, sketch: &CurveSketch) -> Result<(f64, f64), SolveError> {
    fixed_point_report(f, law, sketch, &SolverOptions::default()).map(|r| (r.chat, r.xstar))
}

pub fn fixed_point_report(
    f: &RepresentingFunction,
    law: &MaxLaw,
    sketch: &CurveSketch,
    opts: &SolverOptions,
) -> Result<FixedPointReport, SolveError> {
    let n = opts.fixed_point_grid.max(2);
    let cstar = sketch.cstar;
    let cs: Vec<f64> = (0..=n).map(|i| cstar * i as f64 / n as f64).collect();
    let zs = cs
        .iter()
        .map(|&c| z_function(f, law, sketch, c))
        .collect::<Result<Vec<_>, _>>()?;
    let (z0, zc) = (zs[0], zs[n]);
    let tol = 1e-12 * (1.0 + cstar);
    if z0 > tol || zc < -tol {
        return Err(SolveError::NoSignChange { z0, zcstar: zc });
    }
    let sign_changes: Vec<(f64, f64)> = (1..=n)
        .filter(|&i| (zs[i - 1] < 0.0) != (zs[i] < 0.0))
        .map(|i| (cs[i - 1], cs[i]))
        .collect();
    let first = (1..=n).find(|&i| zs[i] >= 0.0 && zs[i - 1] < 0.0);
    let (mut lo, mut hi, bracket, mut iterations) = match first {
        Some(i) => (cs[i - 1], cs[i], (cs[i - 1], cs[i]), 0),
        // z vanishes identically at the left end
        None => (0.0, 0.0, (0.0, 0.0), 0),
    };
    while hi - lo > opts.fixed_point_tol && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        let zm = z_function(f, law, sketch, mid)?;
        iterations += 1;
        if zm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let zhi = z_function(f, law, sketch, hi)?;
    let zlo = z_function(f, law, sketch, lo)?;
    let chat = if zlo.abs() < zhi.abs() { lo } else { hi };
    let root = root_xc_report(f, chat, sketch)?;
    Ok(FixedPointReport {
        chat,
        xstar: root.x,
        residual: zlo.abs().min(zhi.abs()),
        z_at_zero: z0,
        z_at_cstar: zc,
        sign_changes,
        bracket,
        bisection_iterations: iterations,
        root_residual: root.residual,
    })
}

/// `c_hat` and `x*` for `g(x) = x^2` under a spectrally negative law with
/// rate `theta`, through the Lambert W function.
pub fn lambert_threshold_square(theta: f64) -> (f64, f64) {
    let w = lambert_w0(-2.0 * (-2.0f64).exp());
    let y = -w * w - 2.0 * w;
    (y / (theta * theta), (2.0 + w) / theta)
}

/// `|g(x*) + v_hat(0) - v_hat(x*)|`, with `v_hat(x*)` recomputed through
/// the expectation operator at `x*`.
pub fn remark2_gap(
    fhat: &RepresentingFunction,
    law: &MaxLaw,
    g: impl Fn(f64) -> f64,
    xstar: f64,
) -> Result<f64, SolveError> {
    let h = fhat.integrand();
    let v0 = law.restricted_expectation(law.lower_boundary().max(0.0), &h, xstar)?;
    let vx = law.restricted_expectation(xstar, &h, xstar)?;
    Ok((g(xstar) + v0 - vx).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption2Route {
    /// `f_hat <= 0` on `(0, x_min)`.
    FhatNonPositive,
    /// Atom plus non-increasing density, `f_hat` decreasing on `[0, x_min]`.
    DecreasingDensity,
    /// Factorized law and a single sign change of `f_hat` on `(0, x_min)`.
    SingleSignChange,
    DirectAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption2Report {
    pub route: Assumption2Route,
    pub verified: bool,
    /// Largest `E_x[f_hat(M_T); M_T <= x*]` on the audit grid.
    pub worst_value: f64,
    pub worst_x: f64,
    pub grid_points: usize,
}

/// Checks `E_x[f_hat(M_T); M_T <= x*] <= 0` for `x` in `(0, x_min)`, first
/// through the sufficient conditions and otherwise on a grid.
pub fn check_assumption2(
    fhat: &RepresentingFunction,
    law: &MaxLaw,
    xstar: f64,
    sketch: &CurveSketch,
    opts: &SolverOptions,
) -> Result<Assumption2Report, SolveError> {
    let md = fhat.metadata();
    let decreasing = md.decreasing_on_left_of_min == TriState::Yes;
    let route = if sketch.xmin == 0.0 || (decreasing && fhat.eval(0.0) <= 0.0) {
        Some(Assumption2Route::FhatNonPositive)
    } else if law.has_nonincreasing_density() && law.is_translation_invariant() && decreasing {
        Some(Assumption2Route::DecreasingDensity)
    } else if law.is_factorized() && md.single_sign_change_left_of_min == TriState::Yes {
        Some(Assumption2Route::SingleSignChange)
    } else {
        None
    };

    let n = opts.assumption2_grid;
    let h = fhat.integrand();
    let mut worst_value = f64::NEG_INFINITY;
    let mut worst_x = f64::NAN;
    if sketch.xmin > 0.0 {
        for i in 1..=n {
            let x = sketch.xmin * i as f64 / (n + 1) as f64;
            let v = law.complement_expectation(x, &h, xstar)?;
            if v > worst_value {
                worst_value = v;
                worst_x = x;
            }
        }
    }
    let audit_ok = !(worst_value > opts.assumption2_tol);
    Ok(Assumption2Report {
        route: route.unwrap_or(Assumption2Route::DirectAudit),
        verified: route.is_some() || audit_ok,
        worst_value: if worst_value.is_finite() { worst_value } else { 0.0 },
        worst_x,
        grid_points: if sketch.xmin > 0.0 { n } else { 0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionInequalityReport {
    pub holds: bool,
    /// Smallest `lhs - rhs` on the grid.
    pub worst_slack: f64,
    pub worst_x: f64,
}

/// On `[0, x*]`, `g` must lie below the chord through `(psi(0), g(0))` and
/// `(psi(x*), g(x*))` in `psi`-coordinates.
pub fn diffusion_inequality(
    psi: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    xstar: f64,
    grid: usize,
) -> DiffusionInequalityReport {
    let (p0, ps) = (psi(0.0), psi(xstar));
    let (g0, gs) = (g(0.0), g(xstar));
    let d = ps - p0;
    let mut worst_slack = f64::INFINITY;
    let mut worst_x = 0.0;
    for i in 0..=grid {
        let x = xstar * i as f64 / grid as f64;
        let lhs = psi(x) * (gs - g0) / d;
        let rhs = (p0 * gs - ps * g0) / d + g(x);
        if lhs - rhs < worst_slack {
            worst_slack = lhs - rhs;
            worst_x = x;
        }
    }
    DiffusionInequalityReport {
        holds: worst_slack >= -1e-9,
        worst_slack,
        worst_x,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Regime {
    InfiniteValue,
    /// `v(0) = -f(0)`
    Degenerate { f0: f64, value_at_0: f64 },
    Threshold {
        chat: f64,
        xstar: f64,
        sketch: CurveSketch,
        assumption2: Assumption2Report,
    },
}

impl Regime {
    pub fn tag(&self) -> RegimeTag {
        match self {
            Self::InfiniteValue => RegimeTag::InfiniteValue,
            Self::Degenerate { .. } => RegimeTag::Degenerate,
            Self::Threshold { .. } => RegimeTag::Threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub fixed_point: Option<FixedPointReport>,
    pub remark2_gap: Option<f64>,
    pub representation: Option<RepresentationReport>,
    pub diffusion_inequality: Option<DiffusionInequalityReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub regime: Regime,
    pub diagnostics: Diagnostics,
}

/// Everything downstream evaluation needs.
#[derive(Debug, Clone)]
pub struct Solved {
    pub spec: ProblemSpec,
    pub law: MaxLaw,
    pub f: RepresentingFunction,
    pub solution: Solution,
}

/// The law of `M_T` and the representing function of the reward.
pub fn build_model(spec: &ProblemSpec) -> Result<(MaxLaw, RepresentingFunction), SolveError> {
    spec.validate()?;
    let law = law_for(&spec.process, spec.rate)?;
    let f = match (&spec.reward, &spec.process) {
        (Reward::PowerReward { m }, ProcessModel::ReflectedBM { sigma }) => {
            reflected_bm_representing_sigma(spec.rate, *sigma, *m)?
        }
        (Reward::PowerReward { m }, _) => appell(&law, *m)?,
        (Reward::GeometricReward { b, k }, _) => geometric_representing(&law, *b, *k)?,
        (Reward::TabulatedReward { x, f, .. }, _) => tabulated(x.clone(), f.clone())?,
    };
    Ok((law, f))
}

fn representation_grid(law: &MaxLaw, f: &RepresentingFunction, cap: f64) -> Vec<f64> {
    let lo = if law.lower_boundary() > f64::NEG_INFINITY || f.metadata().limit_at_zero == Limit::NegInfinity {
        law.lower_boundary().max(0.0) + 0.1
    } else {
        0.0
    };
    let hi = (0.25 * cap).max(lo + 1.0);
    (0..9).map(|i| lo + (hi - lo) * i as f64 / 8.0).collect()
}

pub fn solve_problem(spec: &ProblemSpec, opts: &SolverOptions) -> Result<Solved, SolveError> {
    let (law, f) = build_model(spec)?;
    let g = |x: f64| spec.reward.eval(x);
    let g0 = g(0.0);
    let mut diagnostics = Diagnostics::default();

    let cap = match opts.cap {
        Some(c) => c,
        None if f.metadata().limit_at_zero == Limit::NegInfinity => 2.0 * law.upper_quantile(law.lower_boundary().max(0.0), 1e-10),
        None => default_cap(&f, &law),
    };
    let grid = representation_grid(&law, &f, cap);
    let rep = verify_representation(&f, &law, g, &grid, 1e-7)?;
    if !rep.passed {
        diagnostics.warnings.push(format!(
            "representation identity off by {:.3e} at x = {}",
            rep.max_error, rep.worst_x
        ));
    }
    diagnostics.representation = Some(rep);

    let pre = classify(&f, g0, None)?;
    let regime = match pre {
        RegimeTag::InfiniteValue => Regime::InfiniteValue,
        RegimeTag::Degenerate => {
            let f0 = f.eval(0.0);
            Regime::Degenerate {
                f0,
                value_at_0: -f0,
            }
        }
        RegimeTag::Threshold => {
            let sk = sketch_with_grid(&f, cap, opts.sketch_grid)?;
            classify(&f, g0, Some(&sk))?;
            let fp = fixed_point_report(&f, &law, &sk, opts)?;
            let fhat = f.shifted(fp.chat);
            diagnostics.remark2_gap = Some(remark2_gap(&fhat, &law, g, fp.xstar)?);
            if let Some(psi) = law.psi() {
                if law.lower_boundary() <= 0.0 {
                    diagnostics.diffusion_inequality =
                        Some(diffusion_inequality(|x| psi(x), g, fp.xstar, opts.assumption2_grid));
                }
            }
            let a2 = check_assumption2(&fhat, &law, fp.xstar, &sk, opts)?;
            if !a2.verified {
                diagnostics.warnings.push(format!(
                    "Assumption 2 unverified: E_x[f_hat(M); M <= x*] = {:.3e} at x = {}",
                    a2.worst_value, a2.worst_x
                ));
            }
            diagnostics.warnings.push(format!(
                "f > 0 beyond its root only verified up to the cap {cap}"
            ));
            let (chat, xstar) = (fp.chat, fp.xstar);
            diagnostics.fixed_point = Some(fp);
            Regime::Threshold {
                chat,
                xstar,
                sketch: sk,
                assumption2: a2,
            }
        }
    };
    Ok(Solved {
        spec: spec.clone(),
        law,
        f,
        solution: Solution { regime, diagnostics },
    })
}

/// Convenience wrapper for the common integrand `f + c`.
pub fn shifted_integrand(f: &RepresentingFunction, c: f64) -> Integrand {
    f.integrand().add_constant(c)
}
