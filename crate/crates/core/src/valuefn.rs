//! Value functions of the solved regimes, threshold-strategy values, the
//! intervention operator and the verification audit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maxlaw::{Integrand, LawError, MaxLaw};
use crate::problem::Reward;
use crate::represent::RepresentingFunction;
use crate::solve::{Regime, Solved};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValueError {
    #[error("the value function is infinite in this regime")]
    InfiniteValueRegime,
    #[error("maxlaw: {0}")]
    Law(#[from] LawError),
    #[error("audit check ({check}) failed at x = {x}: {detail}")]
    AuditFailed { check: char, x: f64, detail: String },
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("smooth fit needs a factorized law without overshoot")]
    NotFactorized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ValueKind {
    Threshold,
    Degenerate,
}

/// `v(x) = E_x[f_hat(M_T); M_T >= threshold]`, with `f_hat = f + c_hat` and
/// threshold `x*` (Threshold) or `f_hat = f - f(0)` and threshold 0
/// (Degenerate).
#[derive(Debug, Clone)]
pub struct ValueFunction {
    kind: ValueKind,
    law: MaxLaw,
    fhat: RepresentingFunction,
    reward: Reward,
    threshold: f64,
    /// `c_hat` or `-f(0)`; in both cases `v(x) = g(x) + offset` above the threshold.
    offset: f64,
}

impl ValueFunction {
    pub fn from_solved(solved: &Solved) -> Result<Self, ValueError> {
        let (kind, threshold, offset) = match &solved.solution.regime {
            Regime::InfiniteValue => return Err(ValueError::InfiniteValueRegime),
            Regime::Degenerate { f0, .. } => (ValueKind::Degenerate, 0.0, -f0),
            Regime::Threshold { chat, xstar, .. } => (ValueKind::Threshold, *xstar, *chat),
        };
        Ok(Self {
            kind,
            law: solved.law.clone(),
            fhat: solved.f.shifted(offset),
            reward: solved.spec.reward.clone(),
            threshold,
            offset,
        })
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn law(&self) -> &MaxLaw {
        &self.law
    }

    pub fn fhat(&self) -> &RepresentingFunction {
        &self.fhat
    }

    pub fn g(&self, x: f64) -> f64 {
        self.reward.eval(x)
    }

    /// `v(0)`: `c_hat` (Threshold) or `-f(0)` (Degenerate).
    pub fn v0(&self) -> f64 {
        self.offset
    }

    pub fn evaluate(&self, x: f64) -> Result<f64, ValueError> {
        if x < self.law.lower_boundary() {
            return Err(LawError::OutOfDomain { x }.into());
        }
        if x >= self.threshold {
            return Ok(self.g(x) + self.offset);
        }
        if self.law.is_factorized() {
            return Ok(self.law.tail_prob(x, self.threshold) * (self.g(self.threshold) + self.offset));
        }
        self.evaluate_by_quadrature(x)
    }

    /// `E_x[f_hat(M_T); M_T >= threshold]` straight from the expectation
    /// operator, bypassing every shortcut.
    pub fn evaluate_by_quadrature(&self, x: f64) -> Result<f64, ValueError> {
        let fhat = self.fhat.clone();
        let h = Integrand::from_fn(move |y| fhat.eval(y));
        Ok(self.law.restricted_expectation(x, &h, self.threshold)?)
    }

    /// `M v(x) = g(x) + v(0)` for `x >= 0`, `-inf` below.
    pub fn intervention_operator(&self, x: f64) -> f64 {
        if x < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.g(x) + self.v0()
        }
    }

    /// `|v'(x*-) - v'(x*+)|` from the analytically continued branches.
    pub fn smooth_fit_gap(&self, h: f64) -> Result<f64, ValueError> {
        let strategy = ThresholdStrategyValue::with_v0(self.law.clone(), self.reward.clone(), self.threshold, self.offset);
        strategy.smooth_fit_gap(h)
    }

    pub fn curve(&self, lo: f64, hi: f64, n: usize) -> Result<Vec<CurvePoint>, ValueError> {
        let n = n.max(1);
        (0..=n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / n as f64;
                Ok(CurvePoint {
                    x,
                    v: self.evaluate(x)?,
                    mv: self.intervention_operator(x),
                    g: self.g(x),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub v: f64,
    pub mv: f64,
    pub g: f64,
}

/// Value of the strategy "restart at 0 whenever the state reaches
/// `[eps, inf)`": `V(x) = E_x[f(M_T); M_T >= eps] + V(0) P_x(M_T >= eps)`
/// with `V(0) = E_0[f(M_T); M_T >= eps] / (1 - P_0(M_T >= eps))`.
#[derive(Debug, Clone)]
pub struct ThresholdStrategyValue {
    law: MaxLaw,
    reward: Reward,
    f: Option<RepresentingFunction>,
    eps: f64,
    v0: f64,
}

impl ThresholdStrategyValue {
    pub fn new(law: MaxLaw, f: RepresentingFunction, reward: Reward, eps: f64) -> Result<Self, ValueError> {
        if !(eps > law.lower_boundary().max(0.0)) || !eps.is_finite() {
            return Err(ValueError::InvalidThreshold(eps));
        }
        let start = 0.0;
        let gain = law.restricted_expectation(start, &f.integrand(), eps)?;
        let hit = law.tail_prob(start, eps);
        Ok(Self {
            law,
            reward,
            f: Some(f),
            eps,
            v0: gain / (1.0 - hit),
        })
    }

    fn with_v0(law: MaxLaw, reward: Reward, eps: f64, v0: f64) -> Self {
        Self {
            law,
            reward,
            f: None,
            eps,
            v0,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.eps
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn value(&self, x: f64) -> Result<f64, ValueError> {
        if x >= self.eps {
            return Ok(self.reward.eval(x) + self.v0);
        }
        if self.law.is_factorized() {
            return Ok(self.law.tail_prob(x, self.eps) * (self.reward.eval(self.eps) + self.v0));
        }
        let f = self.f.as_ref().ok_or(ValueError::NotFactorized)?;
        let gain = self.law.restricted_expectation(x, &f.integrand(), self.eps)?;
        Ok(gain + self.v0 * self.law.tail_prob(x, self.eps))
    }

    /// Derivative gap at the threshold between the left branch
    /// `psi(x) / psi(eps) * (g(eps) + V(0))` and the right branch
    /// `g(x) + V(0)`, both continued across `eps`; symmetric differences
    /// with one Richardson step.
    pub fn smooth_fit_gap(&self, h: f64) -> Result<f64, ValueError> {
        let psi = self.law.psi().ok_or(ValueError::NotFactorized)?;
        let eps = self.eps;
        if eps - h < self.law.lower_boundary() {
            return Err(ValueError::InvalidThreshold(eps));
        }
        let level = (self.reward.eval(eps) + self.v0) / psi(eps);
        let left = |x: f64| psi(x) * level;
        let right = |x: f64| self.reward.eval(x) + self.v0;
        let d = |fun: &dyn Fn(f64) -> f64, step: f64| (fun(eps + step) - fun(eps - step)) / (2.0 * step);
        let rich = |fun: &dyn Fn(f64) -> f64| (4.0 * d(fun, h / 2.0) - d(fun, h)) / 3.0;
        Ok((rich(&left) - rich(&right)).abs())
    }
}

/// `v_eps(0) = E_0[f(M_T); M_T >= eps] / (1 - P_0(M_T >= eps))`.
pub fn eps_value_at_zero(law: &MaxLaw, f: &RepresentingFunction, eps: f64) -> Result<f64, ValueError> {
    let gain = law.restricted_expectation(0.0, &f.integrand(), eps)?;
    Ok(gain / (1.0 - law.tail_prob(0.0, eps)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub points: usize,
    pub min_v: f64,
    /// Largest `M v - v` on the grid.
    pub max_violation: f64,
    /// Grid points at or above the threshold where `|v - M v| > tol`.
    pub equality_failures: usize,
    /// Grid points in `(0, threshold)` where `v - M v <= tol`.
    pub strictness_failures: usize,
    /// Largest gap between the shortcut and the quadrature route.
    pub harmonicity_gap: f64,
    pub passed: bool,
}

pub const AUDIT_TOL: f64 = 1e-8;

/// Checks (a) `v >= 0`, (b) `v >= M v` with equality on `[threshold, inf)`,
/// (c) agreement of `v` with the expectation operator.
pub fn verification_audit(vf: &ValueFunction, grid: &[f64]) -> Result<AuditReport, ValueError> {
    let v = grid.iter().map(|&x| vf.evaluate(x)).collect::<Result<Vec<_>, _>>()?;
    let mv: Vec<f64> = grid.iter().map(|&x| vf.intervention_operator(x)).collect();
    let mut harmonicity_gap: f64 = 0.0;
    for (&x, &vx) in grid.iter().zip(&v) {
        let direct = vf.evaluate_by_quadrature(x)?;
        if (direct - vx).abs() > harmonicity_gap {
            harmonicity_gap = (direct - vx).abs();
        }
        if (direct - vx).abs() > AUDIT_TOL * (1.0 + vx.abs()) {
            return Err(ValueError::AuditFailed {
                check: 'c',
                x,
                detail: format!("v = {vx}, expectation operator gives {direct}"),
            });
        }
    }
    let mut report = audit_values(grid, &v, &mv, vf.threshold())?;
    report.harmonicity_gap = harmonicity_gap;
    Ok(report)
}

/// Checks (a) and (b) on precomputed values.
pub fn audit_values(grid: &[f64], v: &[f64], mv: &[f64], threshold: f64) -> Result<AuditReport, ValueError> {
    let mut min_v = f64::INFINITY;
    let mut max_violation = f64::NEG_INFINITY;
    let mut equality_failures = 0;
    let mut strictness_failures = 0;
    for ((&x, &vx), &mx) in grid.iter().zip(v).zip(mv) {
        min_v = min_v.min(vx);
        if vx < -AUDIT_TOL {
            return Err(ValueError::AuditFailed {
                check: 'a',
                x,
                detail: format!("v = {vx} < 0"),
            });
        }
        if mx == f64::NEG_INFINITY {
            continue;
        }
        let excess = mx - vx;
        max_violation = max_violation.max(excess);
        if excess > AUDIT_TOL {
            return Err(ValueError::AuditFailed {
                check: 'b',
                x,
                detail: format!("M v = {mx} exceeds v = {vx}"),
            });
        }
        if x >= threshold {
            if excess.abs() > AUDIT_TOL {
                equality_failures += 1;
            }
        } else if x > 0.0 && -excess <= AUDIT_TOL {
            strictness_failures += 1;
        }
    }
    Ok(AuditReport {
        points: grid.len(),
        min_v,
        max_violation,
        equality_failures,
        strictness_failures,
        harmonicity_gap: 0.0,
        passed: equality_failures == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ProblemSpec, ProcessModel};
    use crate::represent::reflected_bm_representing;
    use crate::solve::{lambert_threshold_square, solve_problem, SolverOptions};

    fn solved(process: ProcessModel, reward: Reward, rate: f64) -> Solved {
        solve_problem(&ProblemSpec::new(process, reward, rate).unwrap(), &SolverOptions::default()).unwrap()
    }

    fn bm() -> ProcessModel {
        ProcessModel::BrownianWithDrift { mu: 0.0, sigma: 1.0 }
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn threshold_value_examples() {
        let vf = ValueFunction::from_solved(&solved(bm(), Reward::PowerReward { m: 2 }, 0.5)).unwrap();
        let (chat, xstar) = lambert_threshold_square(1.0);
        let at = vf.evaluate(vf.threshold()).unwrap();
        assert!((at - (xstar * xstar + chat)).abs() < 1e-8);
        assert!((at - 3.1876).abs() < 1e-3);
        // continuity of the two branches
        let below = vf.evaluate(vf.threshold() - 1e-10).unwrap();
        assert!((below - at).abs() < 1e-8);
        assert!((vf.evaluate(0.0).unwrap() - vf.v0()).abs() < 1e-9);
        for &x in &[-2.0, -0.5, 0.3, 1.0] {
            let closed = (xstar * xstar + chat) * (-(xstar - x)).exp();
            assert!((vf.evaluate(x).unwrap() - closed).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_value_examples() {
        let vf = ValueFunction::from_solved(&solved(bm(), Reward::PowerReward { m: 1 }, 0.5)).unwrap();
        for &x in &[0.0, 0.5, 2.0] {
            assert!((vf.evaluate(x).unwrap() - (x + 1.0)).abs() < 1e-12);
        }
        assert!((vf.evaluate(-1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!((vf.evaluate_by_quadrature(-1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-9);

        let rbm = ValueFunction::from_solved(&solved(
            ProcessModel::ReflectedBM { sigma: 1.0 },
            Reward::PowerReward { m: 2 },
            0.5,
        ))
        .unwrap();
        for x in linspace(0.0, 4.0, 21) {
            assert!((rbm.evaluate(x).unwrap() - (x * x + 2.0)).abs() < 1e-12);
            assert!((rbm.evaluate_by_quadrature(x).unwrap() - (x * x + 2.0)).abs() < 1e-8, "x {x}");
        }
    }

    #[test]
    fn infinite_regime_has_no_value_function() {
        let s = solved(ProcessModel::ReflectedBM { sigma: 1.0 }, Reward::PowerReward { m: 1 }, 0.5);
        assert!(matches!(ValueFunction::from_solved(&s), Err(ValueError::InfiniteValueRegime)));
    }

    #[test]
    fn intervention_operator_examples() {
        let vf = ValueFunction::from_solved(&solved(bm(), Reward::PowerReward { m: 2 }, 0.5)).unwrap();
        assert_eq!(vf.intervention_operator(-0.1), f64::NEG_INFINITY);
        for &x in &[vf.threshold(), 2.0, 3.5] {
            assert!((vf.intervention_operator(x) - vf.evaluate(x).unwrap()).abs() < 1e-9);
        }
        let deg = ValueFunction::from_solved(&solved(bm(), Reward::PowerReward { m: 1 }, 0.5)).unwrap();
        for &x in &[0.0, 0.4, 3.0] {
            assert!((deg.intervention_operator(x) - deg.evaluate(x).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn audit_passes_and_detects_faults() {
        let vf = ValueFunction::from_solved(&solved(bm(), Reward::PowerReward { m: 2 }, 0.5)).unwrap();
        let grid = linspace(-1.0, 2.0 * vf.threshold(), 64);
        let rep = verification_audit(&vf, &grid).unwrap();
        assert!(rep.passed, "{rep:?}");
        // equality at x = 0 is expected since g(0) = 0
        assert_eq!(rep.strictness_failures, 0);

        let mut v: Vec<f64> = grid.iter().map(|&x| vf.evaluate(x).unwrap()).collect();
        let mv: Vec<f64> = grid.iter().map(|&x| vf.intervention_operator(x)).collect();
        let i = grid.iter().position(|&x| x >= vf.threshold()).unwrap();
        v[i] -= 0.01;
        let err = audit_values(&grid, &v, &mv, vf.threshold()).unwrap_err();
        assert!(matches!(err, ValueError::AuditFailed { check: 'b', .. }));
    }

    #[test]
    fn smooth_fit_examples() {
        let vf = ValueFunction::from_solved(&solved(bm(), Reward::PowerReward { m: 2 }, 0.5)).unwrap();
        assert!(vf.smooth_fit_gap(1e-4).unwrap() < 1e-6);
        let f = crate::represent::appell(vf.law(), 2).unwrap();
        for d in [-0.05, 0.05] {
            let off = ThresholdStrategyValue::new(vf.law().clone(), f.clone(), Reward::PowerReward { m: 2 }, vf.threshold() + d)
                .unwrap();
            assert!(off.smooth_fit_gap(1e-4).unwrap() > 1e-3);
        }
        let rbm3 = ValueFunction::from_solved(&solved(
            ProcessModel::ReflectedBM { sigma: 1.0 },
            Reward::PowerReward { m: 3 },
            0.5,
        ))
        .unwrap();
        assert!(rbm3.smooth_fit_gap(1e-4).unwrap() < 1e-5);
    }

    #[test]
    fn threshold_strategy_reproduces_optimal_value() {
        let vf = ValueFunction::from_solved(&solved(bm(), Reward::PowerReward { m: 2 }, 0.5)).unwrap();
        let f = crate::represent::appell(vf.law(), 2).unwrap();
        let s = ThresholdStrategyValue::new(vf.law().clone(), f.clone(), Reward::PowerReward { m: 2 }, vf.threshold()).unwrap();
        assert!((s.v0() - vf.v0()).abs() < 1e-9);
        // V(x') = x'^2 / (e^{x'} - 1) for theta = 1
        for &scale in &[0.8, 1.2] {
            let e = scale * vf.threshold();
            let other = ThresholdStrategyValue::new(vf.law().clone(), f.clone(), Reward::PowerReward { m: 2 }, e).unwrap();
            assert!((other.v0() - e * e / (e.exp() - 1.0)).abs() < 1e-12);
            assert!(other.v0() < s.v0());
        }
    }

    #[test]
    fn eps_values_for_reflected_motion() {
        let law = MaxLaw::ReflectedBMMax { rate: 0.5, sigma: 1.0 };
        let f1 = reflected_bm_representing(0.5, 1).unwrap();
        let ladder: Vec<f64> = [0.5, 0.1, 0.02]
            .iter()
            .map(|&e| eps_value_at_zero(&law, &f1, e).unwrap())
            .collect();
        assert!(ladder[0] < ladder[1] && ladder[1] < ladder[2]);
        assert!(ladder[2] > 2.0 * ladder[0]);

        let f2 = reflected_bm_representing(0.5, 2).unwrap();
        let ladder: Vec<f64> = [0.5, 0.1, 0.02]
            .iter()
            .map(|&e| eps_value_at_zero(&law, &f2, e).unwrap())
            .collect();
        assert!(ladder.windows(2).all(|w| w[1] > w[0]));
        assert!((ladder[2] - 2.0).abs() < 1e-3 && ladder[2] < 2.0);
        // the complement form agrees since g(0) = 0
        for &e in &[0.5, 0.1] {
            let h = f2.integrand();
            let below = law.complement_expectation(0.0, &h, e).unwrap();
            let alt = -below / (1.0 - law.tail_prob(0.0, e));
            assert!((alt - eps_value_at_zero(&law, &f2, e).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn value_is_monotone_on_positive_axis() {
        for s in [
            solved(bm(), Reward::PowerReward { m: 2 }, 0.5),
            solved(bm(), Reward::GeometricReward { b: 1.0, k: 2.0 }, 2.0),
            solved(ProcessModel::ReflectedBM { sigma: 1.0 }, Reward::PowerReward { m: 3 }, 0.5),
        ] {
            let vf = ValueFunction::from_solved(&s).unwrap();
            let vals: Vec<f64> = linspace(0.0, 3.0 * vf.threshold(), 100)
                .iter()
                .map(|&x| vf.evaluate(x).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            assert!(vals.iter().all(|&v| v >= 0.0));
        }
    }
}
