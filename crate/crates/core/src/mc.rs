//! Monte Carlo oracle: simulate the controlled process under threshold
//! strategies and the first-passage side of the fluctuation identity.
//!
//! Between jumps the diffusion part is advanced by exact Gaussian
//! increments. Crossings inside a step are detected with the Brownian
//! bridge and located by recursive bridge bisection, so creeping crossings
//! are recorded at the level itself. Jump times are drawn exactly and a
//! jump that lands at or above the level records the overshoot state.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::maxlaw::{law_for, LawError, MaxLaw};
use crate::problem::ProcessModel;
use crate::represent::RepresentingFunction;
use crate::valuefn::{eps_value_at_zero, ValueError};

/// Bisection depth of the crossing-time locator.
const LOCATE_LEVELS: usize = 22;
/// Bridge exponents above this give crossing probabilities below `e^-40`.
const BRIDGE_CUTOFF: f64 = 40.0;
/// Longest step, in units of `dt`, taken while the level is more than
/// `6 sigma sqrt(h)` away.
const MAX_STRETCH: f64 = 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("eps = {eps} is below the spatial resolution limit {min} of the time step")]
    EpsilonTooSmall { eps: f64, min: f64 },
    #[error("maxlaw: {0}")]
    Law(#[from] LawError),
    #[error("valuefn: {0}")]
    Value(#[from] ValueError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    /// A path stops once `e^{-r t}` drops below this.
    pub horizon_discount_floor: f64,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            n_paths: 100_000,
            horizon_discount_floor: 1e-6,
            seed: 20_240_601,
            antithetic: false,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<(), McError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(McError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(McError::InvalidConfig("n_paths must be at least 1".into()));
        }
        if !(self.horizon_discount_floor > 0.0 && self.horizon_discount_floor < 1.0) {
            return Err(McError::InvalidConfig("discount floor must lie in (0, 1)".into()));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(McError::InvalidConfig("antithetic sampling needs an even n_paths".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdStrategy {
    pub threshold: f64,
    pub restart: f64,
}

impl ThresholdStrategy {
    pub fn new(threshold: f64) -> Result<Self, McError> {
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(McError::InvalidConfig(format!("threshold must be non-negative, got {threshold}")));
        }
        Ok(Self { threshold, restart: 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CrossingStats {
    pub crossings: u64,
    /// Crossings caused by an upward jump.
    pub jump_crossings: u64,
    /// Largest `X_{tau-} - level` over jump crossings.
    pub max_overshoot: f64,
    /// Largest `|X_{tau-} - level|` over diffusive crossings.
    pub max_creep_error: f64,
}

impl CrossingStats {
    fn merge(&mut self, o: &Self) {
        self.crossings += o.crossings;
        self.jump_crossings += o.jump_crossings;
        self.max_overshoot = self.max_overshoot.max(o.max_overshoot);
        self.max_creep_error = self.max_creep_error.max(o.max_creep_error);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub elapsed: f64,
    pub seed: u64,
    pub dt: f64,
    /// Upper bound on the truncation bias from the discount floor.
    pub bias_bound: f64,
    pub stats: CrossingStats,
    pub warnings: Vec<String>,
}

impl Estimate {
    pub const CSV_HEADER: &'static str = "mean,stderr,n,seed,dt";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.12e},{:.12e},{},{},{}",
            self.mean, self.stderr, self.n_paths, self.seed, self.dt
        )
    }
}

#[derive(Debug, Clone)]
enum Jumps {
    None,
    /// `-Exp` with the given mean.
    Down { mean: f64 },
    /// `+Exp(eta_k)` with probability `weight_k`.
    Up { rates: Vec<f64>, cumulative: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Dynamics {
    mu: f64,
    sigma: f64,
    jump_rate: f64,
    jumps: Jumps,
    /// Simulate `W` and observe `|W|`.
    reflected: bool,
}

impl Dynamics {
    fn from_model(process: &ProcessModel) -> Self {
        match process {
            ProcessModel::BrownianWithDrift { mu, sigma } => Self {
                mu: *mu,
                sigma: *sigma,
                jump_rate: 0.0,
                jumps: Jumps::None,
                reflected: false,
            },
            ProcessModel::SpectrallyNegativeJumpDiffusion {
                mu,
                sigma,
                jump_rate,
                jump_mean,
            } => Self {
                mu: *mu,
                sigma: *sigma,
                jump_rate: *jump_rate,
                jumps: Jumps::Down { mean: *jump_mean },
                reflected: false,
            },
            ProcessModel::MixedExpUpwardJumpDiffusion {
                mu,
                sigma,
                up_rates,
                up_weights,
                jump_rate,
            } => {
                let total: f64 = up_weights.iter().sum();
                let mut acc = 0.0;
                let cumulative = up_weights
                    .iter()
                    .map(|w| {
                        acc += w / total;
                        acc
                    })
                    .collect();
                Self {
                    mu: *mu,
                    sigma: *sigma,
                    jump_rate: *jump_rate,
                    jumps: Jumps::Up {
                        rates: up_rates.clone(),
                        cumulative,
                    },
                    reflected: false,
                }
            }
            ProcessModel::ReflectedBM { sigma } => Self {
                mu: 0.0,
                sigma: *sigma,
                jump_rate: 0.0,
                jumps: Jumps::None,
                reflected: true,
            },
        }
    }

    fn observe(&self, w: f64) -> f64 {
        if self.reflected {
            w.abs()
        } else {
            w
        }
    }

    fn draw_jump<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.jumps {
            Jumps::None => 0.0,
            Jumps::Down { mean } => -mean * rng.sample::<f64, _>(Exp1),
            Jumps::Up { rates, cumulative } => {
                let u: f64 = rng.random();
                let k = cumulative.iter().position(|&c| u < c).unwrap_or(rates.len() - 1);
                rng.sample::<f64, _>(Exp1) / rates[k]
            }
        }
    }

    fn next_jump<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.jump_rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / self.jump_rate
        } else {
            f64::INFINITY
        }
    }

    /// Probability that the bridge from `a` to `b` over time `h` touches the
    /// level; both endpoints lie in the simulated (unreflected) coordinate.
    /// `k` is `2 / (sigma^2 h)`.
    fn bridge_prob(&self, a: f64, b: f64, k: f64, level: f64) -> f64 {
        let one_sided = |a: f64, b: f64| {
            if a >= level || b >= level {
                return 1.0;
            }
            let e = k * (level - a) * (level - b);
            if e > BRIDGE_CUTOFF {
                0.0
            } else {
                (-e).exp()
            }
        };
        if self.reflected {
            // approximation: ignores paths touching both barriers
            (one_sided(a, b) + one_sided(-a, -b)).min(1.0)
        } else {
            one_sided(a, b)
        }
    }
}

struct PathState {
    w: f64,
    t: f64,
    next_jump: f64,
}

enum Passage {
    Hit { t: f64, x_pre: f64, by_jump: bool },
    Expired,
}

struct Engine<'a> {
    dynamics: &'a Dynamics,
    dt: f64,
    sqrt_dt: f64,
    k_dt: f64,
    /// `1 / (6 sigma)^2`
    inv_far_scale: f64,
    t_max: f64,
}

impl Engine<'_> {
    /// Offset in `[0, h]` of the first touch of the level by the bridge from
    /// `a` to `b`, given that it touches.
    fn locate<R: Rng>(&self, mut a: f64, mut b: f64, h: f64, level: f64, sign: f64, rng: &mut R) -> f64 {
        let d = self.dynamics;
        let mut t0 = 0.0;
        let mut len = h;
        for _ in 0..LOCATE_LEVELS {
            let half = 0.5 * len;
            let sd = d.sigma * (0.25 * len).sqrt();
            let k = 2.0 / (d.sigma * d.sigma * half);
            let mut tries = 0u32;
            loop {
                tries += 1;
                let z: f64 = rng.sample(StandardNormal);
                let m = 0.5 * (a + b) + sd * sign * z;
                let p1 = d.bridge_prob(a, m, k, level);
                if rng.random::<f64>() < p1 {
                    b = m;
                    break;
                }
                let p2 = d.bridge_prob(m, b, k, level);
                if rng.random::<f64>() < p2 {
                    a = m;
                    t0 += half;
                    break;
                }
                if tries > 1_000_000 {
                    // numerically negligible crossing; settle for the midpoint
                    return t0 + half;
                }
            }
            len = half;
        }
        t0 + 0.5 * len
    }

    fn run_to_level<R: Rng>(&self, st: &mut PathState, level: f64, sign: f64, rng: &mut R) -> Passage {
        let d = self.dynamics;
        let x_now = d.observe(st.w);
        if x_now >= level {
            return Passage::Hit {
                t: st.t,
                x_pre: x_now,
                by_jump: false,
            };
        }
        while st.t < self.t_max {
            // far from the level a longer exact step changes nothing in law
            let dist = level - d.observe(st.w);
            let far = dist * dist * self.inv_far_scale;
            let base = if far > 2.0 * self.dt { far.min(MAX_STRETCH * self.dt) } else { self.dt };
            let (h, sq, k, jump) = if st.next_jump <= base {
                let h = st.next_jump;
                (h, h.sqrt(), 2.0 / (d.sigma * d.sigma * h), true)
            } else if base == self.dt {
                (self.dt, self.sqrt_dt, self.k_dt, false)
            } else {
                (base, base.sqrt(), 2.0 / (d.sigma * d.sigma * base), false)
            };
            let z: f64 = rng.sample(StandardNormal);
            let a = st.w;
            let b = a + d.mu * h + d.sigma * sq * sign * z;
            let p = d.bridge_prob(a, b, k, level);
            if p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p) {
                let tc = self.locate(a, b, h, level, sign, rng);
                return Passage::Hit {
                    t: st.t + tc,
                    x_pre: level,
                    by_jump: false,
                };
            }
            st.w = b;
            st.t += h;
            if jump {
                st.w += d.draw_jump(rng);
                st.next_jump = d.next_jump(rng);
                let x = d.observe(st.w);
                if x >= level && st.t < self.t_max {
                    return Passage::Hit {
                        t: st.t,
                        x_pre: x,
                        by_jump: true,
                    };
                }
            } else {
                st.next_jump -= h;
            }
        }
        Passage::Expired
    }
}

fn record(stats: &mut CrossingStats, level: f64, x_pre: f64, by_jump: bool) {
    stats.crossings += 1;
    if by_jump {
        stats.jump_crossings += 1;
        stats.max_overshoot = stats.max_overshoot.max(x_pre - level);
    } else {
        stats.max_creep_error = stats.max_creep_error.max((x_pre - level).abs());
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

struct PathResult {
    value: f64,
    stats: CrossingStats,
    max_abs_g: f64,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `path(rng, sign)` once per path (or antithetic pair) on
/// independent counter-based streams and aggregates in path order.
fn run_paths<F>(cfg: &SimConfig, r: f64, path: F) -> Result<Estimate, McError>
where
    F: Fn(&mut ChaCha8Rng, f64) -> PathResult + Sync,
{
    cfg.validate()?;
    let started = Instant::now();
    let mut warnings = Vec::new();
    if cfg.dt > 0.01 / r {
        let msg = format!("UnstableStep: dt = {} exceeds 0.01 / r = {}", cfg.dt, 0.01 / r);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let units = if cfg.antithetic { cfg.n_paths / 2 } else { cfg.n_paths };
    let results: Vec<(f64, CrossingStats, f64)> = (0..units as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i);
            let first = path(&mut rng, 1.0);
            if cfg.antithetic {
                let mut rng = rng_for(cfg.seed, i);
                let second = path(&mut rng, -1.0);
                let mut stats = first.stats;
                stats.merge(&second.stats);
                (
                    0.5 * (first.value + second.value),
                    stats,
                    first.max_abs_g.max(second.max_abs_g),
                )
            } else {
                (first.value, first.stats, first.max_abs_g)
            }
        })
        .collect();
    let n = results.len() as f64;
    let mean = compensated_sum(results.iter().map(|r| r.0)) / n;
    let var = if results.len() > 1 {
        compensated_sum(results.iter().map(|r| (r.0 - mean) * (r.0 - mean))) / (n - 1.0)
    } else {
        0.0
    };
    let mut stats = CrossingStats::default();
    let mut max_abs_g: f64 = 0.0;
    for r in &results {
        stats.merge(&r.1);
        max_abs_g = max_abs_g.max(r.2);
    }
    Ok(Estimate {
        mean,
        stderr: (var / n).sqrt(),
        n_paths: cfg.n_paths,
        elapsed: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
        dt: cfg.dt,
        bias_bound: cfg.horizon_discount_floor * max_abs_g,
        stats,
        warnings,
    })
}

fn engine<'a>(dynamics: &'a Dynamics, cfg: &SimConfig, r: f64) -> Engine<'a> {
    Engine {
        dynamics,
        dt: cfg.dt,
        sqrt_dt: cfg.dt.sqrt(),
        k_dt: 2.0 / (dynamics.sigma * dynamics.sigma * cfg.dt),
        inv_far_scale: 1.0 / (36.0 * dynamics.sigma * dynamics.sigma),
        t_max: (1.0 / cfg.horizon_discount_floor).ln() / r,
    }
}

/// Estimate of `E_0 sum_n e^{-r tau_n} g(X_{tau_n -})` under the threshold
/// strategy.
pub fn simulate_value(
    process: &ProcessModel,
    g: &(dyn Fn(f64) -> f64 + Sync),
    strategy: ThresholdStrategy,
    r: f64,
    cfg: &SimConfig,
) -> Result<Estimate, McError> {
    simulate_value_from(process, g, strategy, r, cfg, strategy.restart)
}

pub fn simulate_value_from(
    process: &ProcessModel,
    g: &(dyn Fn(f64) -> f64 + Sync),
    strategy: ThresholdStrategy,
    r: f64,
    cfg: &SimConfig,
    x0: f64,
) -> Result<Estimate, McError> {
    if !(r > 0.0) {
        return Err(McError::InvalidConfig(format!("rate must be positive, got {r}")));
    }
    if !(strategy.threshold > strategy.restart) {
        return Err(McError::InvalidConfig("threshold must exceed the restart level".into()));
    }
    let dynamics = Dynamics::from_model(process);
    if dynamics.reflected && x0 < 0.0 {
        return Err(LawError::OutOfDomain { x: x0 }.into());
    }
    let eng = engine(&dynamics, cfg, r);
    let level = strategy.threshold;
    let mut est = run_paths(cfg, r, |rng, sign| {
        let mut st = PathState {
            w: x0,
            t: 0.0,
            next_jump: dynamics.next_jump(rng),
        };
        let mut terms = Vec::new();
        let mut stats = CrossingStats::default();
        let mut max_abs_g: f64 = 0.0;
        while let Passage::Hit { t, x_pre, by_jump } = eng.run_to_level(&mut st, level, sign, rng) {
            let gv = g(x_pre);
            max_abs_g = max_abs_g.max(gv.abs());
            terms.push((-r * t).exp() * gv);
            record(&mut stats, level, x_pre, by_jump);
            st.w = strategy.restart;
            st.t = t;
            st.next_jump = dynamics.next_jump(rng);
            if t >= eng.t_max {
                break;
            }
        }
        PathResult {
            value: compensated_sum(terms.into_iter()),
            stats,
            max_abs_g,
        }
    })?;
    let coarse = 10.0 * dynamics.sigma * cfg.dt.sqrt();
    if level - strategy.restart < coarse {
        est.warnings.push(format!(
            "threshold distance {} is below 10 sigma sqrt(dt) = {coarse}",
            level - strategy.restart
        ));
    }
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsEstimate {
    pub eps: f64,
    pub estimate: Estimate,
    pub analytic: f64,
}

/// Simulated and analytic `v_eps(0)` for a ladder of `eps`-strategies.
pub fn simulate_eps_convergence(
    process: &ProcessModel,
    f: &RepresentingFunction,
    g: &(dyn Fn(f64) -> f64 + Sync),
    r: f64,
    eps_list: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<EpsEstimate>, McError> {
    let law: MaxLaw = law_for(process, r)?;
    let min = 10.0 * process.sigma() * cfg.dt.sqrt();
    eps_list
        .iter()
        .map(|&eps| {
            if eps < min {
                return Err(McError::EpsilonTooSmall { eps, min });
            }
            let analytic = eps_value_at_zero(&law, f, eps)?;
            let estimate = simulate_value(process, g, ThresholdStrategy::new(eps)?, r, cfg)?;
            Ok(EpsEstimate { eps, estimate, analytic })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationCheck {
    pub lhs: f64,
    pub rhs: Estimate,
    pub diff_in_se: f64,
}

/// `E_x[f(M_T); M_T >= y]` against a simulation of `E_x e^{-r tau_y} g(X_{tau_y})`.
#[allow(clippy::too_many_arguments)]
pub fn fluctuation_check(
    process: &ProcessModel,
    law: &MaxLaw,
    f: &RepresentingFunction,
    g: &(dyn Fn(f64) -> f64 + Sync),
    x: f64,
    y: f64,
    r: f64,
    cfg: &SimConfig,
) -> Result<FluctuationCheck, McError> {
    let lhs = law.restricted_expectation(x, &f.integrand(), y)?;
    let dynamics = Dynamics::from_model(process);
    let eng = engine(&dynamics, cfg, r);
    let rhs = run_paths(cfg, r, |rng, sign| {
        let mut st = PathState {
            w: x,
            t: 0.0,
            next_jump: dynamics.next_jump(rng),
        };
        let mut stats = CrossingStats::default();
        match eng.run_to_level(&mut st, y, sign, rng) {
            Passage::Hit { t, x_pre, by_jump } => {
                record(&mut stats, y, x_pre, by_jump);
                let gv = g(x_pre);
                PathResult {
                    value: (-r * t).exp() * gv,
                    stats,
                    max_abs_g: gv.abs(),
                }
            }
            Passage::Expired => PathResult {
                value: 0.0,
                stats,
                max_abs_g: 0.0,
            },
        }
    })?;
    let diff = (lhs - rhs.mean).abs();
    let diff_in_se = if rhs.stderr > 0.0 {
        diff / rhs.stderr
    } else if diff <= 1e-12 * (1.0 + lhs.abs()) {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(FluctuationCheck { lhs, rhs, diff_in_se })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm() -> ProcessModel {
        ProcessModel::BrownianWithDrift { mu: 0.0, sigma: 1.0 }
    }

    fn cfg(n: usize) -> SimConfig {
        SimConfig {
            n_paths: n,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        let g = |x: f64| x;
        let s = ThresholdStrategy::new(1.0).unwrap();
        let bad = SimConfig { dt: 0.0, ..cfg(10) };
        assert!(matches!(simulate_value(&bm(), &g, s, 0.5, &bad), Err(McError::InvalidConfig(_))));
        let odd = SimConfig {
            antithetic: true,
            ..cfg(11)
        };
        assert!(matches!(simulate_value(&bm(), &g, s, 0.5, &odd), Err(McError::InvalidConfig(_))));
        assert!(ThresholdStrategy::new(-1.0).is_err());
    }

    #[test]
    fn large_step_only_warns() {
        let g = |x: f64| x * x;
        let c = SimConfig { dt: 0.1, ..cfg(200) };
        let est = simulate_value(&bm(), &g, ThresholdStrategy::new(1.5).unwrap(), 0.5, &c).unwrap();
        assert!(est.warnings.iter().any(|w| w.starts_with("UnstableStep")));
        assert!(est.stderr >= 0.0);
    }

    #[test]
    fn identical_seeds_give_identical_estimates() {
        let g = |x: f64| x * x;
        let s = ThresholdStrategy::new(1.5).unwrap();
        let a = simulate_value(&bm(), &g, s, 0.5, &cfg(500)).unwrap();
        let b = simulate_value(&bm(), &g, s, 0.5, &cfg(500)).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.stderr, b.stderr);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| simulate_value(&bm(), &g, s, 0.5, &cfg(500)).unwrap());
        assert_eq!(a.mean, c.mean);
    }

    #[test]
    fn first_passage_laplace_transform() {
        // f = g = 1: E_x e^{-r tau_y} = e^{-theta (y - x)}
        let law = MaxLaw::ExponentialTail { theta: 1.0 };
        let c = crate::represent::RepresentingFunction::new(
            crate::represent::Shape::Polynomial(crate::polynomial::Polynomial::constant(1.0)),
            crate::represent::Metadata {
                monotone_nondecreasing: crate::represent::TriState::Yes,
                limit_at_zero: crate::represent::Limit::Finite(1.0),
                polynomial_coeffs: Some(vec![1.0]),
                decreasing_on_left_of_min: crate::represent::TriState::Yes,
                single_sign_change_left_of_min: crate::represent::TriState::Yes,
            },
            1.0,
        )
        .unwrap();
        let g = |_: f64| 1.0;
        let chk = fluctuation_check(&bm(), &law, &c, &g, 0.0, 1.0, 0.5, &cfg(20_000)).unwrap();
        assert!((chk.lhs - (-1.0f64).exp()).abs() < 1e-12);
        assert!(chk.diff_in_se < 4.0, "{chk:?}");
    }

    #[test]
    fn level_at_or_below_start_is_immediate() {
        let law = MaxLaw::ExponentialTail { theta: 1.0 };
        let q2 = crate::represent::appell(&law, 2).unwrap();
        let g = |x: f64| x * x;
        let chk = fluctuation_check(&bm(), &law, &q2, &g, 1.0, 0.5, 0.5, &cfg(100)).unwrap();
        assert!((chk.lhs - 1.0).abs() < 1e-12);
        assert_eq!(chk.rhs.mean, 1.0);
        assert_eq!(chk.rhs.stderr, 0.0);
        assert_eq!(chk.diff_in_se, 0.0);
    }

    #[test]
    fn creeping_and_overshoot() {
        let g = |x: f64| x;
        let s = ThresholdStrategy::new(1.0).unwrap();
        let snjd = ProcessModel::SpectrallyNegativeJumpDiffusion {
            mu: 0.3,
            sigma: 1.0,
            jump_rate: 2.0,
            jump_mean: 0.3,
        };
        let est = simulate_value(&snjd, &g, s, 0.5, &cfg(500)).unwrap();
        assert!(est.stats.crossings > 0);
        assert_eq!(est.stats.jump_crossings, 0);
        assert!(est.stats.max_creep_error < 1e-12);

        let up = ProcessModel::MixedExpUpwardJumpDiffusion {
            mu: 0.0,
            sigma: 1.0,
            up_rates: vec![3.0, 6.0],
            up_weights: vec![0.5, 0.5],
            jump_rate: 2.0,
        };
        let est = simulate_value(&up, &g, s, 0.5, &cfg(500)).unwrap();
        assert!(est.stats.jump_crossings > 0);
        assert!(est.stats.max_overshoot > 0.0);
    }

    #[test]
    fn eps_below_resolution_is_refused() {
        let f2 = crate::represent::reflected_bm_representing(0.5, 2).unwrap();
        let g = |x: f64| x * x;
        let rbm = ProcessModel::ReflectedBM { sigma: 1.0 };
        let err = simulate_eps_convergence(&rbm, &f2, &g, 0.5, &[0.5, 0.05], &cfg(10)).unwrap_err();
        assert!(matches!(err, McError::EpsilonTooSmall { .. }));
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let vals = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(vals.into_iter()), 2.0);
    }

    #[test]
    fn csv_row_has_five_fields() {
        let g = |x: f64| x;
        let est = simulate_value(&bm(), &g, ThresholdStrategy::new(1.0).unwrap(), 0.5, &cfg(50)).unwrap();
        assert_eq!(est.csv_row().split(',').count(), Estimate::CSV_HEADER.split(',').count());
    }
}
