//! Problem definition: process model, reward family and discount rate.
//!
//! The configuration document is JSON with top-level keys `process`,
//! `reward`, `rate` (and optionally `restart_state`, which must be 0).
//! Enum variants use serde's external tagging, e.g.
//!
//! ```json
//! {"process": {"BrownianWithDrift": {"mu": 0.0, "sigma": 1.0}},
//!  "reward": {"PowerReward": {"m": 2}},
//!  "rate": 0.5}
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("malformed configuration: {0}")]
    MalformedConfig(String),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("integrability violated: Levy exponent at b is {psi_b}, must be below the rate {rate}")]
    IntegrabilityViolation { psi_b: f64, rate: f64 },
    #[error("Levy exponent is infinite at lambda = {lambda}")]
    DomainError { lambda: f64 },
    #[error("{0} is not a Levy model")]
    UnsupportedModel(&'static str),
}

fn invalid(field: &str, reason: impl Into<String>) -> ProblemError {
    ProblemError::InvalidParameter {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProcessModel {
    BrownianWithDrift {
        mu: f64,
        sigma: f64,
    },
    /// Brownian motion with drift plus compound Poisson downward jumps
    /// with exponentially distributed sizes of mean `jump_mean`.
    SpectrallyNegativeJumpDiffusion {
        mu: f64,
        sigma: f64,
        jump_rate: f64,
        jump_mean: f64,
    },
    /// Brownian motion with drift plus compound Poisson upward jumps whose
    /// sizes are a mixture of exponentials with rates `up_rates`.
    MixedExpUpwardJumpDiffusion {
        mu: f64,
        sigma: f64,
        up_rates: Vec<f64>,
        up_weights: Vec<f64>,
        jump_rate: f64,
    },
    /// `sigma * |W|` for a standard Brownian motion `W`.
    ReflectedBM {
        sigma: f64,
    },
}

impl ProcessModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BrownianWithDrift { .. } => "BrownianWithDrift",
            Self::SpectrallyNegativeJumpDiffusion { .. } => "SpectrallyNegativeJumpDiffusion",
            Self::MixedExpUpwardJumpDiffusion { .. } => "MixedExpUpwardJumpDiffusion",
            Self::ReflectedBM { .. } => "ReflectedBM",
        }
    }

    pub fn is_levy(&self) -> bool {
        !matches!(self, Self::ReflectedBM { .. })
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            Self::BrownianWithDrift { sigma, .. }
            | Self::SpectrallyNegativeJumpDiffusion { sigma, .. }
            | Self::MixedExpUpwardJumpDiffusion { sigma, .. }
            | Self::ReflectedBM { sigma } => sigma,
        }
    }

    /// Lowest state the process can occupy.
    pub fn lower_boundary(&self) -> f64 {
        if self.is_levy() {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<(), ProblemError> {
        let check_sigma = |sigma: f64| {
            if !(sigma.is_finite() && sigma > 0.0) {
                Err(invalid("sigma", format!("must be positive, got {sigma}")))
            } else {
                Ok(())
            }
        };
        let check_mu = |mu: f64| {
            if !mu.is_finite() {
                Err(invalid("mu", "must be finite"))
            } else {
                Ok(())
            }
        };
        let check_jump_rate = |rate: f64| {
            if !(rate.is_finite() && rate >= 0.0) {
                Err(invalid("jump_rate", format!("must be non-negative, got {rate}")))
            } else {
                Ok(())
            }
        };
        match self {
            Self::BrownianWithDrift { mu, sigma } => {
                check_mu(*mu)?;
                check_sigma(*sigma)
            }
            Self::SpectrallyNegativeJumpDiffusion {
                mu,
                sigma,
                jump_rate,
                jump_mean,
            } => {
                check_mu(*mu)?;
                check_sigma(*sigma)?;
                check_jump_rate(*jump_rate)?;
                if !(jump_mean.is_finite() && *jump_mean > 0.0) {
                    return Err(invalid("jump_mean", format!("must be positive, got {jump_mean}")));
                }
                Ok(())
            }
            Self::MixedExpUpwardJumpDiffusion {
                mu,
                sigma,
                up_rates,
                up_weights,
                jump_rate,
            } => {
                check_mu(*mu)?;
                check_sigma(*sigma)?;
                check_jump_rate(*jump_rate)?;
                if up_rates.is_empty() || up_rates.len() != up_weights.len() {
                    return Err(invalid(
                        "up_rates",
                        "must be non-empty and match up_weights in length",
                    ));
                }
                if up_rates.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
                    return Err(invalid("up_rates", "all rates must be positive"));
                }
                let mut sorted = up_rates.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(invalid("up_rates", "rates must be distinct"));
                }
                if up_weights.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
                    return Err(invalid("up_weights", "all weights must be positive"));
                }
                let total: f64 = up_weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid("up_weights", format!("must sum to 1, got {total}")));
                }
                Ok(())
            }
            Self::ReflectedBM { sigma } => check_sigma(*sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reward {
    /// `g(x) = x^m`
    PowerReward { m: u32 },
    /// `g(x) = e^{b x} - k`
    GeometricReward { b: f64, k: f64 },
    /// Samples of `g` and of a caller-supplied representing function `f` on
    /// a common grid starting at 0; both are linearly interpolated and
    /// linearly extrapolated past the last node.
    TabulatedReward { x: Vec<f64>, g: Vec<f64>, f: Vec<f64> },
}

impl Reward {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::PowerReward { m } => x.powi(*m as i32),
            Self::GeometricReward { b, k } => (b * x).exp() - k,
            Self::TabulatedReward { x: grid, g, .. } => interpolate(grid, g, x),
        }
    }

    fn validate(&self) -> Result<(), ProblemError> {
        match self {
            Self::PowerReward { m } => {
                if *m == 0 {
                    return Err(invalid("m", "exponent must be a positive integer"));
                }
                Ok(())
            }
            Self::GeometricReward { b, k } => {
                if !(b.is_finite() && *b > 0.0) {
                    return Err(invalid("b", format!("must be positive, got {b}")));
                }
                if !(k.is_finite() && *k > 1.0) {
                    return Err(invalid("k", format!("must exceed 1, got {k}")));
                }
                Ok(())
            }
            Self::TabulatedReward { x, g, f } => {
                if x.len() < 2 || x.len() != g.len() || x.len() != f.len() {
                    return Err(invalid(
                        "x",
                        "tabulated grid needs at least two nodes and matching g, f lengths",
                    ));
                }
                if x[0] != 0.0 {
                    return Err(invalid("x", "tabulated grid must start at 0"));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("x", "tabulated grid must be strictly increasing"));
                }
                if x.iter().chain(g).chain(f).any(|v| !v.is_finite()) {
                    return Err(invalid("g", "tabulated values must be finite"));
                }
                Ok(())
            }
        }
    }
}

/// Piecewise-linear interpolation with linear extrapolation at both ends.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub process: ProcessModel,
    pub reward: Reward,
    pub rate: f64,
    #[serde(default)]
    pub restart_state: f64,
}

impl ProblemSpec {
    pub fn new(process: ProcessModel, reward: Reward, rate: f64) -> Result<Self, ProblemError> {
        let spec = Self {
            process,
            reward,
            rate,
            restart_state: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(invalid("rate", format!("must be positive, got {}", self.rate)));
        }
        if self.restart_state != 0.0 {
            return Err(invalid("restart_state", "the restart level is fixed at 0"));
        }
        self.process.validate()?;
        self.reward.validate()?;
        if let Reward::GeometricReward { b, .. } = self.reward {
            if !self.process.is_levy() {
                return Err(invalid(
                    "reward",
                    "GeometricReward is only supported for Levy process models",
                ));
            }
            let psi_b = match levy_exponent(&self.process, b) {
                Ok(v) => v,
                Err(ProblemError::DomainError { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if !(psi_b < self.rate) {
                return Err(ProblemError::IntegrabilityViolation {
                    psi_b,
                    rate: self.rate,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem specs always serialize")
    }
}

/// Parse and validate a JSON configuration document.
pub fn parse_problem(text: &str) -> Result<ProblemSpec, ProblemError> {
    let spec: ProblemSpec =
        serde_json::from_str(text).map_err(|e| ProblemError::MalformedConfig(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// `Psi(lambda)` with `E_0 exp(lambda X_t) = exp(t Psi(lambda))`.
pub fn levy_exponent(process: &ProcessModel, lambda: f64) -> Result<f64, ProblemError> {
    match *process {
        ProcessModel::BrownianWithDrift { mu, sigma } => {
            Ok(mu * lambda + 0.5 * sigma * sigma * lambda * lambda)
        }
        ProcessModel::SpectrallyNegativeJumpDiffusion {
            mu,
            sigma,
            jump_rate,
            jump_mean,
        } => {
            // E exp(-lambda J) = 1 / (1 + lambda m) for J ~ Exp(mean m)
            if 1.0 + lambda * jump_mean <= 0.0 {
                return Err(ProblemError::DomainError { lambda });
            }
            Ok(mu * lambda
                + 0.5 * sigma * sigma * lambda * lambda
                + jump_rate * (1.0 / (1.0 + lambda * jump_mean) - 1.0))
        }
        ProcessModel::MixedExpUpwardJumpDiffusion { ref up_rates, .. } => {
            let min_rate = up_rates.iter().cloned().fold(f64::INFINITY, f64::min);
            if lambda >= min_rate {
                return Err(ProblemError::DomainError { lambda });
            }
            Ok(mixed_exponent_unchecked(process, lambda))
        }
        ProcessModel::ReflectedBM { .. } => Err(ProblemError::UnsupportedModel("ReflectedBM")),
    }
}

/// Rational continuation of the mixed-exponential exponent past its first
/// pole; only meaningful away from the poles `up_rates`.
pub(crate) fn mixed_exponent_unchecked(process: &ProcessModel, lambda: f64) -> f64 {
    match process {
        ProcessModel::MixedExpUpwardJumpDiffusion {
            mu,
            sigma,
            up_rates,
            up_weights,
            jump_rate,
        } => {
            let jumps: f64 = up_rates
                .iter()
                .zip(up_weights)
                .map(|(&eta, &p)| p * (eta / (eta - lambda) - 1.0))
                .sum();
            mu * lambda + 0.5 * sigma * sigma * lambda * lambda + jump_rate * jumps
        }
        _ => unreachable!("only called for mixed-exponential models"),
    }
}

/// `Psi'(lambda)`, used for Newton steps.
pub(crate) fn levy_exponent_derivative(process: &ProcessModel, lambda: f64) -> f64 {
    match process {
        ProcessModel::BrownianWithDrift { mu, sigma } => mu + sigma * sigma * lambda,
        ProcessModel::SpectrallyNegativeJumpDiffusion {
            mu,
            sigma,
            jump_rate,
            jump_mean,
        } => {
            let d = 1.0 + lambda * jump_mean;
            mu + sigma * sigma * lambda - jump_rate * jump_mean / (d * d)
        }
        ProcessModel::MixedExpUpwardJumpDiffusion {
            mu,
            sigma,
            up_rates,
            up_weights,
            jump_rate,
        } => {
            let jumps: f64 = up_rates
                .iter()
                .zip(up_weights)
                .map(|(&eta, &p)| p * eta / ((eta - lambda) * (eta - lambda)))
                .sum();
            mu + sigma * sigma * lambda + jump_rate * jumps
        }
        ProcessModel::ReflectedBM { .. } => f64::NAN,
    }
}
