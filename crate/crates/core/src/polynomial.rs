//! Dense real polynomials with ascending coefficients.

use serde::{Deserialize, Serialize};

/// `coeffs[i]` multiplies `x^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `x^m`
    pub fn monomial(m: usize) -> Self {
        let mut coeffs = vec![0.0; m + 1];
        coeffs[m] = 1.0;
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::constant(0.0);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero.
    pub fn antiderivative(&self) -> Self {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(0.0);
        out.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| c / (i + 1) as f64),
        );
        Self::new(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += c;
        Self::new(coeffs)
    }

    /// All derivatives `p, p', p'', ...` down to the constant one.
    pub fn derivatives(&self) -> Vec<Self> {
        let mut out = vec![self.clone()];
        for _ in 0..self.degree() {
            let next = out.last().expect("non-empty").derivative();
            out.push(next);
        }
        out
    }

    /// The polynomial `y -> p(x + y)`.
    pub fn translate(&self, x: f64) -> Self {
        // Taylor expansion around x.
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        let mut factorial = 1.0;
        for (k, d) in self.derivatives().iter().enumerate() {
            if k > 0 {
                factorial *= k as f64;
            }
            coeffs.push(d.eval(x) / factorial);
        }
        Self::new(coeffs)
    }
}
