//! Impulse control of one-dimensional Markov processes through expected
//! suprema: represent the reward as `g(x) = E_x f(M_T)`, classify the
//! problem, solve for the optimal threshold and check it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod maxlaw;
pub mod mc;
pub mod polynomial;
pub mod problem;
pub mod quadrature;
pub mod represent;
pub mod solve;
pub mod special;
pub mod valuefn;
