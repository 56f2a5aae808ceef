//! ψ-estimators: points of sign change of `t ↦ Σ λᵢ ψ(xᵢ, t)`, together with
//! tools for comparing two such estimators across all samples.

pub mod bajraktarevic;
pub mod cli;
pub mod comparison;
pub mod error;
pub mod exprparse;
pub mod families;
pub mod json;
pub mod kernel;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::{
    empirical_theta1_hull, uniform_weights, weighted_sum, weighted_sum_with, Hull, OpenInterval, PsiKernel,
    Summation, WeightedSample,
};
pub use solver::{
    generalized_left_inverse, solve_sign_change, theta1, SignChangeResult, SolveStatus, SolverConfig,
};
