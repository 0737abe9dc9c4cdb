//! Permanental random vectors defined by inverse M-matrices.
//!
//! A vector `X` with Laplace transform `|I + R S|^{-alpha}` where `A = R^{-1}`
//! is a nonsingular M-matrix can be written as independent gammas with
//! shapes `alpha + Z_i` and rates `a_i = A_ii`, where `Z` is an integer
//! vector whose law is given by alpha-permanents of `Bbar = I - D_A^{-1} A`.
//! This crate computes that law, its transforms and moments, simulates `X`,
//! and checks the identities and inequalities that connect them.

pub mod error;
pub mod matrix;
pub mod moments;
pub mod permanent;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod symmetrize;
pub mod verify;
pub mod zdist;

pub use error::{Error, MMatrixViolation, Result};
pub use matrix::{
    certify_m_matrix, decompose, random_m_matrix, spectral_radius, Decomposition,
    MMatrixCertificate, SquareMatrix,
};
pub use moments::{
    factorial_moment_identity, mixed_moment_x, power_identity, z_covariance, z_l1_mean,
    z_moment_cumulative, z_moment_example_fourth, z_moment_jset,
};
pub use permanent::{
    alpha_permanent, constant_block_permanent, cycle_count, expand, MultiIndex,
};
pub use report::{CheckKind, VerificationReport};
pub use rng::RandomStream;
pub use sampler::{
    gaussian_l2_check, l1_norm_law_check, mc_expectation, sample_gamma, sample_x, sample_z,
    McConfig, SampleBatch, ZSampler,
};
pub use symmetrize::{
    build_sym_pair, det_inequalities_check, distribution_bounds_check, geometric_symmetrize,
    monotonicity_check, permanent_inequality_check, SymmetrizationPair,
};
pub use verify::{verify, verify_collect, RunConfig, Suite, VerifySummary};
pub use zdist::{
    build_model, z_convolve_check, z_laplace_closed, z_laplace_series, z_pmf, z_pmf_table,
    PermanentalModel, Truncation, ZPmfTable,
};
