//! Stationary Markov chains generated by copulas: closed-form copula
//! evaluation, checkerboard discretization to doubly stochastic kernels,
//! exact β/ρ/φ mixing coefficients on the grid, chain simulation and a
//! configuration-driven experiment runner.

pub mod copula;
pub mod error;
pub mod experiment;
pub mod format;
pub mod grid;
pub mod mixing;
pub mod rng;
pub mod simulate;
pub mod special;

pub use copula::{validate, CopulaSpec, Density, Family, RawCopula, UnitSquarePoint};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentError, RunReport, Status, Task};
pub use grid::{cell_volume, discretize, fold, mix, power, Construction, TransitionMatrix};
pub use mixing::{
    beta_coeff, doeblin_report, geometric_rate, mixing_profile, phi_coeff, rho_coeff,
    DoeblinReport, MixingProfile,
};
pub use simulate::{
    empirical_transition, generalized_inverse, sample_chain, ChainPath, MarginalSpec,
};
