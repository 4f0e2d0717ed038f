//! Spectra of the conjugate kernel (CK) and neural tangent kernel (NTK) of a
//! two-layer random network `f(X) = a^T sigma(W X) / sqrt(d1)` in the
//! ultra-wide regime `d1 >> n`.
//!
//! The crate is organised bottom-up:
//!
//! | module            | purpose                                                         |
//! |-------------------|-----------------------------------------------------------------|
//! | [`quadrature`]    | Gauss–Hermite / Gauss–Legendre rules for Gaussian expectations  |
//! | [`activation`]    | normalized activations and their Hermite coefficients           |
//! | [`datagen`]       | input matrices, orthonormality diagnostics, spectral measures   |
//! | [`kernels`]       | empirical CK/NTK, expected kernels and deterministic equivalents |
//! | [`spectral`]      | centered ensembles, eigenvalue distributions, KS / W1 distances |
//! | [`law`]           | self-consistent equations for the deformed semicircle law       |
//! | [`concentration`] | Monte-Carlo checks of norm concentration and eigenvalue floors  |
//! | [`regression`]    | random-feature vs kernel ridge regression and their limits      |
//!
//! All randomness flows from a single `u64` seed through [`rng`], so every
//! computation is reproducible and independent of thread count.

pub mod activation;
pub mod concentration;
pub mod datagen;
mod error;
pub mod io;
pub mod kernels;
pub mod law;
pub mod linalg;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod spectral;

pub use activation::{hermite_data, hermite_poly, Activation, ActivationKind, BaseActivation, HermiteData};
pub use datagen::{
    empirical_measure, generate, mp_density, mp_measure, orthonormality, DataMatrix, Generator,
    OrthonormalityReport, SpectralMeasure,
};
pub use error::{Error, Result};
pub use kernels::{
    build_empirical, expected_phi, expected_psi, linear_equivalents, phi0, psi0, BuildOptions,
    DeterministicEquivalents, KernelMatrices, PhiMethod, WeightDraw,
};
pub use law::{
    default_grid, moments, solve_density, solve_point, DeformedInput, DensityOptions, LawSolution,
    PointSolution, SolverOptions,
};
pub use regression::{fit_and_score, KernelMode, RegressionReport, SyntheticTask};
pub use spectral::{center, esd, ks_distance, w1_distance, CenterMode, CenteredEnsemble, Esd};

pub use faer::Mat;
pub use num_complex::Complex64;
