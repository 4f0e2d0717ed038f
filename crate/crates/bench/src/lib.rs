//! Shared fixtures for the benchmarks.

use ultrawide_core::{generate, DataMatrix, Generator};

/// Square Gaussian input of side `n` with a fixed seed.
pub fn square_data(n: usize) -> DataMatrix {
    generate(Generator::GaussianIidScaled, n, n, 7).expect("valid dimensions")
}
