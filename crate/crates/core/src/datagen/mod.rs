//! Input matrices `X` (d0 x n), their orthonormality diagnostics and spectral
//! measures.

mod measure;

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream_rng, Stream};

pub use measure::{
    mp_density, mp_measure, semicircle_cdf, semicircle_density, Discretization, SpectralMeasure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Entries i.i.d. `N(0, 1/d0)`.
    GaussianIidScaled,
    /// Columns uniform on the unit sphere.
    SphereUniform,
    /// Loaded from disk.
    File,
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-iid-scaled" | "gaussian" => Ok(Self::GaussianIidScaled),
            "sphere-uniform" | "sphere" => Ok(Self::SphereUniform),
            "file" => Ok(Self::File),
            other => Err(Error::Parse(format!("unknown data generator `{other}`"))),
        }
    }
}

impl std::fmt::Display for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GaussianIidScaled => "gaussian-iid-scaled",
            Self::SphereUniform => "sphere-uniform",
            Self::File => "file",
        })
    }
}

/// A `d0 x n` input matrix whose columns are the samples.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    x: Mat<f64>,
    generator: Generator,
    seed: Option<u64>,
}

impl DataMatrix {
    /// Wraps an existing matrix (treated as file-backed data).
    pub fn from_matrix(x: Mat<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("data matrix must be non-empty"));
        }
        if !x.is_all_finite() {
            return Err(Error::invalid("data matrix has non-finite entries"));
        }
        Ok(Self {
            x,
            generator: Generator::File,
            seed: None,
        })
    }

    /// Like [`from_matrix`](Self::from_matrix) but insists on the given shape.
    pub fn from_matrix_checked(x: Mat<f64>, d0: usize, n: usize) -> Result<Self> {
        if x.nrows() != d0 || x.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {d0}x{n} data, found {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        Self::from_matrix(x)
    }

    pub fn x(&self) -> &Mat<f64> {
        &self.x
    }

    pub fn d0(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.n()).map(|j| self.x.col(j).norm_l2()).collect()
    }

    /// `X^T X`, bit-symmetric.
    pub fn gram(&self) -> Mat<f64> {
        linalg::gram(self.x.as_ref())
    }

    /// Columns `[X, other]` side by side.
    pub fn hstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.d0() != other.d0() {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack d0={} with d0={}",
                self.d0(),
                other.d0()
            )));
        }
        let n1 = self.n();
        let x = Mat::from_fn(self.d0(), n1 + other.n(), |i, j| {
            if j < n1 {
                self.x[(i, j)]
            } else {
                other.x[(i, j - n1)]
            }
        });
        Ok(DataMatrix {
            x,
            generator: self.generator,
            seed: self.seed,
        })
    }

    /// Same columns in the order given by `perm`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<DataMatrix> {
        let mut seen = vec![false; self.n()];
        if perm.len() != self.n() || perm.iter().any(|&p| p >= self.n() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("column permutation is not a bijection"));
        }
        Ok(DataMatrix {
            x: Mat::from_fn(self.d0(), self.n(), |i, j| self.x[(i, perm[j])]),
            generator: self.generator,
            seed: self.seed,
        })
    }

    pub fn scaled(&self, c: f64) -> DataMatrix {
        DataMatrix {
            x: Mat::from_fn(self.d0(), self.n(), |i, j| c * self.x[(i, j)]),
            generator: self.generator,
            seed: self.seed,
        }
    }
}

/// Draws a data matrix. Column `j` uses its own RNG stream so any subset of
/// columns can be regenerated independently.
pub fn generate(generator: Generator, d0: usize, n: usize, seed: u64) -> Result<DataMatrix> {
    generate_stream(generator, d0, n, seed, Stream::Data)
}

pub(crate) fn generate_stream(
    generator: Generator,
    d0: usize,
    n: usize,
    seed: u64,
    stream: Stream,
) -> Result<DataMatrix> {
    if d0 == 0 || n == 0 {
        return Err(Error::invalid(format!("data dimensions must be positive, got d0={d0}, n={n}")));
    }
    let mut x = Mat::<f64>::zeros(d0, n);
    match generator {
        Generator::File => {
            return Err(Error::invalid("file-backed data must be loaded, not generated"));
        }
        Generator::GaussianIidScaled | Generator::SphereUniform => {
            let scale = 1.0 / (d0 as f64).sqrt();
            for j in 0..n {
                let mut rng = stream_rng(seed, stream, j as u64);
                let mut col = x.col_mut(j);
                for i in 0..d0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    col[i] = z;
                }
                let norm = match generator {
                    Generator::SphereUniform => col.norm_l2(),
                    _ => 1.0 / scale,
                };
                if norm > 0.0 {
                    for i in 0..d0 {
                        col[i] /= norm;
                    }
                }
            }
        }
    }
    Ok(DataMatrix {
        x,
        generator,
        seed: Some(seed),
    })
}

/// Diagnostics of how close `X` is to having orthonormal columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthonormalityReport {
    pub eps: f64,
    pub b_norm: f64,
    pub b_sum: f64,
    pub n_eps4: f64,
}

pub fn orthonormality(data: &DataMatrix) -> Result<OrthonormalityReport> {
    let g = data.gram();
    let n = data.n();
    let mut eps = 0.0_f64;
    let mut b_sum2 = 0.0;
    for j in 0..n {
        let dev = g[(j, j)].sqrt() - 1.0;
        eps = eps.max(dev.abs());
        b_sum2 += dev * dev;
        for i in j + 1..n {
            eps = eps.max(g[(i, j)].abs());
        }
    }
    let top = linalg::sym_eigenvalues(g.as_ref())?
        .last()
        .copied()
        .unwrap_or(0.0);
    Ok(OrthonormalityReport {
        eps,
        b_norm: top.max(0.0).sqrt(),
        b_sum: b_sum2.sqrt(),
        n_eps4: n as f64 * eps.powi(4),
    })
}

/// Eigenvalues of `X^T X`, each with weight `1/n`.
pub fn empirical_measure(data: &DataMatrix) -> Result<SpectralMeasure> {
    let ev = linalg::sym_eigenvalues(data.gram().as_ref())?;
    SpectralMeasure::uniform_atoms(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn orthonormal(d0: usize, n: usize) -> DataMatrix {
        DataMatrix::from_matrix(Mat::from_fn(d0, n, |i, j| if i == j { 1.0 } else { 0.0 })).unwrap()
    }

    #[test]
    fn sphere_columns_have_unit_norm() {
        let x = generate(Generator::SphereUniform, 64, 10, 3).unwrap();
        for norm in x.column_norms() {
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn generation_is_reproducible_per_column() {
        let a = generate(Generator::GaussianIidScaled, 20, 5, 11).unwrap();
        let b = generate(Generator::GaussianIidScaled, 20, 8, 11).unwrap();
        for j in 0..5 {
            for i in 0..20 {
                assert_eq!(a.x()[(i, j)], b.x()[(i, j)]);
            }
        }
        let c = generate(Generator::GaussianIidScaled, 20, 5, 12).unwrap();
        assert_ne!(a.x()[(0, 0)], c.x()[(0, 0)]);
        assert!(generate(Generator::File, 2, 2, 0).is_err());
        assert!(generate(Generator::SphereUniform, 0, 2, 0).is_err());
    }

    #[test]
    fn gaussian_eps_scale() {
        let x = generate(Generator::GaussianIidScaled, 1000, 1000, 5).unwrap();
        let r = orthonormality(&x).unwrap();
        assert!(r.eps > 0.06 && r.eps < 0.16, "eps = {}", r.eps);
        assert!(r.n_eps4 < 1.0);
        // ||X|| ~ 1 + sqrt(n/d0) = 2 for square Gaussian data
        assert!((r.b_norm - 2.0).abs() < 0.1, "B = {}", r.b_norm);
    }

    #[test]
    fn orthonormality_examples() {
        let x = orthonormal(6, 4);
        let r = orthonormality(&x).unwrap();
        assert_eq!(r.eps, 0.0);
        assert_eq!(r.b_sum, 0.0);
        assert_abs_diff_eq!(r.b_norm, 1.0, epsilon = 1e-14);
        let r2 = orthonormality(&x.scaled(2.0)).unwrap();
        assert_abs_diff_eq!(r2.eps, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r2.b_norm, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r2.b_sum, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn file_dims_are_checked() {
        let m = Mat::<f64>::zeros(3, 4);
        assert!(matches!(
            DataMatrix::from_matrix_checked(m, 4, 3),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn empirical_measure_examples() {
        let m = empirical_measure(&orthonormal(5, 5)).unwrap();
        let d = m.discretize();
        assert!(d.nodes.iter().all(|&x| (x - 1.0).abs() < 1e-13));
        let zero = DataMatrix::from_matrix(Mat::zeros(3, 3)).unwrap();
        let z = empirical_measure(&zero).unwrap();
        assert!(z.discretize().nodes.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn empirical_measure_is_close_to_mp() {
        let x = generate(Generator::GaussianIidScaled, 2000, 2000, 9).unwrap();
        let emp = empirical_measure(&x).unwrap();
        let mp = mp_measure(1.0).unwrap();
        let SpectralMeasure::Atoms { locations, .. } = &emp else { unreachable!() };
        let n = locations.len() as f64;
        let ks = locations
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let f = mp.cdf(l);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.03, "ks = {ks}");
    }
}
