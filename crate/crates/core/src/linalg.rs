//! Thin dense linear-algebra layer over `faer`. Every routine runs
//! single-threaded so results never depend on the worker count; callers
//! parallelize across independent matrices instead.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::diag::Diag;
use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Clears the upper halves of the vector registers. Some `faer` kernels return
/// with them dirty, after which every legacy-SSE instruction (all of our scalar
/// code, `exp`, `atan`, ...) pays a transition penalty of about 30x.
#[inline]
pub fn settle() {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: AVX support was just checked.
            unsafe { zero_upper() }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn zero_upper() {
    std::arch::x86_64::_mm256_zeroupper();
}

/// `acc += alpha * a^T a`, lower triangle only.
pub fn gram_lower_acc(acc: MatMut<'_, f64>, a: MatRef<'_, f64>, alpha: f64) {
    triangular::matmul(
        acc,
        BlockStructure::TriangularLower,
        Accum::Add,
        a.transpose(),
        BlockStructure::Rectangular,
        a,
        BlockStructure::Rectangular,
        alpha,
        Par::Seq,
    );
    settle();
}

/// `a^T b` as a new matrix.
pub fn at_b(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.ncols(), b.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, a.transpose(), b, 1.0, Par::Seq);
    settle();
    out
}

/// `a b` as a new matrix.
pub fn a_b(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, a, b, 1.0, Par::Seq);
    settle();
    out
}

/// `x^T x`, computed on the lower triangle and mirrored so it is bit-symmetric.
pub fn gram(x: MatRef<'_, f64>) -> Mat<f64> {
    let n = x.ncols();
    let mut g = Mat::zeros(n, n);
    gram_lower_acc(g.as_mut(), x, 1.0);
    mirror_lower(g.as_mut());
    g
}

/// Copies the strict lower triangle onto the upper one.
pub fn mirror_lower(mut m: MatMut<'_, f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = m[(i, j)];
            m[(j, i)] = v;
        }
    }
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize(mut m: MatMut<'_, f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn is_symmetric(m: MatRef<'_, f64>, tol: f64) -> bool {
    let n = m.nrows();
    if n != m.ncols() {
        return false;
    }
    (0..n).all(|j| (j + 1..n).all(|i| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Eigenvalues of a symmetric matrix in ascending order (lower triangle is read).
pub fn sym_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let eig_err = || Error::Eigen {
        rows: n,
        cols: n,
        max_abs: max_abs(m),
    };
    if !m.is_all_finite() {
        return Err(eig_err());
    }
    let par = Par::Seq;
    let mut s = Diag::<f64>::zeros(n);
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        ComputeEigenvectors::No,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        m,
        s.as_mut(),
        None,
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| eig_err())?;
    settle();
    let mut out: Vec<f64> = s.column_vector().iter().copied().collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(m: MatRef<'_, f64>) -> Result<f64> {
    let ev = sym_eigenvalues(m)?;
    Ok(ev.first().map_or(0.0, |lo| lo.abs().max(ev[ev.len() - 1].abs())))
}

/// Largest singular value of a rectangular matrix, via the smaller Gram matrix.
pub fn op_norm(m: MatRef<'_, f64>) -> Result<f64> {
    let g = if m.nrows() >= m.ncols() {
        gram(m)
    } else {
        gram(m.transpose())
    };
    let ev = sym_eigenvalues(g.as_ref())?;
    Ok(ev.last().map_or(0.0, |v| v.max(0.0).sqrt()))
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut out = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].abs());
        }
    }
    out
}

pub fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Cholesky factor of `k + shift * I`, reading the lower triangle.
pub struct SpdSolver {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl SpdSolver {
    /// Factors `k + shift I`. With `shift == 0` a failed factorization is
    /// retried once with a `1e-12 * max|diag|` jitter.
    pub fn new(k: MatRef<'_, f64>, shift: f64) -> Result<Self> {
        let n = k.nrows();
        let mut a = k.to_owned();
        for i in 0..n {
            a[(i, i)] += shift;
        }
        let first = a.llt(Side::Lower);
        settle();
        match first {
            Ok(llt) => Ok(Self { llt }),
            Err(_) if shift == 0.0 => {
                let scale = (0..n).map(|i| k[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
                for i in 0..n {
                    a[(i, i)] += 1e-12 * scale;
                }
                let second = a.llt(Side::Lower);
                settle();
                second.map(|llt| Self { llt }).map_err(|_| {
                    Error::Conditioning(format!(
                        "{n}x{n} kernel matrix is singular even after diagonal jitter"
                    ))
                })
            }
            Err(_) => Err(Error::Conditioning(format!(
                "{n}x{n} kernel matrix plus ridge {shift} is not positive definite"
            ))),
        }
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let x = self.llt.solve(rhs);
        settle();
        x
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        settle();
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Orthogonal factor of the QR decomposition of a square matrix.
pub fn orthogonal_factor(m: MatRef<'_, f64>) -> Mat<f64> {
    let q = m.qr().compute_Q();
    settle();
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(rows: usize, cols: usize) -> Mat<f64> {
        Mat::from_fn(rows, cols, |i, j| ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.4)
    }

    #[test]
    fn gram_matches_product() {
        let x = sample(40, 7);
        let g = gram(x.as_ref());
        let full = at_b(x.as_ref(), x.as_ref());
        for i in 0..7 {
            for j in 0..7 {
                assert_abs_diff_eq!(g[(i, j)], full[(i, j)], epsilon = 1e-12);
                assert_eq!(g[(i, j)], g[(j, i)]);
            }
        }
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { [3.0, 1.0, 2.0][i] } else { 0.0 });
        let ev = sym_eigenvalues(m.as_ref()).unwrap();
        assert_abs_diff_eq!(ev[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[2], 3.0, epsilon = 1e-14);
        assert!(sym_eigenvalues(Mat::<f64>::zeros(0, 0).as_ref()).unwrap().is_empty());
        let mut bad = m.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(matches!(sym_eigenvalues(bad.as_ref()), Err(Error::Eigen { .. })));
    }

    #[test]
    fn op_norm_of_scaled_identity_columns() {
        let mut x = Mat::<f64>::zeros(5, 3);
        for i in 0..3 {
            x[(i, i)] = 2.0;
        }
        assert_abs_diff_eq!(op_norm(x.as_ref()).unwrap(), 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(op_norm(x.transpose()).unwrap(), 2.0, epsilon = 1e-13);
    }

    #[test]
    fn spd_solver_solves() {
        let x = sample(30, 6);
        let k = gram(x.as_ref());
        let solver = SpdSolver::new(k.as_ref(), 0.5).unwrap();
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let sol = solver.solve_vec(&b);
        for i in 0..6 {
            let r: f64 = (0..6).map(|j| k[(i, j)] * sol[j]).sum::<f64>() + 0.5 * sol[i];
            assert_abs_diff_eq!(r, b[i], epsilon = 1e-10);
        }
        let indefinite = Mat::from_fn(3, 3, |i, j| if i == j { [1.0, -1.0, 1.0][i] } else { 0.0 });
        assert!(matches!(
            SpdSolver::new(indefinite.as_ref(), 0.0),
            Err(Error::Conditioning(_))
        ));
    }

    #[test]
    fn orthogonal_factor_is_orthogonal() {
        let q = orthogonal_factor(sample(6, 6).as_ref());
        let qtq = at_b(q.as_ref(), q.as_ref());
        for i in 0..6 {
            for j in 0..6 {
                assert_abs_diff_eq!(qtq[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }
}
