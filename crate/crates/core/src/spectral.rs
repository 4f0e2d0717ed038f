//! Centered kernel ensembles, empirical spectral distributions and
//! goodness-of-fit distances.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::datagen::SpectralMeasure;
use crate::error::{Error, Result};
use crate::kernels::{DeterministicEquivalents, KernelMatrices};
use crate::linalg;

/// Which kernel is centered, and by what.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterMode {
    /// `sqrt(d1/n) (CK - Phi)`
    CkVsPhi,
    /// `sqrt(d1/n) (CK - Phi0)`
    CkVsPhi0,
    /// `sqrt(d1/n) (H - Phi - Psi)`
    NtkVsMean,
    /// `sqrt(d1/n) (H - Phi0 - Psi0)`
    NtkVsPhi0Psi0,
}

impl CenterMode {
    pub const ALL: [CenterMode; 4] = [
        CenterMode::CkVsPhi,
        CenterMode::CkVsPhi0,
        CenterMode::NtkVsMean,
        CenterMode::NtkVsPhi0Psi0,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CkVsPhi => "ck-vs-phi",
            Self::CkVsPhi0 => "ck-vs-phi0",
            Self::NtkVsMean => "ntk-vs-mean",
            Self::NtkVsPhi0Psi0 => "ntk-vs-phi0-psi0",
        }
    }

    pub fn needs_ntk(&self) -> bool {
        matches!(self, Self::NtkVsMean | Self::NtkVsPhi0Psi0)
    }

    /// Whether the mode centers by the exact expectation (`Phi`, `Psi`).
    pub fn needs_expectation(&self) -> bool {
        matches!(self, Self::CkVsPhi | Self::NtkVsMean)
    }
}

impl std::str::FromStr for CenterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown centering mode `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct CenteredEnsemble {
    pub mode: CenterMode,
    pub matrix: Mat<f64>,
}

/// Forms the centered, `sqrt(d1/n)`-scaled kernel for `mode`.
pub fn center(
    mode: CenterMode,
    kernels: &KernelMatrices,
    equivalents: &DeterministicEquivalents,
) -> Result<CenteredEnsemble> {
    let n = kernels.n();
    if kernels.d1 == 0 {
        return Err(Error::invalid("width d1 must be positive"));
    }
    let missing = |what: &str| Error::invalid(format!("mode {} needs {what}", mode.as_str()));
    let ntk = || kernels.ntk.as_ref().ok_or_else(|| missing("the NTK"));
    let mut m = match mode {
        CenterMode::CkVsPhi => &kernels.ck - equivalents.phi.as_ref().ok_or_else(|| missing("Phi"))?,
        CenterMode::CkVsPhi0 => &kernels.ck - &equivalents.phi0,
        CenterMode::NtkVsMean => {
            let phi = equivalents.phi.as_ref().ok_or_else(|| missing("Phi"))?;
            let psi = equivalents.psi.as_ref().ok_or_else(|| missing("Psi"))?;
            ntk()? - phi - psi
        }
        CenterMode::NtkVsPhi0Psi0 => ntk()? - &equivalents.phi0 - &equivalents.psi0,
    };
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {n}x{n}, equivalents are {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    m *= faer::Scale((kernels.d1 as f64 / n as f64).sqrt());
    linalg::symmetrize(m.as_mut());
    Ok(CenteredEnsemble { mode, matrix: m })
}

/// Sorted eigenvalues with uniform weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Esd {
    pub eigenvalues: Vec<f64>,
}

impl Esd {
    pub fn from_values(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("spectrum contains non-finite values"));
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self { eigenvalues })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.len().max(1) as f64
    }

    pub fn second_moment(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v * v).sum::<f64>() / self.len().max(1) as f64
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    pub fn measure(&self) -> Result<SpectralMeasure> {
        SpectralMeasure::uniform_atoms(self.eigenvalues.clone())
    }

    /// Distinct values with the step CDF just below and at each.
    fn steps(&self) -> Vec<(f64, f64, f64)> {
        let n = self.len() as f64;
        let mut out: Vec<(f64, f64, f64)> = Vec::new();
        for (i, &v) in self.eigenvalues.iter().enumerate() {
            let hi = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.2 = hi,
                _ => out.push((v, i as f64 / n, hi)),
            }
        }
        out
    }
}

/// Eigenvalues of a symmetric matrix.
pub fn esd(matrix: &Mat<f64>) -> Result<Esd> {
    if !linalg::is_symmetric(matrix.as_ref(), 1e-12 * linalg::max_abs(matrix.as_ref()).max(1.0)) {
        return Err(Error::invalid("ESD needs a symmetric matrix"));
    }
    Esd::from_values(linalg::sym_eigenvalues(matrix.as_ref())?)
}

/// Kolmogorov–Smirnov distance between the ESD and a continuous CDF,
/// evaluated at every eigenvalue (both sides of the jump) and at midpoints.
pub fn ks_distance(esd: &Esd, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    ks_with(esd, &cdf, &cdf)
}

/// KS distance to a measure, using its exact left and right CDF limits.
pub fn ks_distance_measure(esd: &Esd, measure: &SpectralMeasure) -> Result<f64> {
    ks_with(esd, &|x| measure.cdf(x), &|x| measure.cdf_left(x))
}

fn ks_with(esd: &Esd, right: &dyn Fn(f64) -> f64, left: &dyn Fn(f64) -> f64) -> Result<f64> {
    if esd.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    let steps = esd.steps();
    let mut d = 0.0_f64;
    let mut last_f = f64::NEG_INFINITY;
    let mut check = |x: f64, f: f64| -> Result<()> {
        if !(0.0..=1.0 + 1e-12).contains(&f) || f < last_f - 1e-12 {
            return Err(Error::NonMonotoneCdf {
                at: x,
                drop: last_f - f,
            });
        }
        last_f = last_f.max(f);
        Ok(())
    };
    for (k, &(v, lo, hi)) in steps.iter().enumerate() {
        if k > 0 {
            let prev = steps[k - 1];
            let mid = 0.5 * (prev.0 + v);
            let fm = right(mid);
            check(mid, fm)?;
            d = d.max((fm - prev.2).abs());
        }
        let fl = left(v);
        check(v, fl)?;
        d = d.max((fl - lo).abs());
        let fr = right(v);
        check(v, fr)?;
        d = d.max((fr - hi).abs());
    }
    Ok(d.min(1.0))
}

/// Wasserstein-1 distance `∫ |F - G|` between the ESD and a measure. Closed-form
/// measures are replaced by `max(n, 4000)` mid-quantile atoms.
pub fn w1_distance(esd: &Esd, measure: &SpectralMeasure) -> Result<f64> {
    let other = match measure {
        SpectralMeasure::Atoms { .. } | SpectralMeasure::PointMass { .. } => measure.clone(),
        _ => measure.quantile_atoms(esd.len().max(4000))?,
    };
    let d = other.discretize();
    let a: Vec<(f64, f64)> = esd
        .eigenvalues
        .iter()
        .map(|&v| (v, 1.0 / esd.len() as f64))
        .collect();
    let mut b: Vec<(f64, f64)> = d.nodes.into_iter().zip(d.weights).collect();
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(w1_atoms(&a, &b))
}

/// `∫ |F_a - F_b| dx` for two sorted weighted atom lists.
pub fn w1_atoms(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0_f64, 0.0_f64);
    let mut x_prev: Option<f64> = None;
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        if let Some(xp) = x_prev {
            total += (fa - fb).abs() * (x - xp);
        }
        while i < a.len() && a[i].0 == x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == x {
            fb += b[j].1;
            j += 1;
        }
        x_prev = Some(x);
    }
    total
}

/// One histogram bin with density normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub density: f64,
}

/// Density histogram with `bins` equal bins, or Freedman–Diaconis when `None`.
pub fn histogram(values: &[f64], bins: Option<usize>) -> Result<Vec<Bin>> {
    if values.is_empty() {
        return Err(Error::invalid("histogram of an empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let n = v.len();
    let k = match bins {
        Some(0) => return Err(Error::invalid("histogram needs at least one bin")),
        Some(k) => k,
        None => {
            let q = |p: f64| {
                let t = p * (n - 1) as f64;
                let i = t.floor() as usize;
                let f = t - i as f64;
                v[i] + f * (v[(i + 1).min(n - 1)] - v[i])
            };
            let iqr = q(0.75) - q(0.25);
            let width = 2.0 * iqr / (n as f64).cbrt();
            if width > 0.0 && hi > lo {
                (((hi - lo) / width).ceil() as usize).clamp(1, 10_000)
            } else {
                1
            }
        }
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let width = span / k as f64;
    let mut counts = vec![0usize; k];
    for &x in &v {
        let idx = (((x - lo) / width) as usize).min(k - 1);
        counts[idx] += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &c)| Bin {
            left: lo + i as f64 * width,
            right: lo + (i + 1) as f64 * width,
            density: c as f64 / (n as f64 * width),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{hermite_data, Activation};
    use crate::datagen::{generate, semicircle_cdf, Generator};
    use crate::kernels::{build_empirical, BuildOptions, PhiMethod, WeightDraw};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Uniform};

    fn diag(values: &[f64]) -> Mat<f64> {
        Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[test]
    fn esd_examples() {
        assert!(esd(&Mat::zeros(4, 4)).unwrap().eigenvalues.iter().all(|&v| v == 0.0));
        let e = esd(&diag(&[2.0, 3.0, 1.0])).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([1.0, 2.0, 3.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        let mut asym = diag(&[1.0, 2.0]);
        asym[(0, 1)] = 1.0;
        assert!(esd(&asym).is_err());
    }

    #[test]
    fn ks_of_own_step_cdf_is_zero() {
        let e = Esd::from_values(vec![0.3, -1.0, 2.0, 2.0, 5.0]).unwrap();
        let m = e.measure().unwrap();
        assert_eq!(ks_distance_measure(&e, &m).unwrap(), 0.0);
        assert_eq!(w1_distance(&e, &m).unwrap(), 0.0);
    }

    #[test]
    fn ks_detects_non_monotone_cdf() {
        let e = Esd::from_values(vec![0.0, 1.0, 2.0]).unwrap();
        let err = ks_distance(&e, |x| if x < 1.5 { 0.8 } else { 0.2 }).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneCdf { .. }));
    }

    #[test]
    fn ks_semicircle_samples() {
        // inverse-CDF sampling of the semicircle via bisection
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let samples: Vec<f64> = (0..10_000)
            .map(|_| {
                let p = u.sample(&mut rng);
                let (mut a, mut b) = (-2.0, 2.0);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if semicircle_cdf(1.0, m) < p {
                        a = m
                    } else {
                        b = m
                    }
                }
                0.5 * (a + b)
            })
            .collect();
        let e = Esd::from_values(samples).unwrap();
        let ks = ks_distance(&e, |x| semicircle_cdf(1.0, x)).unwrap();
        assert!(ks < 0.02, "ks = {ks}");
        let w1 = w1_distance(&e, &SpectralMeasure::semicircle(1.0).unwrap()).unwrap();
        assert!(w1 < 0.03, "w1 = {w1}");
    }

    #[test]
    fn w1_of_shifted_atoms() {
        let a = [(0.0, 0.5), (1.0, 0.5)];
        let b = [(0.5, 0.5), (1.5, 0.5)];
        assert_abs_diff_eq!(w1_atoms(&a, &b), 0.5, epsilon = 1e-15);
        assert_eq!(w1_atoms(&a, &a), 0.0);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        for bins in [None, Some(7)] {
            let h = histogram(&values, bins).unwrap();
            let area: f64 = h.iter().map(|b| b.density * (b.right - b.left)).sum();
            assert_abs_diff_eq!(area, 1.0, epsilon = 1e-12);
        }
        assert_eq!(histogram(&[1.0, 1.0], None).unwrap().len(), 1);
    }

    #[test]
    fn identity_centering_is_explicit() {
        let data = generate(Generator::GaussianIidScaled, 15, 6, 1).unwrap();
        let act = Activation::identity();
        let hd = hermite_data(&act, 10).unwrap();
        let w = WeightDraw::new(2, 15, 400).unwrap();
        let km = build_empirical(&data, &act, &w, &BuildOptions::ck_only()).unwrap();
        let eq = DeterministicEquivalents::compute(&data, &act, &hd, Some(PhiMethod::default()), false).unwrap();
        let c = center(CenterMode::CkVsPhi, &km, &eq).unwrap();
        let (wm, _) = w.materialize();
        let wx = linalg::a_b(wm.as_ref(), data.x().as_ref());
        let xtwtwx = linalg::at_b(wx.as_ref(), wx.as_ref());
        let g = data.gram();
        let scale = 1.0 / (6.0f64 * 400.0).sqrt();
        for i in 0..6 {
            for j in 0..6 {
                let want = scale * (xtwtwx[(i, j)] - 400.0 * g[(i, j)]);
                assert_abs_diff_eq!(c.matrix[(i, j)], want, epsilon = 1e-10);
            }
        }
        assert!(center(CenterMode::NtkVsMean, &km, &eq).is_err());
    }
}
