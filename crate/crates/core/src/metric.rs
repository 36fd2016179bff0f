//! Mahalanobis metric: a symmetric positive-semidefinite matrix `A` with
//! squared distance `(x - y)' A (x - y)`.
//!
//! The matrix is stored dense and row-major. Rank-one updates touch the upper
//! triangle and mirror it, so symmetry holds bit-for-bit after any number of
//! updates.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::ScalingParams;
use crate::error::{Error, Result};

/// Distances in `[-NEG_DISTANCE_CLAMP, 0)` are rounding noise and read as 0.
pub const NEG_DISTANCE_CLAMP: f64 = 1e-10;
/// PSD slab: eigenvalues down to `-PSD_TOL * max(1, trace)` are accepted.
pub const PSD_TOL: f64 = 1e-8;
/// Smallest admissible `1 + beta * z'Az` for a rank-one update.
pub const RANK_ONE_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisMetric {
    dim: usize,
    data: Vec<f64>,
}

impl MahalanobisMetric {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        MahalanobisMetric { dim, data }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in diag.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        Self::from_row_major(dim, data)
    }

    /// Wraps a row-major `dim x dim` buffer. Checks shape, finiteness and
    /// symmetry; positive semidefiniteness is left to [`is_psd`](Self::is_psd)
    /// so indefinite matrices can still be inspected.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimensions("metric dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::InvalidDimensions(format!(
                "dim {dim} needs {} values, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDimensions("metric has non-finite entries".into()));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs()) {
                    return Err(Error::InvalidDimensions(format!(
                        "metric is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(MahalanobisMetric { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidDimensions("metric rows must form a square matrix".into()));
        }
        Self::from_row_major(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `c * A`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_row_major(self.dim, self.data.iter().map(|v| v * c).collect())
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `A z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.dim);
        self.data.chunks_exact(self.dim).map(|row| dot(row, z)).collect()
    }

    /// `z' A z` with no clamping.
    pub fn quad_form(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim);
        self.data
            .chunks_exact(self.dim)
            .zip(z)
            .map(|(row, zi)| zi * dot(row, z))
            .sum()
    }

    /// Squared Mahalanobis distance. Symmetric in `x` and `y` bit-for-bit;
    /// tiny negative values from rounding are clamped to zero.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    /// [`distance`](Self::distance) without the length checks, for inner
    /// loops over already validated data.
    pub fn distance_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        clamp_distance(self.quad_form(&diff))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.data);
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// True iff the matrix is finite, symmetric and its smallest eigenvalue
    /// is at least `-1e-8 * max(1, trace)`.
    pub fn is_psd(&self) -> bool {
        if self.data.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let d = self.dim;
        let symmetric = (0..d).all(|i| {
            ((i + 1)..d).all(|j| {
                let a = self.get(i, j);
                (a - self.get(j, i)).abs() <= SYMMETRY_TOL * (1.0 + a.abs())
            })
        });
        symmetric && self.min_eigenvalue() >= -PSD_TOL * self.trace().max(1.0)
    }

    /// `A + beta (A z)(A z)'`. Fails with [`Error::PsdViolation`] unless
    /// `1 + beta z'Az > 1e-12`, the condition under which the result stays
    /// positive semidefinite.
    pub fn rank_one_update(&self, z: &[f64], beta: f64) -> Result<Self> {
        let mut out = self.clone();
        out.rank_one_update_in_place(z, beta)?;
        Ok(out)
    }

    pub fn rank_one_update_in_place(&mut self, z: &[f64], beta: f64) -> Result<()> {
        self.check_len(z)?;
        let az = self.apply(z);
        let p = dot(z, &az);
        self.add_outer(&az, p, beta)
    }

    /// `A += beta v v'` where `v = A z` and `p = z'Az` were computed by the
    /// caller.
    pub(crate) fn add_outer(&mut self, az: &[f64], p: f64, beta: f64) -> Result<()> {
        let guard = 1.0 + beta * p;
        if !(guard > RANK_ONE_FLOOR) {
            return Err(Error::PsdViolation(guard));
        }
        if beta == 0.0 {
            return Ok(());
        }
        let d = self.dim;
        for i in 0..d {
            let s = beta * az[i];
            if s == 0.0 {
                continue;
            }
            for j in i..d {
                self.data[i * d + j] += s * az[j];
            }
        }
        for i in 0..d {
            for j in (i + 1)..d {
                self.data[j * d + i] = self.data[i * d + j];
            }
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn clamp_distance(v: f64) -> f64 {
    if v < 0.0 && v >= -NEG_DISTANCE_CLAMP {
        0.0
    } else {
        v
    }
}

/// Free-function form of [`MahalanobisMetric::distance`].
pub fn distance(m: &MahalanobisMetric, x: &[f64], y: &[f64]) -> Result<f64> {
    m.distance(x, y)
}

/// Free-function form of [`MahalanobisMetric::rank_one_update`].
pub fn rank_one_update(m: &MahalanobisMetric, z: &[f64], beta: f64) -> Result<MahalanobisMetric> {
    m.rank_one_update(z, beta)
}

pub fn is_psd(m: &MahalanobisMetric) -> bool {
    m.is_psd()
}

/// LogDet divergence `tr(A P^-1) - log det(A P^-1) - d`.
///
/// Evaluated through the eigenvalues `mu` of the symmetric congruence
/// `L^-1 A L^-T` (with `P = L L'`) as `sum(mu - ln mu - 1)`, each term being
/// non-negative. Returns `+inf` when `A` is singular.
pub fn logdet_divergence(a: &MahalanobisMetric, prior: &MahalanobisMetric) -> Result<f64> {
    if a.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            found: a.dim(),
        });
    }
    let d = a.dim();
    let tr = prior.trace();
    if !(tr > 0.0) || prior.min_eigenvalue() <= 1e-12 * tr {
        return Err(Error::SingularPrior);
    }
    let p = DMatrix::from_row_slice(d, d, prior.as_slice());
    let l = p.cholesky().ok_or(Error::SingularPrior)?.unpack();
    let am = DMatrix::from_row_slice(d, d, a.as_slice());
    // L^-1 A L^-T via two triangular solves.
    let left = l.solve_lower_triangular(&am).ok_or(Error::SingularPrior)?;
    let m = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::SingularPrior)?;
    let m = (&m + m.transpose()) * 0.5;
    let mut total = 0.0;
    for mu in SymmetricEigen::new(m).eigenvalues.iter() {
        if *mu <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let t = mu - 1.0;
        total += t - t.ln_1p();
    }
    Ok(total.max(0.0))
}

pub const METRIC_FORMAT_VERSION: u32 = 1;

/// On-disk metric document (JSON):
///
/// ```text
/// {"format_version":1,"dim":2,"matrix":[1.0,0.0,0.0,1.0],"scaling":null}
/// ```
///
/// `matrix` is row-major with `dim * dim` entries, each written with the
/// shortest text that parses back to the identical `f64`. `scaling`, when
/// present, holds the per-feature `mean` and `std` applied to raw features
/// before the metric is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFile {
    pub format_version: u32,
    pub dim: usize,
    pub matrix: Vec<f64>,
    #[serde(default)]
    pub scaling: Option<ScalingParams>,
}

impl MetricFile {
    pub fn new(metric: &MahalanobisMetric, scaling: Option<ScalingParams>) -> Self {
        MetricFile {
            format_version: METRIC_FORMAT_VERSION,
            dim: metric.dim(),
            matrix: metric.as_slice().to_vec(),
            scaling,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("metric file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MetricFile =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != METRIC_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.dim == 0 || self.matrix.len() != self.dim * self.dim {
            return Err(Error::Format(format!(
                "dim {} declares {} values, found {}",
                self.dim,
                self.dim * self.dim,
                self.matrix.len()
            )));
        }
        if let Some(s) = &self.scaling {
            if s.mean.len() != self.dim || s.std.len() != self.dim {
                return Err(Error::Format("scaling length does not match dim".into()));
            }
            if s.std.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Format("scaling std must be positive".into()));
            }
        }
        let metric = self.metric_unvalidated()?;
        if !metric.is_psd() {
            return Err(Error::Format("matrix is not positive semidefinite".into()));
        }
        Ok(())
    }

    fn metric_unvalidated(&self) -> Result<MahalanobisMetric> {
        MahalanobisMetric::from_row_major(self.dim, self.matrix.clone()).map_err(|e| match e {
            Error::InvalidDimensions(msg) => Error::Format(msg),
            other => other,
        })
    }

    pub fn metric(&self) -> Result<MahalanobisMetric> {
        self.metric_unvalidated()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn save_metric(m: &MahalanobisMetric, path: impl AsRef<Path>) -> Result<()> {
    MetricFile::new(m, None).save(path)
}

pub fn load_metric(path: impl AsRef<Path>) -> Result<MahalanobisMetric> {
    MetricFile::load(path)?.metric()
}
