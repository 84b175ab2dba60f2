//! Streaming estimation of teacher feature statistics.
//!
//! A [`MomentAccumulator`] consumes batches of samples and keeps the running mean,
//! the centered co-moment matrix and the global (all entries pooled) mean and second
//! moment. Batches are reduced with a centered matrix product and folded into the
//! running state with the pairwise update of Chan et al., so `update` over any batch
//! split and `merge` of partial accumulators agree to rounding.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{self, EigenSolver};

/// `N × C` batch of feature vectors, one sample per row. Entries are finite and both
/// dimensions are at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(shape_err(format!("feature matrix must be non-empty, got {:?}", data.dim())));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(FeatureMatrix(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(shape_err("rows have different lengths"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), c), flat).map_err(|e| shape_err(e.to_string()))?;
        Self::new(data)
    }

    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<FeatureMatrix> {
        if start >= end || end > self.n_samples() {
            return Err(shape_err(format!("row range {start}..{end} out of bounds")));
        }
        Ok(FeatureMatrix(self.0.slice(ndarray::s![start..end, ..]).to_owned()))
    }
}

/// Running first and second moments of a stream of `C`-dimensional samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: Array1<f64>,
    comoment: Array2<f64>,
    global_mean: f64,
    global_m2: f64,
}

impl MomentAccumulator {
    pub fn new(channels: usize) -> Self {
        MomentAccumulator {
            count: 0,
            mean: Array1::zeros(channels),
            comoment: Array2::zeros((channels, channels)),
            global_mean: 0.0,
            global_m2: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    /// Centered sum of outer products, `Σ (y − μ)(y − μ)ᵀ`.
    pub fn comoment(&self) -> &Array2<f64> {
        &self.comoment
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn global_m2(&self) -> f64 {
        self.global_m2
    }

    pub fn update(&mut self, batch: &FeatureMatrix) -> Result<()> {
        if batch.channels() != self.channels() {
            return Err(shape_err(format!(
                "batch has {} channels, accumulator expects {}",
                batch.channels(),
                self.channels()
            )));
        }
        let part = Self::from_batch(batch.view());
        self.merge(&part)
    }

    fn from_batch(x: ArrayView2<f64>) -> Self {
        let n = x.nrows();
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &x - &mean;
        let mut comoment = centered.t().dot(&centered);
        linalg::symmetrize(&mut comoment);
        let global_mean = x.iter().sum::<f64>() / x.len() as f64;
        let global_m2 = x.iter().map(|v| (v - global_mean) * (v - global_mean)).sum();
        MomentAccumulator { count: n as u64, mean, comoment, global_mean, global_m2 }
    }

    /// Folds another accumulator into this one.
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.channels() != self.channels() {
            return Err(shape_err(format!(
                "cannot merge accumulators with {} and {} channels",
                self.channels(),
                other.channels()
            )));
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        let w = na * nb / n;
        let c = self.channels();
        for i in 0..c {
            for j in 0..c {
                self.comoment[[i, j]] += other.comoment[[i, j]] + w * delta[i] * delta[j];
            }
        }
        self.mean.scaled_add(nb / n, &delta);

        let (ga, gb) = (na * c as f64, nb * c as f64);
        let gdelta = other.global_mean - self.global_mean;
        self.global_m2 += other.global_m2 + gdelta * gdelta * ga * gb / (ga + gb);
        self.global_mean += gdelta * gb / (ga + gb);
        self.count += other.count;
        Ok(())
    }

    pub fn merged(a: &MomentAccumulator, b: &MomentAccumulator) -> Result<MomentAccumulator> {
        let mut out = a.clone();
        out.merge(b)?;
        Ok(out)
    }

    /// Covariance with denominator `N − 1`; global standard deviation with `NC − 1`.
    pub fn finalize(&self) -> Result<Statistics> {
        if self.count < 2 {
            return Err(Error::InsufficientData { count: self.count });
        }
        let n = self.count as f64;
        let cov = &self.comoment / (n - 1.0);
        let per_channel_sigma = cov.diag().mapv(|v| v.max(0.0).sqrt());
        let entries = n * self.channels() as f64;
        Ok(Statistics {
            covariance: CovarianceEstimate { mean: self.mean.clone(), cov, n_samples: self.count },
            per_channel_sigma,
            global_mean: self.global_mean,
            global_sigma: (self.global_m2 / (entries - 1.0)).sqrt(),
        })
    }
}

/// Accumulates an entire matrix in batches of `batch_rows` samples.
pub fn accumulate(data: &FeatureMatrix, batch_rows: usize) -> Result<MomentAccumulator> {
    let mut acc = MomentAccumulator::new(data.channels());
    let step = batch_rows.max(1);
    let mut start = 0;
    while start < data.n_samples() {
        let end = (start + step).min(data.n_samples());
        let part = MomentAccumulator::from_batch(data.view().slice_move(ndarray::s![start..end, ..]));
        acc.merge(&part)?;
        start = end;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
    pub n_samples: u64,
}

impl CovarianceEstimate {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn trace(&self) -> f64 {
        self.cov.diag().sum()
    }
}

/// Finalized statistics consumed by the normalizer fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub covariance: CovarianceEstimate,
    pub per_channel_sigma: Array1<f64>,
    pub global_mean: f64,
    pub global_sigma: f64,
}

impl Statistics {
    /// Statistics implied by a known mean and covariance for `n_samples` draws.
    ///
    /// The global moments follow from the same decomposition the accumulator uses:
    /// the pooled sum of squares is `(N − 1)·tr Σ + N·Σ_c (μ_c − μ_g)²`.
    pub fn from_covariance(mean: Array1<f64>, cov: Array2<f64>, n_samples: u64) -> Result<Self> {
        let c = mean.len();
        if c == 0 || cov.dim() != (c, c) {
            return Err(shape_err(format!("covariance {:?} does not match mean of length {c}", cov.dim())));
        }
        if n_samples < 2 {
            return Err(Error::InsufficientData { count: n_samples });
        }
        if !mean.iter().chain(cov.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let n = n_samples as f64;
        let global_mean = mean.mean().unwrap_or(0.0);
        let spread: f64 = mean.iter().map(|m| (m - global_mean) * (m - global_mean)).sum();
        let ss = (n - 1.0) * cov.diag().sum() + n * spread;
        let global_sigma = (ss / (n * c as f64 - 1.0)).max(0.0).sqrt();
        Ok(Statistics {
            per_channel_sigma: cov.diag().mapv(|v| v.max(0.0).sqrt()),
            covariance: CovarianceEstimate { mean, cov, n_samples },
            global_mean,
            global_sigma,
        })
    }

    pub fn channels(&self) -> usize {
        self.covariance.channels()
    }

    /// `√(tr Σ / C)`, the root mean eigenvalue.
    pub fn phi(&self) -> f64 {
        (self.covariance.trace() / self.channels() as f64).max(0.0).sqrt()
    }
}

/// Eigen-decomposition `Σ = U Λ Uᵀ` with eigenvalues sorted in descending order and
/// clamped at zero. Each eigenvector is signed so that its largest-magnitude entry is
/// positive (the first such entry on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigensystem {
    /// Columns are eigenvectors.
    pub vectors: Array2<f64>,
    pub values: Array1<f64>,
}

impl Eigensystem {
    pub fn channels(&self) -> usize {
        self.values.len()
    }

    /// `U Λ Uᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.vectors * &self.values;
        scaled.dot(&self.vectors.t())
    }

    /// `U Λ^p` for an arbitrary power, used for whitening and its inverse.
    pub(crate) fn vectors_scaled(&self, power: f64) -> Array2<f64> {
        let factors = self.values.mapv(|v| v.powf(power));
        &self.vectors * &factors
    }
}

/// Maximum tolerated asymmetry relative to the largest entry.
const SYMMETRY_TOLERANCE: f64 = 1e-8;

pub fn eigh(cov: &CovarianceEstimate) -> Result<Eigensystem> {
    eigh_matrix(&cov.cov, EigenSolver::default())
}

pub fn eigh_with(cov: &CovarianceEstimate, solver: EigenSolver) -> Result<Eigensystem> {
    eigh_matrix(&cov.cov, solver)
}

/// Symmetric eigen-decomposition of an arbitrary square matrix.
pub fn eigh_matrix(m: &Array2<f64>, solver: EigenSolver) -> Result<Eigensystem> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(shape_err(format!("expected a non-empty square matrix, got {:?}", m.dim())));
    }
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let residual = linalg::asymmetry(m);
    if residual > SYMMETRY_TOLERANCE * linalg::max_abs(m).max(1.0) {
        return Err(Error::NotSymmetric { residual });
    }
    let (values, vectors) = linalg::symmetric_eigen(m.view(), solver)?;
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut sorted_vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = vectors.column(src);
        let mut arg = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[arg].abs() {
                arg = i;
            }
        }
        let sign = if col[arg] < 0.0 { -1.0 } else { 1.0 };
        sorted_vectors.column_mut(dst).assign(&col.mapv(|x| sign * x));
    }
    let values = Array1::from_iter(order.iter().map(|&i| values[i].max(0.0)));
    Ok(Eigensystem { vectors: sorted_vectors, values })
}
