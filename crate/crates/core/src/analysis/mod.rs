//! Diagnostics on fitted normalizers: how normalized-space errors map back to the
//! original space, per-channel error variance spread, effective rank, and how well a
//! Hadamard rotation lines up with a covariance eigenbasis.

mod assignment;

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use assignment::{max_weight_assignment, min_cost_assignment};

use crate::error::{shape_err, Error, Result};
use crate::linalg::EigenSolver;
use crate::moments::{Eigensystem, Statistics};
use crate::normalize::{fit, FitOptions, LinearMap, Method, Normalizer};

/// Default number of angles in a radial curve.
pub const RADIAL_GRID: usize = 720;
/// Matched-diagonal threshold counted by [`alignment_report`].
pub const ALIGNMENT_THRESHOLD: f64 = 0.75;

/// Map from a student's error in normalized space to the error it causes in the
/// original space.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub method: Method,
    pub channels: usize,
    pub back_map: LinearMap,
    pub eigensystem: Option<Eigensystem>,
}

pub fn error_back_map(nrm: &Normalizer) -> ErrorProfile {
    ErrorProfile {
        method: nrm.method(),
        channels: nrm.channels(),
        back_map: nrm.inverse().clone(),
        eigensystem: nrm.eigensystem().cloned(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialCurve {
    pub thetas: Vec<f64>,
    pub radii: Vec<f64>,
}

impl RadialCurve {
    pub fn argmax(&self) -> usize {
        (0..self.radii.len()).fold(0, |best, i| if self.radii[i] > self.radii[best] { i } else { best })
    }

    pub fn argmin(&self) -> usize {
        (0..self.radii.len()).fold(0, |best, i| if self.radii[i] < self.radii[best] { i } else { best })
    }

    pub fn max(&self) -> f64 {
        self.radii[self.argmax()]
    }

    pub fn min(&self) -> f64 {
        self.radii[self.argmin()]
    }

    /// Grid spacing in radians.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.thetas.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,radius\n");
        for (t, r) in self.thetas.iter().zip(&self.radii) {
            out.push_str(&format!("{t},{r}\n"));
        }
        out
    }
}

/// Radius `‖B (cos θ, sin θ)‖` of the image of the unit error circle under a 2-D back
/// map, on `points` angles spread uniformly over `[0, 2π)`.
pub fn radial_curve(profile: &ErrorProfile, points: usize) -> Result<RadialCurve> {
    if profile.channels != 2 {
        return Err(shape_err(format!("radial curves need 2 channels, got {}", profile.channels)));
    }
    if points == 0 {
        return Err(Error::InvalidArgument("radial grid needs at least one point".into()));
    }
    let b = profile.back_map.to_dense(2);
    let thetas: Vec<f64> = (0..points).map(|i| 2.0 * PI * i as f64 / points as f64).collect();
    let radii = thetas
        .iter()
        .map(|t| {
            let (s, c) = t.sin_cos();
            let x = b[[0, 0]] * c + b[[0, 1]] * s;
            let y = b[[1, 0]] * c + b[[1, 1]] * s;
            x.hypot(y)
        })
        .collect();
    Ok(RadialCurve { thetas, radii })
}

/// Radial curve of `method` fitted to the zero-mean distribution with eigensystem
/// `eigs`.
pub fn radial_error(eigs: &Eigensystem, method: Method, points: usize) -> Result<RadialCurve> {
    if eigs.channels() != 2 {
        return Err(shape_err(format!("radial curves need 2 channels, got {}", eigs.channels())));
    }
    let stats = Statistics::from_covariance(Array1::zeros(2), symmetric(eigs.reconstruct()), 1 << 40)?;
    let opts = FitOptions { solver: EigenSolver::default(), ..FitOptions::default() };
    radial_curve(&error_back_map(&fit(&stats, method, &opts)?), points)
}

fn symmetric(mut m: Array2<f64>) -> Array2<f64> {
    crate::linalg::symmetrize(&mut m);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRangeReport {
    pub normalized_variances: Vec<f64>,
    pub denormalized_variances: Vec<f64>,
    pub normalized_range: f64,
    pub denormalized_range: f64,
}

fn column_variances(x: ArrayView2<'_, f64>) -> Vec<f64> {
    x.var_axis(Axis(0), 1.0).to_vec()
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Per-channel variances of normalized-space errors and of the same errors mapped
/// back to the original space, with their max − min ranges.
pub fn variance_range(nrm: &Normalizer, student_err: ArrayView2<'_, f64>) -> Result<VarianceRangeReport> {
    if student_err.ncols() != nrm.channels() {
        return Err(shape_err(format!(
            "errors have {} channels, normalizer expects {}",
            student_err.ncols(),
            nrm.channels()
        )));
    }
    variance_range_with(nrm.inverse(), student_err)
}

/// [`variance_range`] for an explicit back map, e.g. `Scalar(1)` when training ran on
/// unnormalized targets.
pub fn variance_range_with(back_map: &LinearMap, student_err: ArrayView2<'_, f64>) -> Result<VarianceRangeReport> {
    back_map.check_channels(student_err.ncols())?;
    if student_err.nrows() < 2 {
        return Err(Error::InsufficientData { count: student_err.nrows() as u64 });
    }
    let normalized = column_variances(student_err);
    let denormalized = column_variances(back_map.apply_rows(student_err).view());
    Ok(VarianceRangeReport {
        normalized_range: spread(&normalized),
        denormalized_range: spread(&denormalized),
        normalized_variances: normalized,
        denormalized_variances: denormalized,
    })
}

/// Exponential of the Shannon entropy of `σ_k / Σσ`, ignoring zeros.
pub fn effective_rank(singular_values: &[f64]) -> Result<f64> {
    if singular_values.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if singular_values.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidArgument("singular values must be non-negative".into()));
    }
    let total: f64 = singular_values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDistribution("spectrum is all zero".into()));
    }
    let entropy: f64 = singular_values
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy.exp())
}

/// Effective rank of a covariance spectrum, via singular values `√λ`.
pub fn effective_rank_from_eigenvalues(eigenvalues: &[f64]) -> Result<f64> {
    let singular: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    effective_rank(&singular)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Column matched to each row of `|H Uᵀ|`.
    pub assignment: Vec<usize>,
    pub matched: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count_above: usize,
    pub threshold: f64,
}

/// Statistics of `|H Uᵀ|` after the row-to-column matching that maximizes the matched
/// sum.
pub fn alignment_report(eigs: &Eigensystem, h: &Array2<f64>) -> Result<AlignmentReport> {
    let c = eigs.channels();
    if h.dim() != (c, c) || eigs.vectors.dim() != (c, c) {
        return Err(shape_err(format!("Hadamard matrix {:?} does not match {c} channels", h.dim())));
    }
    let overlap = h.dot(&eigs.vectors.t()).mapv(f64::abs);
    let assignment = max_weight_assignment(&overlap);
    let matched: Vec<f64> = assignment.iter().enumerate().map(|(r, &j)| overlap[[r, j]]).collect();
    Ok(AlignmentReport {
        mean: matched.iter().sum::<f64>() / c as f64,
        min: matched.iter().copied().fold(f64::INFINITY, f64::min),
        max: matched.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count_above: matched.iter().filter(|&&m| m > ALIGNMENT_THRESHOLD).count(),
        threshold: ALIGNMENT_THRESHOLD,
        assignment,
        matched,
    })
}
