use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{shape_err, Result};

/// Linear part of a normalizer or of its inverse.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    Scalar(f64),
    Diagonal(Array1<f64>),
    /// Acts on column vectors: `v ↦ M v`.
    Dense(Array2<f64>),
}

impl LinearMap {
    pub(crate) fn check_channels(&self, c: usize) -> Result<()> {
        let ok = match self {
            LinearMap::Scalar(_) => true,
            LinearMap::Diagonal(d) => d.len() == c,
            LinearMap::Dense(m) => m.dim() == (c, c),
        };
        if ok {
            Ok(())
        } else {
            Err(shape_err(format!("linear map does not act on {c} channels")))
        }
    }

    pub(crate) fn all_finite(&self) -> bool {
        match self {
            LinearMap::Scalar(s) => s.is_finite(),
            LinearMap::Diagonal(d) => d.iter().all(|x| x.is_finite()),
            LinearMap::Dense(m) => m.iter().all(|x| x.is_finite()),
        }
    }

    /// Applies the map to each row of `x`.
    pub fn apply_rows(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            LinearMap::Scalar(s) => x.mapv(|v| v * s),
            LinearMap::Diagonal(d) => &x * d,
            LinearMap::Dense(m) => x.dot(&m.t()),
        }
    }

    pub fn apply_rows_f32(&self, x: ArrayView2<'_, f32>) -> Array2<f32> {
        match self {
            LinearMap::Scalar(s) => {
                let s = *s as f32;
                x.mapv(|v| v * s)
            }
            LinearMap::Diagonal(d) => &x * &d.mapv(|v| v as f32),
            LinearMap::Dense(m) => x.dot(&m.t().mapv(|v| v as f32)),
        }
    }

    pub fn apply_vec(&self, v: &Array1<f64>) -> Array1<f64> {
        match self {
            LinearMap::Scalar(s) => v * *s,
            LinearMap::Diagonal(d) => v * d,
            LinearMap::Dense(m) => m.dot(v),
        }
    }

    /// Dense `c × c` form.
    pub fn to_dense(&self, c: usize) -> Array2<f64> {
        match self {
            LinearMap::Scalar(s) => Array2::eye(c) * *s,
            LinearMap::Diagonal(d) => Array2::from_diag(d),
            LinearMap::Dense(m) => m.clone(),
        }
    }

    /// `self · rhs` for a `c × d` matrix.
    pub fn left_multiply(&self, rhs: &Array2<f64>) -> Array2<f64> {
        match self {
            LinearMap::Scalar(s) => rhs * *s,
            LinearMap::Diagonal(d) => rhs * &d.view().insert_axis(ndarray::Axis(1)),
            LinearMap::Dense(m) => m.dot(rhs),
        }
    }
}
