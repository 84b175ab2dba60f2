//! Feature-matching losses and their gradients with respect to the prediction.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Cosine,
    HybridMse,
    HybridSmoothL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Weight of the cosine term in the hybrid losses.
    pub beta: f64,
    pub smooth_l1_delta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { kind: LossKind::Mse, beta: 0.9, smooth_l1_delta: 1.0 }
    }
}

impl LossConfig {
    pub fn mse() -> Self {
        LossConfig::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.smooth_l1_delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smooth L1 transition must be positive, got {}",
                self.smooth_l1_delta
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
        self.value_and_grad(x, y).map(|(v, _)| v)
    }

    /// Loss and its gradient with respect to `x`.
    pub fn value_and_grad(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
        self.validate()?;
        match self.kind {
            LossKind::Mse => mse_with_grad(x, y),
            LossKind::Cosine => cosine_with_grad(x, y),
            LossKind::HybridMse | LossKind::HybridSmoothL1 => {
                let (c, gc) = cosine_with_grad(x, y)?;
                let (m, gm) = if self.kind == LossKind::HybridMse {
                    mse_with_grad(x, y)?
                } else {
                    smooth_l1_with_grad(x, y, self.smooth_l1_delta)?
                };
                let b = self.beta;
                Ok((b * c + (1.0 - b) * m, gc * b + gm * (1.0 - b)))
            }
        }
    }
}

fn check(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(shape_err(format!("prediction {:?} and target {:?} differ", x.dim(), y.dim())));
    }
    if x.is_empty() {
        return Err(shape_err("loss of an empty batch"));
    }
    Ok(())
}

/// Mean of squared differences over every element.
pub fn loss_mse(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    mse_with_grad(x, y).map(|(v, _)| v)
}

/// Mean over rows of `1 − cos(x_i, y_i)`. A row where either side is zero counts as 1.
pub fn loss_cosine(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    cosine_with_grad(x, y).map(|(v, _)| v)
}

/// Mean over every element of the Huber-style smooth L1 with transition `delta`.
pub fn loss_smooth_l1(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, delta: f64) -> Result<f64> {
    smooth_l1_with_grad(x, y, delta).map(|(v, _)| v)
}

pub fn loss_hybrid(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, cfg: &LossConfig) -> Result<f64> {
    cfg.value(x, y)
}

fn mse_with_grad(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    check(x, y)?;
    let n = x.len() as f64;
    let diff = &x - &y;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((value, diff * (2.0 / n)))
}

fn smooth_l1_with_grad(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, delta: f64) -> Result<(f64, Array2<f64>)> {
    check(x, y)?;
    let n = x.len() as f64;
    let mut grad = Array2::zeros(x.dim());
    let mut total = 0.0;
    Zip::from(&mut grad).and(&x).and(&y).for_each(|g, &a, &b| {
        let d = a - b;
        if d.abs() < delta {
            total += 0.5 * d * d / delta;
            *g = d / delta / n;
        } else {
            total += d.abs() - 0.5 * delta;
            *g = d.signum() / n;
        }
    });
    Ok((total / n, grad))
}

fn cosine_with_grad(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    check(x, y)?;
    let rows = x.nrows() as f64;
    let mut grad = Array2::zeros(x.dim());
    let mut total = 0.0;
    for ((xr, yr), mut gr) in x.rows().into_iter().zip(y.rows()).zip(grad.rows_mut()) {
        let nx = xr.dot(&xr).sqrt();
        let ny = yr.dot(&yr).sqrt();
        if nx == 0.0 || ny == 0.0 {
            total += 1.0;
            continue;
        }
        let cos = xr.dot(&yr) / (nx * ny);
        total += 1.0 - cos;
        // d(1 − cos)/dx = −(y / (|x||y|) − cos · x / |x|²)
        Zip::from(&mut gr).and(&xr).and(&yr).for_each(|g, &a, &b| {
            *g = -(b / (nx * ny) - cos * a / (nx * nx)) / rows;
        });
    }
    Ok((total / rows, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::linalg::standard_normal;

    fn random(seed: u64, r: usize, c: usize) -> Array2<f64> {
        standard_normal(&mut ChaCha8Rng::seed_from_u64(seed), r, c)
    }

    fn naive_mse(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                s += (x[[i, j]] - y[[i, j]]).powi(2);
            }
        }
        s / (x.nrows() * x.ncols()) as f64
    }

    fn naive_cosine(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..x.nrows() {
            let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for j in 0..x.ncols() {
                xy += x[[i, j]] * y[[i, j]];
                xx += x[[i, j]] * x[[i, j]];
                yy += y[[i, j]] * y[[i, j]];
            }
            s += 1.0 - xy / (xx.sqrt() * yy.sqrt());
        }
        s / x.nrows() as f64
    }

    #[test]
    fn mse_examples() {
        let x = random(1, 4, 3);
        assert_eq!(loss_mse(x.view(), x.view()).unwrap(), 0.0);
        assert_eq!(loss_mse(arr2(&[[0.0, 0.0]]).view(), arr2(&[[2.0, 0.0]]).view()).unwrap(), 2.0);
        let y = random(2, 4, 3);
        assert!((loss_mse(x.view(), y.view()).unwrap() - naive_mse(&x, &y)).abs() < 1e-12);
        assert!(matches!(loss_mse(x.view(), random(3, 3, 3).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn cosine_examples() {
        let y = random(4, 5, 6);
        assert!(loss_cosine((&y * 3.0).view(), y.view()).unwrap().abs() < 1e-12);
        assert!((loss_cosine((&y * -1.0).view(), y.view()).unwrap() - 2.0).abs() < 1e-12);
        let x = random(5, 5, 6);
        assert!((loss_cosine(x.view(), y.view()).unwrap() - naive_cosine(&x, &y)).abs() < 1e-12);
        let zero = Array2::zeros((2, 6));
        assert_eq!(loss_cosine(zero.view(), y.slice(ndarray::s![..2, ..])).unwrap(), 1.0);
    }

    #[test]
    fn smooth_l1_regions() {
        let x = arr2(&[[0.5, 3.0]]);
        let y = arr2(&[[0.0, 0.0]]);
        // 0.5·0.25 and 3 − 0.5
        assert!((loss_smooth_l1(x.view(), y.view(), 1.0).unwrap() - (0.125 + 2.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn hybrid_endpoints() {
        let x = random(6, 3, 4);
        let y = random(7, 3, 4);
        let cfg = |kind, beta| LossConfig { kind, beta, smooth_l1_delta: 1.0 };
        assert_eq!(
            loss_hybrid(x.view(), y.view(), &cfg(LossKind::HybridMse, 0.0)).unwrap(),
            loss_mse(x.view(), y.view()).unwrap()
        );
        assert_eq!(
            loss_hybrid(x.view(), y.view(), &cfg(LossKind::HybridSmoothL1, 1.0)).unwrap(),
            loss_cosine(x.view(), y.view()).unwrap()
        );
        let mixed = loss_hybrid(x.view(), y.view(), &cfg(LossKind::HybridSmoothL1, 0.9)).unwrap();
        let expected = 0.9 * loss_cosine(x.view(), y.view()).unwrap() + 0.1 * loss_smooth_l1(x.view(), y.view(), 1.0).unwrap();
        assert!((mixed - expected).abs() < 1e-15);
        assert!(cfg(LossKind::HybridMse, 1.5).validate().is_err());
    }

    /// Largest relative mismatch between the analytic gradient and central differences.
    pub(crate) fn gradient_check(cfg: &LossConfig, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let (_, grad) = cfg.value_and_grad(x.view(), y.view()).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for idx in 0..x.len() {
            let (i, j) = (idx / x.ncols(), idx % x.ncols());
            let mut plus = x.clone();
            plus[[i, j]] += h;
            let mut minus = x.clone();
            minus[[i, j]] -= h;
            let numeric = (cfg.value(plus.view(), y.view()).unwrap() - cfg.value(minus.view(), y.view()).unwrap()) / (2.0 * h);
            let scale = numeric.abs().max(grad[[i, j]].abs()).max(1e-3);
            worst = worst.max((numeric - grad[[i, j]]).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = random(8, 4, 5);
        let y = random(9, 4, 5) * 2.0;
        for kind in [LossKind::Mse, LossKind::Cosine, LossKind::HybridMse, LossKind::HybridSmoothL1] {
            let cfg = LossConfig { kind, beta: 0.7, smooth_l1_delta: 1.0 };
            let err = gradient_check(&cfg, &x, &y);
            assert!(err < 1e-5, "{kind:?}: {err}");
        }
    }
}
