//! Synthetic teachers: Gaussian latents pushed through a fixed linear mixing, then
//! scaled and shifted to a target magnitude.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{perturbed_orthogonal, random_orthogonal, standard_normal};
use crate::moments::FeatureMatrix;

/// `(name, global mean, global σ)` for four teachers of very different magnitude.
/// The ratio between the largest and smallest σ is about 191.
pub const REFERENCE_TEACHERS: [(&str, f64, f64); 4] = [
    ("clip", 0.0049, 0.0286),
    ("siglip", 0.0211, 1.8389),
    ("dinov2", 0.0055, 1.3496),
    ("sam", 1.1475, 5.4688),
];

/// Channel means sit `MEAN_SPREAD · σ_g` (root mean square) around the global mean.
const MEAN_SPREAD: f64 = 0.25;

/// `y = mean + g · (M z) ∘ scale` for a standard normal latent `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub name: String,
    pub latent_dim: usize,
    pub channels: usize,
    /// `C × K`.
    pub mixing: Array2<f64>,
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    pub global_scale: f64,
}

/// Shape of the covariance spectrum and of the unpredictable part of a synthetic
/// teacher built by [`TeacherSpec::synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticShape {
    /// Eigenvalues fall off as `k^(−spectrum_decay)`.
    pub spectrum_decay: f64,
    /// Each eigendirection draws its private-noise fraction from this range.
    pub noise_min: f64,
    pub noise_max: f64,
    /// How far the eigenbasis is rotated away from the channel axes; see
    /// [`perturbed_orthogonal`].
    pub eigenbasis_rotation: f64,
}

impl Default for SyntheticShape {
    fn default() -> Self {
        SyntheticShape { spectrum_decay: 1.0, noise_min: 0.02, noise_max: 0.6, eigenbasis_rotation: 0.5 }
    }
}

impl TeacherSpec {
    pub fn new(
        name: impl Into<String>,
        mixing: Array2<f64>,
        mean: Array1<f64>,
        scale: Array1<f64>,
        global_scale: f64,
    ) -> Result<Self> {
        let (c, k) = mixing.dim();
        if c == 0 || k == 0 || mean.len() != c || scale.len() != c {
            return Err(shape_err(format!(
                "mixing {:?} needs mean and scale of length {c}, got {} and {}",
                mixing.dim(),
                mean.len(),
                scale.len()
            )));
        }
        if !mixing.iter().chain(&mean).chain(&scale).all(|x| x.is_finite()) || !global_scale.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(TeacherSpec { name: name.into(), latent_dim: k, channels: c, mixing, mean, scale, global_scale })
    }

    /// A teacher whose latent is a `shared_dim`-dimensional signal common to all
    /// teachers followed by `channels` dimensions of private noise.
    ///
    /// The covariance is `g² U Λ Uᵀ` with `tr Λ = C`. Along eigendirection `k` a
    /// fraction `f_k` of the variance is private noise and the rest is a fixed
    /// projection of the shared signal. Channel means scatter around `global_mean`,
    /// and `g` is chosen so the pooled standard deviation is exactly `global_sigma`.
    pub fn synthetic<R: Rng + ?Sized>(
        name: impl Into<String>,
        shared_dim: usize,
        channels: usize,
        global_mean: f64,
        global_sigma: f64,
        shape: &SyntheticShape,
        rng: &mut R,
    ) -> Result<Self> {
        if channels < 2 || shared_dim < channels {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 channels and a shared dimension of at least {channels}, got {shared_dim}"
            )));
        }
        if !(0.0..=1.0).contains(&shape.noise_min) || !(shape.noise_min..=1.0).contains(&shape.noise_max) {
            return Err(Error::InvalidArgument("noise fractions must satisfy 0 ≤ min ≤ max ≤ 1".into()));
        }
        if !(global_sigma >= 0.0) || !global_mean.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid global moments ({global_mean}, {global_sigma})")));
        }
        let c = channels;
        let raw: Vec<f64> = (1..=c).map(|k| (k as f64).powf(-shape.spectrum_decay)).collect();
        let total: f64 = raw.iter().sum();
        let lambda: Vec<f64> = raw.iter().map(|l| l * c as f64 / total).collect();
        let fractions: Vec<f64> = (0..c).map(|_| rng.random_range(shape.noise_min..=shape.noise_max)).collect();

        let u = perturbed_orthogonal(c, shape.eigenbasis_rotation, rng);
        let a = random_orthogonal(shared_dim, rng);
        let mut core = Array2::zeros((c, shared_dim + c));
        for k in 0..c {
            let signal = (lambda[k] * (1.0 - fractions[k])).sqrt();
            core.slice_mut(s![k, ..shared_dim]).assign(&(&a.row(k) * signal));
            core[[k, shared_dim + k]] = (lambda[k] * fractions[k]).sqrt();
        }
        let mixing = u.dot(&core);

        let mut zeta = standard_normal(rng, c, 1).remove_axis(Axis(1));
        zeta -= zeta.mean().unwrap_or(0.0);
        let rms = (zeta.dot(&zeta) / c as f64).sqrt();
        zeta /= rms;
        let mean = zeta * (MEAN_SPREAD * global_sigma) + global_mean;
        let g = global_sigma * (1.0 - MEAN_SPREAD * MEAN_SPREAD).sqrt();
        Self::new(name, mixing, mean, Array1::ones(c), g)
    }

    /// Population standard deviation of each channel.
    pub fn channel_sigma(&self) -> Array1<f64> {
        let norms = self.mixing.map_axis(Axis(1), |row| row.dot(&row).sqrt());
        norms * &self.scale * self.global_scale.abs()
    }

    pub fn global_mean(&self) -> f64 {
        self.mean.mean().unwrap_or(0.0)
    }

    /// Population standard deviation of all entries pooled together.
    pub fn global_sigma(&self) -> f64 {
        let mu = self.global_mean();
        let c = self.channels as f64;
        let var: f64 = self.channel_sigma().iter().map(|s| s * s).sum::<f64>() / c;
        let spread: f64 = self.mean.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / c;
        (var + spread).sqrt()
    }

    /// Population covariance `g² diag(s) M Mᵀ diag(s)`.
    pub fn covariance(&self) -> Array2<f64> {
        let scaled = &self.mixing * &self.scale.view().insert_axis(Axis(1)) * self.global_scale;
        scaled.dot(&scaled.t())
    }

    /// Maps rows of latent vectors to teacher features.
    pub fn generate(&self, latent: ArrayView2<'_, f64>) -> Result<FeatureMatrix> {
        if latent.ncols() != self.latent_dim {
            return Err(shape_err(format!("latent has {} dims, teacher expects {}", latent.ncols(), self.latent_dim)));
        }
        let y = latent.dot(&self.mixing.t()) * &(&self.scale * self.global_scale) + &self.mean;
        FeatureMatrix::new(y)
    }
}

/// `n` samples from `spec` with a fresh standard normal latent.
pub fn make_teacher(spec: &TeacherSpec, n: usize, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = standard_normal(&mut rng, n, spec.latent_dim);
    spec.generate(latent.view())
}
