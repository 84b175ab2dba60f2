//! Invertible feature normalizers.
//!
//! Every method is an affine map `y′ = A (y − μ)` with an exact inverse
//! `y = A⁻¹ y′ + μ`. The linear part is a scalar (global standardization), a
//! per-channel vector (standardization) or a dense `C × C` matrix (the whitening
//! family and PHI-S).

mod bundle;
mod map;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use bundle::{read_manifest, Manifest, TensorEntry, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use map::LinearMap;

use crate::analysis::effective_rank;
use crate::error::{shape_err, Error, Result};
use crate::hadamard::{Constructor, Recipe, DEFAULT_MAX_SIZE};
use crate::linalg::EigenSolver;
use crate::moments::{eigh_with, Eigensystem, Statistics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gstd")]
    GlobalStandardize,
    #[serde(rename = "std")]
    Standardize,
    #[serde(rename = "pca")]
    PcaWhiten,
    #[serde(rename = "zca")]
    ZcaWhiten,
    #[serde(rename = "hca")]
    HcaWhiten,
    #[serde(rename = "phis")]
    PhiS,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::GlobalStandardize,
        Method::Standardize,
        Method::PcaWhiten,
        Method::ZcaWhiten,
        Method::HcaWhiten,
        Method::PhiS,
    ];

    /// Short command-line name.
    pub fn tag(self) -> &'static str {
        match self {
            Method::GlobalStandardize => "gstd",
            Method::Standardize => "std",
            Method::PcaWhiten => "pca",
            Method::ZcaWhiten => "zca",
            Method::HcaWhiten => "hca",
            Method::PhiS => "phis",
        }
    }

    pub fn is_whitening(self) -> bool {
        matches!(self, Method::PcaWhiten | Method::ZcaWhiten | Method::HcaWhiten)
    }

    fn needs_eigensystem(self) -> bool {
        self.is_whitening() || self == Method::PhiS
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Rotation applied after decorrelation in the whitening family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Whitening {
    Pca,
    Zca,
    Hca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Relative floor on σ_c (to the largest σ) and on eigenvalues (to λ_max).
    pub floor: f64,
    /// Raise values below the floor up to it instead of failing.
    pub clamp: bool,
    /// Flip Hadamard rows so the diagonal of `H Uᵀ` is non-negative.
    pub sign_fix: bool,
    pub solver: EigenSolver,
    pub hadamard_max_size: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            floor: 1e-6,
            clamp: false,
            sign_fix: true,
            solver: EigenSolver::default(),
            hadamard_max_size: DEFAULT_MAX_SIZE,
        }
    }
}

/// A fitted, invertible normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    method: Method,
    offset: Array1<f64>,
    forward: LinearMap,
    inverse: LinearMap,
    phi: f64,
    global_mean: f64,
    global_sigma: f64,
    n_samples: u64,
    eigensystem: Option<Eigensystem>,
    hadamard: Option<(Recipe, Array2<f64>)>,
}

/// Parts of a normalizer, for assembling one from stored data.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerParts {
    pub method: Method,
    pub offset: Array1<f64>,
    pub forward: LinearMap,
    pub inverse: LinearMap,
    pub phi: f64,
    pub global_mean: f64,
    pub global_sigma: f64,
    pub n_samples: u64,
    pub eigensystem: Option<Eigensystem>,
    pub hadamard: Option<(Recipe, Array2<f64>)>,
}

impl Normalizer {
    /// Validates that the parts fit together for the declared method.
    pub fn from_parts(p: NormalizerParts) -> Result<Self> {
        let c = p.offset.len();
        if c == 0 {
            return Err(shape_err("normalizer has zero channels"));
        }
        let kind_ok = |m: &LinearMap| match p.method {
            Method::GlobalStandardize => matches!(m, LinearMap::Scalar(_)),
            Method::Standardize => matches!(m, LinearMap::Diagonal(_)),
            _ => matches!(m, LinearMap::Dense(_)),
        };
        if !kind_ok(&p.forward) || !kind_ok(&p.inverse) {
            return Err(Error::IncompleteNormalizer(format!("{} needs matching forward and inverse maps", p.method)));
        }
        for m in [&p.forward, &p.inverse] {
            m.check_channels(c)?;
        }
        if matches!(p.method, Method::HcaWhiten | Method::PhiS) && p.hadamard.is_none() {
            return Err(Error::IncompleteNormalizer(format!("{} needs its Hadamard matrix", p.method)));
        }
        if p.method.needs_eigensystem() && p.eigensystem.is_none() {
            return Err(Error::IncompleteNormalizer(format!("{} needs its eigensystem", p.method)));
        }
        if let Some(e) = &p.eigensystem {
            if e.channels() != c || e.vectors.dim() != (c, c) {
                return Err(shape_err("eigensystem does not match channel count"));
            }
        }
        if let Some((recipe, h)) = &p.hadamard {
            if recipe.size() != Some(c) || h.dim() != (c, c) {
                return Err(shape_err("Hadamard matrix does not match channel count"));
            }
        }
        let finite = p.offset.iter().all(|x| x.is_finite())
            && p.forward.all_finite()
            && p.inverse.all_finite()
            && p.phi.is_finite();
        if !finite {
            return Err(Error::NonFiniteInput);
        }
        Ok(Normalizer {
            method: p.method,
            offset: p.offset,
            forward: p.forward,
            inverse: p.inverse,
            phi: p.phi,
            global_mean: p.global_mean,
            global_sigma: p.global_sigma,
            n_samples: p.n_samples,
            eigensystem: p.eigensystem,
            hadamard: p.hadamard,
        })
    }

    pub fn into_parts(self) -> NormalizerParts {
        NormalizerParts {
            method: self.method,
            offset: self.offset,
            forward: self.forward,
            inverse: self.inverse,
            phi: self.phi,
            global_mean: self.global_mean,
            global_sigma: self.global_sigma,
            n_samples: self.n_samples,
            eigensystem: self.eigensystem,
            hadamard: self.hadamard,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn channels(&self) -> usize {
        self.offset.len()
    }

    pub fn offset(&self) -> &Array1<f64> {
        &self.offset
    }

    pub fn forward(&self) -> &LinearMap {
        &self.forward
    }

    /// Linear part of the inverse. This is also the map taking a student's error in
    /// normalized space back to the original space.
    pub fn inverse(&self) -> &LinearMap {
        &self.inverse
    }

    /// `√(tr Σ / C)` of the fitted distribution.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Scalar gain of the scalar-like methods: `1/σ_g` or `1/φ`.
    pub fn alpha(&self) -> Option<f64> {
        match self.method {
            Method::GlobalStandardize => match self.forward {
                LinearMap::Scalar(a) => Some(a),
                _ => None,
            },
            Method::PhiS => Some(1.0 / self.phi),
            _ => None,
        }
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn global_sigma(&self) -> f64 {
        self.global_sigma
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn eigensystem(&self) -> Option<&Eigensystem> {
        self.eigensystem.as_ref()
    }

    /// The (possibly sign-fixed) Hadamard matrix used by HCA and PHI-S.
    pub fn hadamard(&self) -> Option<&Array2<f64>> {
        self.hadamard.as_ref().map(|(_, h)| h)
    }

    pub fn hadamard_recipe(&self) -> Option<&Recipe> {
        self.hadamard.as_ref().map(|(r, _)| r)
    }

    fn check(&self, data: ArrayView2<'_, f64>) -> Result<()> {
        if data.ncols() != self.channels() {
            return Err(shape_err(format!(
                "input has {} channels, normalizer expects {}",
                data.ncols(),
                self.channels()
            )));
        }
        Ok(())
    }

    /// `forward · (y − offset)` for every row of `y`.
    pub fn apply(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(y)?;
        let centered = &y - &self.offset;
        Ok(self.forward.apply_rows(centered.view()))
    }

    /// `inverse · x + offset` for every row of `x`.
    pub fn invert(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let mut out = self.inverse.apply_rows(x);
        out += &self.offset;
        Ok(out)
    }

    /// Single-precision [`apply`](Self::apply); accurate to about `1e-3` relative.
    pub fn apply_f32(&self, y: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
        if y.ncols() != self.channels() {
            return Err(shape_err(format!("input has {} channels, normalizer expects {}", y.ncols(), self.channels())));
        }
        let offset = self.offset.mapv(|v| v as f32);
        let centered = &y - &offset;
        Ok(self.forward.apply_rows_f32(centered.view()))
    }

    pub fn invert_f32(&self, x: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
        if x.ncols() != self.channels() {
            return Err(shape_err(format!("input has {} channels, normalizer expects {}", x.ncols(), self.channels())));
        }
        let mut out = self.inverse.apply_rows_f32(x);
        out += &self.offset.mapv(|v| v as f32);
        Ok(out)
    }
}

fn base_parts(stats: &Statistics, method: Method, forward: LinearMap, inverse: LinearMap) -> NormalizerParts {
    NormalizerParts {
        method,
        offset: stats.covariance.mean.clone(),
        forward,
        inverse,
        phi: stats.phi(),
        global_mean: stats.global_mean,
        global_sigma: stats.global_sigma,
        n_samples: stats.covariance.n_samples,
        eigensystem: None,
        hadamard: None,
    }
}

/// Fits any of the six methods.
pub fn fit(stats: &Statistics, method: Method, opts: &FitOptions) -> Result<Normalizer> {
    match method {
        Method::GlobalStandardize => fit_global_standardize(stats),
        Method::Standardize => fit_standardize(stats, opts),
        Method::PcaWhiten => fit_whiten(stats, Whitening::Pca, opts),
        Method::ZcaWhiten => fit_whiten(stats, Whitening::Zca, opts),
        Method::HcaWhiten => fit_whiten(stats, Whitening::Hca, opts),
        Method::PhiS => fit_phi_s(stats, opts),
    }
}

/// One scale `1/σ_g` and one offset `μ_g` for every channel.
pub fn fit_global_standardize(stats: &Statistics) -> Result<Normalizer> {
    let sigma = stats.global_sigma;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateDistribution(format!("global standard deviation is {sigma}")));
    }
    let mut parts = base_parts(stats, Method::GlobalStandardize, LinearMap::Scalar(1.0 / sigma), LinearMap::Scalar(sigma));
    parts.offset = Array1::from_elem(stats.channels(), stats.global_mean);
    Normalizer::from_parts(parts)
}

/// Per-channel `(y_c − μ_c) / σ_c`.
pub fn fit_standardize(stats: &Statistics, opts: &FitOptions) -> Result<Normalizer> {
    let sigma = &stats.per_channel_sigma;
    let largest = sigma.iter().copied().fold(0.0, f64::max);
    if !(largest > 0.0) {
        return Err(Error::DegenerateDistribution("every channel is constant".into()));
    }
    let limit = opts.floor * largest;
    let mut sigma = sigma.clone();
    for (index, s) in sigma.iter_mut().enumerate() {
        if *s < limit {
            if !opts.clamp {
                return Err(Error::DegenerateChannel { index });
            }
            *s = limit;
        }
    }
    let forward = LinearMap::Diagonal(sigma.mapv(|s| 1.0 / s));
    Normalizer::from_parts(base_parts(stats, Method::Standardize, forward, LinearMap::Diagonal(sigma)))
}

/// Eigensystem with the relative floor enforced on the spectrum.
fn floored_eigensystem(stats: &Statistics, opts: &FitOptions) -> Result<Eigensystem> {
    let mut eig = eigh_with(&stats.covariance, opts.solver)?;
    let largest = eig.values[0];
    if !(largest > 0.0) {
        return Err(Error::DegenerateDistribution("covariance is zero".into()));
    }
    let limit = opts.floor * largest;
    if eig.values.iter().any(|&v| v < limit) {
        if !opts.clamp {
            let singular: Vec<f64> = eig.values.iter().map(|v| v.sqrt()).collect();
            return Err(Error::RankDeficient { effective_rank: effective_rank(&singular)? });
        }
        eig.values.mapv_inplace(|v| v.max(limit));
    }
    Ok(eig)
}

/// Hadamard matrix of order `C`, with rows flipped so `diag(H Uᵀ) ≥ 0` when requested.
fn aligned_hadamard(eig: &Eigensystem, opts: &FitOptions) -> Result<(Recipe, Array2<f64>)> {
    let h = Constructor::with_max_size(opts.hadamard_max_size).construct(eig.channels())?;
    let recipe = h.recipe().clone();
    let mut h = h.into_entries();
    if opts.sign_fix {
        for r in 0..h.nrows() {
            let d = h.row(r).dot(&eig.vectors.row(r));
            if d < 0.0 {
                h.row_mut(r).mapv_inplace(|x| -x);
            }
        }
    }
    Ok((recipe, h))
}

/// `W = Q Λ^(−1/2) Uᵀ` with `Q` = `I`, `U` or a Hadamard matrix.
pub fn fit_whiten(stats: &Statistics, q: Whitening, opts: &FitOptions) -> Result<Normalizer> {
    let eig = floored_eigensystem(stats, opts)?;
    let u = &eig.vectors;
    let u_isqrt = eig.vectors_scaled(-0.5);
    let u_sqrt = eig.vectors_scaled(0.5);
    let (method, forward, inverse, hadamard) = match q {
        Whitening::Pca => (Method::PcaWhiten, u_isqrt.t().to_owned(), u_sqrt, None),
        Whitening::Zca => (Method::ZcaWhiten, u.dot(&u_isqrt.t()), u_sqrt.dot(&u.t()), None),
        Whitening::Hca => {
            let (recipe, h) = aligned_hadamard(&eig, opts)?;
            let forward = h.dot(&u_isqrt.t());
            let inverse = u_sqrt.dot(&h.t());
            (Method::HcaWhiten, forward, inverse, Some((recipe, h)))
        }
    };
    let mut parts = base_parts(stats, method, LinearMap::Dense(forward), LinearMap::Dense(inverse));
    parts.eigensystem = Some(eig);
    parts.hadamard = hadamard;
    Normalizer::from_parts(parts)
}

/// `α H Uᵀ` with `α = 1/φ`, `φ = √(Σλ / C)`; inverse `φ U Hᵀ`.
pub fn fit_phi_s(stats: &Statistics, opts: &FitOptions) -> Result<Normalizer> {
    let eig = eigh_with(&stats.covariance, opts.solver)?;
    let total = eig.values.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDistribution("covariance has zero trace".into()));
    }
    let phi = (total / eig.channels() as f64).sqrt();
    let (recipe, h) = aligned_hadamard(&eig, opts)?;
    let rotation = h.dot(&eig.vectors.t());
    let forward = &rotation / phi;
    let inverse = rotation.t().mapv(|x| x * phi);
    let mut parts = base_parts(stats, Method::PhiS, LinearMap::Dense(forward), LinearMap::Dense(inverse));
    parts.phi = phi;
    parts.eigensystem = Some(eig);
    parts.hadamard = Some((recipe, h));
    Normalizer::from_parts(parts)
}
