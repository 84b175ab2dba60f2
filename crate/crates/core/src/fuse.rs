//! Folding a normalizer's inverse into the final linear layer of a student, so the
//! layer emits original-space features directly.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::format::TensorFile;
use crate::linalg::standard_normal;
use crate::normalize::{LinearMap, Method, Normalizer};

/// `x ↦ W x + b` with `W` of shape `C × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl LinearLayer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() || weight.is_empty() {
            return Err(shape_err(format!("weight {:?} does not match bias of length {}", weight.dim(), bias.len())));
        }
        if !weight.iter().chain(bias.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(LinearLayer { weight, bias })
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    /// Applies the layer to each row of `x`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.inputs() {
            return Err(shape_err(format!("input has {} features, layer expects {}", x.ncols(), self.inputs())));
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    /// `C × (D + 1)` tensor with the bias in the last column.
    pub fn to_tensor(&self) -> TensorFile {
        let mut packed = Array2::zeros((self.outputs(), self.inputs() + 1));
        packed.slice_mut(s![.., ..self.inputs()]).assign(&self.weight);
        packed.column_mut(self.inputs()).assign(&self.bias);
        TensorFile::from_matrix(&packed)
    }

    pub fn from_tensor(t: &TensorFile) -> Result<Self> {
        let packed = t.to_matrix()?;
        if packed.ncols() < 2 {
            return Err(shape_err("layer tensor needs at least one weight column and a bias column"));
        }
        let d = packed.ncols() - 1;
        Self::new(packed.slice(s![.., ..d]).to_owned(), packed.column(d).to_owned())
    }
}

/// A layer whose outputs are already denormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedLinear {
    pub layer: LinearLayer,
    pub method: Method,
    /// Inverse linear part that was folded in.
    pub theta: LinearMap,
}

/// `W = Θ W′` and `b = Θ b′ + μ` where `Θ` is the normalizer's inverse linear part and
/// `μ` its offset.
pub fn fuse(layer: &LinearLayer, nrm: &Normalizer) -> Result<FusedLinear> {
    if layer.outputs() != nrm.channels() {
        return Err(shape_err(format!(
            "layer emits {} channels, normalizer has {}",
            layer.outputs(),
            nrm.channels()
        )));
    }
    let theta = nrm.inverse().clone();
    let weight = theta.left_multiply(&layer.weight);
    let bias = theta.apply_vec(&layer.bias) + nrm.offset();
    Ok(FusedLinear { layer: LinearLayer::new(weight, bias)?, method: nrm.method(), theta })
}

/// Largest entrywise disagreement between the fused layer and `invert(layer(x))` on
/// the given probes, each relative to `max(1, |invert(layer(x))|)`.
pub fn verify_fusion_on(
    layer: &LinearLayer,
    nrm: &Normalizer,
    fused: &FusedLinear,
    probes: ArrayView2<'_, f64>,
) -> Result<f64> {
    let reference = nrm.invert(layer.forward(probes)?.view())?;
    let direct = fused.layer.forward(probes)?;
    let worst = direct
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(worst)
}

/// [`verify_fusion_on`] with `probe_count` standard normal probes drawn from `seed`.
pub fn verify_fusion(
    layer: &LinearLayer,
    nrm: &Normalizer,
    fused: &FusedLinear,
    probe_count: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes = standard_normal(&mut rng, probe_count.max(1), layer.inputs());
    verify_fusion_on(layer, nrm, fused, probes.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_samples, max_abs, random_orthogonal};
    use crate::moments::{accumulate, FeatureMatrix, Statistics};
    use crate::normalize::{fit, fit_global_standardize, fit_whiten, FitOptions, Whitening};
    use ndarray::arr1;
    use rand::Rng;

    fn random_layer(rng: &mut ChaCha8Rng, c: usize, d: usize) -> LinearLayer {
        let w = standard_normal(rng, c, d);
        let b = Array1::from_iter((0..c).map(|_| rng.random_range(-1.0..1.0)));
        LinearLayer::new(w, b).unwrap()
    }

    fn stats(rng: &mut ChaCha8Rng, c: usize) -> Statistics {
        let f = random_orthogonal(c, rng) * &Array1::from_iter((0..c).map(|k| 0.2 + k as f64));
        let mean = Array1::from_iter((0..c).map(|_| rng.random_range(-3.0..3.0)));
        let x = gaussian_samples(rng, 2000, &mean, &f);
        accumulate(&FeatureMatrix::new(x).unwrap(), 512).unwrap().finalize().unwrap()
    }

    #[test]
    fn identity_normalizer_leaves_layer_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = random_layer(&mut rng, 4, 3);
        let iso = Statistics::from_covariance(Array1::zeros(4), Array2::eye(4), 100).unwrap();
        let n = fit_whiten(&iso, Whitening::Zca, &FitOptions::default()).unwrap();
        let fused = fuse(&layer, &n).unwrap();
        assert!(max_abs(&(fused.layer.weight() - layer.weight())) < 1e-14);
        let shift = fused.layer.bias() - layer.bias();
        assert!(shift.iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn two_paths_agree_for_every_method() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = stats(&mut rng, 8);
        let layer = random_layer(&mut rng, 8, 5);
        for m in Method::ALL {
            let n = fit(&s, m, &FitOptions::default()).unwrap();
            let fused = fuse(&layer, &n).unwrap();
            let err = verify_fusion(&layer, &n, &fused, 1000, 7).unwrap();
            assert!(err < 1e-12, "{m}: {err}");
        }
    }

    #[test]
    fn global_standardize_bias_formula() {
        let mut s = Statistics::from_covariance(Array1::zeros(3), Array2::eye(3), 10).unwrap();
        s.global_sigma = 5.4688;
        s.global_mean = 1.1475;
        let n = fit_global_standardize(&s).unwrap();
        let layer = LinearLayer::new(Array2::ones((3, 2)), arr1(&[0.5, -1.0, 2.0])).unwrap();
        let fused = fuse(&layer, &n).unwrap();
        for (b, b0) in fused.layer.bias().iter().zip(layer.bias()) {
            assert!((b - (5.4688 * b0 + 1.1475)).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbed_bias_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = stats(&mut rng, 4);
        let layer = random_layer(&mut rng, 4, 6);
        let n = fit(&s, Method::PhiS, &FitOptions::default()).unwrap();
        let mut fused = fuse(&layer, &n).unwrap();
        let mut bias = fused.layer.bias().clone();
        bias[2] += 1e-2;
        fused.layer = LinearLayer::new(fused.layer.weight().clone(), bias).unwrap();
        assert!(verify_fusion(&layer, &n, &fused, 100, 1).unwrap() >= 1e-3);
    }

    #[test]
    fn zero_probe_isolates_bias() {
        let layer = LinearLayer::new(Array2::ones((2, 3)), arr1(&[0.1, 0.2])).unwrap();
        let s = Statistics::from_covariance(Array1::zeros(2), Array2::eye(2) * 0.25, 100).unwrap();
        let n = fit(&s, Method::Standardize, &FitOptions::default()).unwrap();
        let mut fused = fuse(&layer, &n).unwrap();
        let mut bias = fused.layer.bias().clone();
        bias[1] += 0.03;
        fused.layer = LinearLayer::new(fused.layer.weight().clone(), bias).unwrap();
        let err = verify_fusion_on(&layer, &n, &fused, Array2::zeros((1, 3)).view()).unwrap();
        assert!((err - 0.03).abs() < 1e-12);
    }

    #[test]
    fn layer_tensor_round_trip_and_shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = random_layer(&mut rng, 3, 4);
        let t = TensorFile::from_bytes(&layer.to_tensor().to_bytes()).unwrap();
        assert_eq!(t.dims(), &[3, 5]);
        assert_eq!(LinearLayer::from_tensor(&t).unwrap(), layer);
        let iso = Statistics::from_covariance(Array1::zeros(4), Array2::eye(4), 100).unwrap();
        let n = fit(&iso, Method::PhiS, &FitOptions::default()).unwrap();
        assert!(matches!(fuse(&layer, &n), Err(Error::Shape(_))));
        assert!(LinearLayer::new(Array2::zeros((2, 2)), arr1(&[1.0])).is_err());
    }
}
