use isonorm::analysis::radial_error;
use isonorm::distill::{LossConfig, LossKind};
use isonorm::hadamard::{construct, validate};
use isonorm::linalg::{diag_matrix, random_orthogonal, EigenSolver};
use isonorm::moments::{accumulate, eigh_matrix, FeatureMatrix, MomentAccumulator, Statistics};
use isonorm::normalize::{fit, FitOptions, Method, Normalizer};
use ndarray::{arr1, Array2, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random data with per-channel scales spanning several decades.
fn data(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (
        proptest::collection::vec(-3.0..3.0f64, rows * cols),
        proptest::collection::vec(-2.0..2.0f64, cols),
        proptest::collection::vec(-10.0..10.0f64, cols),
    )
        .prop_map(move |(v, log_scale, shift)| {
            let mut x = Array2::from_shape_vec((rows, cols), v).unwrap();
            for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
                col.mapv_inplace(|e| e * 10f64.powf(log_scale[j]) + shift[j]);
            }
            x
        })
}

fn stats(x: &Array2<f64>) -> Statistics {
    accumulate(&FeatureMatrix::new(x.clone()).unwrap(), 64).unwrap().finalize().unwrap()
}

fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn merging_any_split_matches_one_pass(x in data(60, 5), cut in 1usize..59) {
        let whole = accumulate(&FeatureMatrix::new(x.clone()).unwrap(), 1000).unwrap();
        let mut left = MomentAccumulator::new(5);
        left.update(&FeatureMatrix::new(x.slice(ndarray::s![..cut, ..]).to_owned()).unwrap()).unwrap();
        let mut right = MomentAccumulator::new(5);
        right.update(&FeatureMatrix::new(x.slice(ndarray::s![cut.., ..]).to_owned()).unwrap()).unwrap();
        left.merge(&right).unwrap();
        let a = whole.finalize().unwrap();
        let b = left.finalize().unwrap();
        prop_assert!(close(&b.covariance.cov, &a.covariance.cov, 1e-9));
        prop_assert!((a.global_sigma - b.global_sigma).abs() <= 1e-9 * a.global_sigma);
    }

    #[test]
    fn every_method_round_trips(x in data(40, 4)) {
        let s = stats(&x);
        let opts = FitOptions { clamp: true, ..FitOptions::default() };
        for m in Method::ALL {
            let nrm = fit(&s, m, &opts).unwrap();
            let back = nrm.invert(nrm.apply(x.view()).unwrap().view()).unwrap();
            prop_assert!(close(&back, &x, 1e-7), "{m:?}");
        }
    }

    #[test]
    fn phi_s_output_has_unit_channel_variance(x in data(50, 8)) {
        let nrm = fit(&stats(&x), Method::PhiS, &FitOptions::default()).unwrap();
        let var = nrm.apply(x.view()).unwrap().var_axis(Axis(0), 1.0);
        prop_assert!(var.iter().all(|v| (v - 1.0).abs() < 1e-8), "{var}");
    }

    #[test]
    fn phi_s_scale_ignores_rotation(x in data(50, 8), seed in any::<u64>()) {
        let q = random_orthogonal(8, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = fit(&stats(&x), Method::PhiS, &FitOptions::default()).unwrap().alpha().unwrap();
        let b = fit(&stats(&x.dot(&q.t())), Method::PhiS, &FitOptions::default()).unwrap().alpha().unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn normalizer_bytes_round_trip(x in data(30, 4), which in 0usize..6) {
        let opts = FitOptions { clamp: true, ..FitOptions::default() };
        let nrm = fit(&stats(&x), Method::ALL[which], &opts).unwrap();
        let again = Normalizer::from_bytes(&nrm.to_bytes()).unwrap();
        prop_assert_eq!(again.to_bytes(), nrm.to_bytes());
    }

    #[test]
    fn whitening_radius_energy_is_half_trace(l1 in 0.01..10.0f64, l2 in 0.01..10.0f64) {
        let eigs = eigh_matrix(&diag_matrix(&arr1(&[l1, l2])), EigenSolver::default()).unwrap();
        for m in [Method::PcaWhiten, Method::ZcaWhiten, Method::HcaWhiten] {
            let curve = radial_error(&eigs, m, 720).unwrap();
            let energy = curve.radii.iter().map(|r| r * r).sum::<f64>() / curve.radii.len() as f64;
            prop_assert!((energy - 0.5 * (l1 + l2)).abs() < 1e-9 * (l1 + l2));
        }
    }

    #[test]
    fn hybrid_loss_gradient_matches_differences(beta in 0.0..=1.0f64, seed in any::<u64>(), smooth in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = isonorm::linalg::standard_normal(&mut rng, 3, 4);
        let y = isonorm::linalg::standard_normal(&mut rng, 3, 4);
        let kind = if smooth { LossKind::HybridSmoothL1 } else { LossKind::HybridMse };
        let cfg = LossConfig { kind, beta, smooth_l1_delta: 1.0 };
        let (_, g) = cfg.value_and_grad(x.view(), y.view()).unwrap();
        let h = 1e-6;
        for ((i, j), gij) in g.indexed_iter() {
            let mut p = x.clone();
            let mut m = x.clone();
            p[[i, j]] += h;
            m[[i, j]] -= h;
            let fd = (cfg.value(p.view(), y.view()).unwrap() - cfg.value(m.view(), y.view()).unwrap()) / (2.0 * h);
            prop_assert!((fd - gij).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn small_multiples_of_known_orders_are_hadamard(k in 0u32..4, base in prop::sample::select(vec![1usize, 2, 12, 20, 28])) {
        let h = construct(base << k).unwrap();
        prop_assert!(validate(&h).passes(1e-9, 1e-12));
    }
}
