mod common;

use common::*;
use eqr_core::net::{
    apply_filter, check_equivariance, find_equivariance_violation, materialize_matrix,
    max_equivariance_deviation, Activation, CircularFilter, ConstantBias, DenseAffineLayer,
    DenseNetwork, EquivariantLayer, EquivariantNetwork, TensorMap,
};
use eqr_core::tensor::{CircularTensor, MultiTensor, Shape, TranslationVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `out[M] = sum_J base[J] x[M + J]`, straight from the index arithmetic.
fn correlate_oracle(base: &[f64], x: &[f64], dims: &[usize]) -> Vec<f64> {
    let n: usize = dims.iter().product();
    let unflat = |mut k: usize| {
        let mut idx = vec![0i64; dims.len()];
        for (slot, &d) in idx.iter_mut().zip(dims).rev() {
            *slot = (k % d) as i64;
            k /= d;
        }
        idx
    };
    (0..n)
        .map(|m| {
            let mi = unflat(m);
            (0..n)
                .map(|j| {
                    let ji = unflat(j);
                    let sum: Vec<i64> = mi.iter().zip(&ji).map(|(a, b)| a + b).collect();
                    base[j] * x[flat(dims, &sum)]
                })
                .sum()
        })
        .collect()
}

#[test]
fn filter_matches_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let sh = random_shape(&mut rng, 6);
        let f = random_filter(&mut rng, &sh);
        let x = CircularTensor::from_fn(sh.clone(), |_| rng.gen_range(-1.0..1.0));
        let got = apply_filter(&f, &x).unwrap();
        let want = correlate_oracle(f.base().vectorize(), x.vectorize(), sh.dims());
        for (g, w) in got.vectorize().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
        // matrix route
        let m = materialize_matrix(&f).unwrap();
        let n = sh.len();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| m[i * n + j] * x.vectorize()[j]).sum();
            assert!((row - got.vectorize()[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn sparse_and_dense_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let sh = random_shape(&mut rng, 6);
        let f = random_filter(&mut rng, &sh);
        let x = CircularTensor::from_fn(sh.clone(), |_| rng.gen_range(-1.0..1.0));
        let a = apply_filter(&f.to_dense(), &x).unwrap();
        let b = apply_filter(&f.to_sparse(), &x).unwrap();
        for (p, q) in a.vectorize().iter().zip(b.vectorize()) {
            assert!((p - q).abs() <= 1e-12);
        }
    }
}

#[test]
fn small_filter_examples() {
    let sh = Shape::new(&[3]).unwrap();
    let f = CircularFilter::dense(CircularTensor::new(sh.clone(), vec![1.0, 2.0, 0.0]).unwrap());
    let x = CircularTensor::new(sh.clone(), vec![1.0, 0.0, 0.0]).unwrap();
    assert_eq!(apply_filter(&f, &x).unwrap().vectorize(), &[1.0, 0.0, 2.0]);

    // one-hot input at I gives out[M] = b[I - M]
    let sh = Shape::new(&[3, 4]).unwrap();
    let b = CircularTensor::from_fn(sh.clone(), |k| (k * 7 % 11) as f64);
    let f = CircularFilter::dense(b.clone());
    let i = [2i64, 1];
    let out = apply_filter(&f, &CircularTensor::one_hot(sh.clone(), &i).unwrap()).unwrap();
    for m0 in 0..3i64 {
        for m1 in 0..4i64 {
            assert_eq!(out.get(&[m0, m1]), b.get(&[i[0] - m0, i[1] - m1]));
        }
    }
}

#[test]
fn layer_and_network_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let sh = Shape::new(&[4, 4]).unwrap();
    for _ in 0..20 {
        let layer = random_layer(&mut rng, &sh, 2, 2);
        let x = random_tensor(&mut rng, &sh, 2);
        let dense = DenseAffineLayer::from_layer(&layer).unwrap();
        let d = layer
            .apply(&x)
            .unwrap()
            .max_abs_diff(&dense.apply(&x).unwrap())
            .unwrap();
        assert!(d <= 1e-12, "layer deviation {d}");
    }
    for _ in 0..20 {
        let mut net = random_network(&mut rng, &sh, 3, 3);
        while net.depth() != 3 {
            net = random_network(&mut rng, &sh, 3, 3);
        }
        let x = random_tensor(&mut rng, &sh, net.in_channels());
        let dense = DenseNetwork::from_network(&net).unwrap();
        let d = net
            .forward(&x)
            .unwrap()
            .max_abs_diff(&dense.map(&x).unwrap())
            .unwrap();
        assert!(d <= 1e-10, "network deviation {d}");
    }
}

#[test]
fn layer_edge_cases() {
    let sh = Shape::new(&[3, 3]).unwrap();
    let x: MultiTensor = CircularTensor::from_fn(sh.clone(), |k| k as f64).into();
    let id = EquivariantLayer::new(
        1,
        1,
        vec![CircularFilter::scaled_identity(sh.clone(), 1.0)],
        vec![ConstantBias(0.0)],
        Activation::Identity,
    )
    .unwrap();
    assert_eq!(id.apply(&x).unwrap(), x);
    let kill = EquivariantLayer::new(
        1,
        1,
        vec![CircularFilter::scaled_identity(sh.clone(), 1.0)],
        vec![ConstantBias(-1e300)],
        Activation::Relu,
    )
    .unwrap();
    assert!(kill.apply(&x).unwrap().as_slice().iter().all(|&v| v == 0.0));
    let empty = EquivariantNetwork::new(sh.clone(), 1, vec![]).unwrap();
    assert_eq!(empty.forward(&x).unwrap(), x);
    let one = EquivariantNetwork::new(sh, 1, vec![id.clone()]).unwrap();
    assert_eq!(one.forward(&x).unwrap(), id.apply(&x).unwrap());
    // channel mismatch
    assert!(id.apply(&MultiTensor::zeros(x.shape().clone(), 2)).is_err());
}

#[test]
fn translate_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let sh = random_shape(&mut rng, 5);
        let x = random_tensor(&mut rng, &sh, 2);
        for m in TranslationVector::all(&sh) {
            let m = TranslationVector(m.0.iter().map(|v| v - 3).collect());
            assert_eq!(x.translate(&m).unwrap(), translate_oracle(&x, &m.0));
        }
    }
}

#[test]
fn sufficiency_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let sh = random_shape(&mut rng, 6);
        let net = random_network(&mut rng, &sh, 3, 3);
        let x = random_tensor(&mut rng, &sh, net.in_channels());
        let (dev, _) = max_equivariance_deviation(&net, &x, &TranslationVector::all(&sh)).unwrap();
        assert!(dev <= 1e-9, "deviation {dev}");
    }
}

#[test]
fn necessity_bias_and_weight_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for trial in 0..20 {
        let sh = Shape::new(&[rng.gen_range(2..=6), rng.gen_range(2..=6)]).unwrap();
        let n = sh.len();
        let layer = random_layer(&mut rng, &sh, 1, 1);
        // identity activation so a ReLU cannot hide the witness
        let l = EquivariantLayer::new(
            1,
            1,
            layer.filters().to_vec(),
            layer.biases().to_vec(),
            Activation::Identity,
        )
        .unwrap();
        let mut dense_id = DenseAffineLayer::from_layer(&l).unwrap();
        if trial % 2 == 0 {
            dense_id.perturb_bias(0, rng.gen_range(0..n), 1.0);
        } else {
            let row = rng.gen_range(0..n);
            dense_id.perturb_weight(0, 0, row, (row + rng.gen_range(0..n)) % n, 1.0);
        }
        let x = random_tensor(&mut rng, &sh, 1);
        let found = find_equivariance_violation(&dense_id, &x, 1e-6).unwrap();
        assert!(found.is_some(), "trial {trial}: no witness");
        let (m, dev) = found.unwrap();
        let report = check_equivariance(&dense_id, &x, &m, 1e-6).unwrap();
        assert_eq!(report.max_deviation, dev);
        assert!(!report.within_tolerance);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_action_and_inverse(seed in any::<u64>(), a0 in -9i64..9, a1 in -9i64..9, b0 in -9i64..9, b1 in -9i64..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sh = Shape::new(&[rng.gen_range(1..=5), rng.gen_range(1..=5)]).unwrap();
        let x = random_tensor(&mut rng, &sh, 1);
        let m = TranslationVector(vec![a0, a1]);
        let mm = TranslationVector(vec![b0, b1]);
        prop_assert_eq!(x.translate(&m).unwrap().translate(&mm).unwrap(), x.translate(&m.add(&mm)).unwrap());
        prop_assert_eq!(x.translate(&m).unwrap().translate(&m.neg()).unwrap(), x.clone());
        prop_assert_eq!(x.translate(&m).unwrap(), x.translate(&m.reduced(&sh)).unwrap());
    }

    #[test]
    fn inner_product_shift_identity(seed in any::<u64>(), m0 in -6i64..6, m1 in -6i64..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sh = Shape::new(&[rng.gen_range(1..=4), rng.gen_range(1..=4)]).unwrap();
        let ints = |rng: &mut ChaCha8Rng| {
            MultiTensor::from(CircularTensor::from_fn(sh.clone(), |_| rng.gen_range(-5..5) as f64))
        };
        let v = ints(&mut rng);
        let x = ints(&mut rng);
        let m = TranslationVector(vec![m0, m1]);
        prop_assert_eq!(
            v.inner(&x.translate(&m).unwrap()).unwrap(),
            v.translate(&m.neg()).unwrap().inner(&x).unwrap()
        );
    }

    #[test]
    fn random_network_is_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sh = random_shape(&mut rng, 5);
        let net = random_network(&mut rng, &sh, 3, 3);
        let x = random_tensor(&mut rng, &sh, net.in_channels());
        let (dev, _) = max_equivariance_deviation(&net, &x, &TranslationVector::all(&sh)).unwrap();
        prop_assert!(dev <= 1e-9);
    }
}
