mod common;

use common::*;
use eqr_core::constructive::{
    alpha_for, build_binary_network, build_estimator_head, build_restorer, check_aperiodic,
    BinaryDecompositionSpec, ShiftScope,
};
use eqr_core::error::Error;
use eqr_core::restore::{argmax, margin, restore};
use eqr_core::tensor::{CircularTensor, MultiTensor, Shape, TranslationVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits_oracle(x: &MultiTensor, q: u32) -> Vec<f64> {
    let n = x.spatial_len();
    let planes = q as usize + 1;
    let mut out = vec![0.0; x.channels() * planes * n];
    for p in 0..x.channels() {
        for (i, &v) in x.channel(p).iter().enumerate() {
            let v = v as u32;
            for j in 0..planes {
                out[(p * planes + j) * n + i] = f64::from((v >> j) & 1);
            }
        }
    }
    out
}

/// Big enough to hold several aperiodic binary elements.
fn roomy_shape(rng: &mut impl Rng) -> Shape {
    Shape::new(&[rng.gen_range(2..=4), rng.gen_range(3..=4)]).unwrap()
}

#[test]
fn decomposition_small_examples() {
    let sh = Shape::new(&[1]).unwrap();
    let spec = BinaryDecompositionSpec::new(2, 1).unwrap();
    let net = build_binary_network(spec, &sh).unwrap();
    let x = MultiTensor::new(sh.clone(), 1, vec![5.0]).unwrap();
    assert_eq!(net.forward(&x).unwrap().as_slice(), &[1.0, 0.0, 1.0]);

    let spec = BinaryDecompositionSpec::new(0, 1).unwrap();
    let sh = Shape::new(&[2, 3]).unwrap();
    let net = build_binary_network(spec, &sh).unwrap();
    let x = MultiTensor::new(sh, 1, vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    assert_eq!(net.forward(&x).unwrap(), x);
}

#[test]
fn decomposition_random_inputs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for q in 0..=7u32 {
        let p = rng.gen_range(1..=3);
        let sh = random_shape(&mut rng, 4);
        let spec = BinaryDecompositionSpec::new(q, p).unwrap();
        let net = build_binary_network(spec, &sh).unwrap();
        assert_eq!(net.depth(), 2 * q as usize + 2);
        assert!(net.width() <= (q as usize + 1) * p * sh.len());
        for layer in net.layers() {
            assert!(layer.filters().iter().all(|f| f.support_len() <= 1));
        }
        for _ in 0..10 {
            let bound = 1u32 << (q + 1);
            let data = (0..p * sh.len())
                .map(|_| rng.gen_range(0..bound) as f64)
                .collect();
            let x = MultiTensor::new(sh.clone(), p, data).unwrap();
            assert_eq!(
                net.forward(&x).unwrap().as_slice(),
                bits_oracle(&x, q).as_slice()
            );
        }
    }
}

#[test]
fn binary_inner_product_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..40 {
        let sh = roomy_shape(&mut rng);
        let g = rng.gen_range(1..=2);
        let pair = random_aperiodic_binary(&mut rng, &sh, g, 2);
        check_binary_inner_products(&pair).unwrap();
    }
}

#[test]
fn head_first_layer_casework() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let sh = roomy_shape(&mut rng);
        let g = rng.gen_range(1..=2);
        let s_count = rng.gen_range(1..=5);
        let data = random_aperiodic_binary(&mut rng, &sh, g, s_count);
        let head = build_estimator_head(&data).unwrap();
        let gn = (g * sh.len()) as f64;
        let layer1 = &head.network.layers()[0];
        for (t_rank, &t_idx) in head.order.iter().enumerate() {
            let pre = layer1.pre_activation(&data[t_idx]).unwrap();
            for s_rank in 0..s_count {
                let scale = head.alpha.powi(s_rank as i32);
                let unscaled: Vec<f64> = pre
                    .channel(s_rank)
                    .iter()
                    .map(|v| (v / scale).max(0.0))
                    .collect();
                if t_rank < s_rank {
                    assert!(
                        unscaled.iter().all(|&v| v == 0.0),
                        "unit {s_rank} fires on lower-ranked element {t_rank}: {unscaled:?}"
                    );
                } else if t_rank == s_rank {
                    for &v in &unscaled[1..] {
                        assert!(
                            unscaled[0] - v >= 1.0 / (2.0 * gn + 1.0) - 1e-12,
                            "diagonal margin below 1/(2GN+1)"
                        );
                    }
                } else {
                    assert!(unscaled.iter().all(|&v| v < gn), "later unit reaches GN");
                }
            }
        }
    }
}

#[test]
fn head_examples() {
    // one-hot, S = 1: index 0 gets relu(1 + 0), every other index relu(0)
    let sh = Shape::new(&[3, 3]).unwrap();
    let z: MultiTensor = CircularTensor::one_hot(sh.clone(), &[1, 2]).unwrap().into();
    let head = build_estimator_head(&[z.clone()]).unwrap();
    let out = head.network.forward(&z).unwrap().into_vec();
    assert_eq!(out[0], 1.0);
    assert!(out[1..].iter().all(|&v| v == 0.0));
    assert!(margin(&out) > 1.0 / (2.0 * 9.0 + 1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let sh = Shape::new(&[3, 4]).unwrap();
    let data = random_aperiodic_binary(&mut rng, &sh, 2, 5);
    let head = build_estimator_head(&data).unwrap();
    assert_eq!(head.alpha, alpha_for(2, 12));
    for z in &data {
        assert!(margin(&head.network.forward(z).unwrap().into_vec()) > 0.0);
        for (k, m) in TranslationVector::all(&sh).into_iter().enumerate() {
            let out = head
                .network
                .forward(&z.translate(&m).unwrap())
                .unwrap()
                .into_vec();
            assert_eq!(argmax(&out), k);
        }
    }
}

#[test]
fn one_hot_images_restore_exactly() {
    let sh = Shape::new(&[4, 4]).unwrap();
    let data: Vec<MultiTensor> = [[0, 0], [0, 1], [2, 3]]
        .iter()
        .map(|i| CircularTensor::one_hot(sh.clone(), i).unwrap().into())
        .collect();
    // one-hot images are translates of each other, so this set is periodic
    assert!(matches!(
        build_restorer(&data, 0),
        Err(Error::Precondition(_))
    ));

    let data: Vec<MultiTensor> = [vec![0usize], vec![0, 1], vec![0, 5, 6]]
        .iter()
        .map(|on| {
            let mut v = vec![0.0; 16];
            for &k in on {
                v[k] = 1.0;
            }
            MultiTensor::new(sh.clone(), 1, v).unwrap()
        })
        .collect();
    let est = build_restorer(&data, 0).unwrap();
    est.check_bounds(data.len()).unwrap();
    for x in &data {
        for (k, m) in TranslationVector::all(&sh).into_iter().enumerate() {
            let r = restore(&est.network, &x.translate(&m).unwrap()).unwrap();
            assert_eq!(r.restored, *x);
            assert!(!r.degenerate);
            assert_eq!(argmax(&r.raw_output), k);
        }
    }
}

#[test]
fn u8_restorer() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let sh = Shape::new(&[8, 8]).unwrap();
    let data: Vec<MultiTensor> = (0..4)
        .map(|_| {
            MultiTensor::new(
                sh.clone(),
                1,
                (0..64).map(|_| rng.gen_range(0..256) as f64).collect(),
            )
            .unwrap()
        })
        .collect();
    let est = build_restorer(&data, 7).unwrap();
    assert!(est.alpha().powi(3).is_finite());
    assert!(est.depth() <= 2 * 7 + 4);
    est.check_bounds(4).unwrap();
    for x in &data {
        let out = est.network.forward(x).unwrap().into_vec();
        assert!(margin(&out) > 0.0);
    }
}

#[test]
fn restorer_rejects_bad_input() {
    let sh = Shape::new(&[2, 2]).unwrap();
    let x = MultiTensor::new(sh.clone(), 1, vec![0.0, 1.0, 4.0, 0.0]).unwrap();
    assert!(matches!(build_restorer(&[x], 1), Err(Error::Input(_))));
    let zero = MultiTensor::zeros(sh.clone(), 1);
    assert!(matches!(
        build_restorer(&[zero], 1),
        Err(Error::Precondition(_))
    ));
    assert!(build_restorer(&[], 1).is_err());
    // periodic element: a 2-cycle stripe
    let stripe = MultiTensor::new(sh, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let cert = check_aperiodic(&[stripe], ShiftScope::Spatial).unwrap();
    assert!(!cert.is_aperiodic());
}
