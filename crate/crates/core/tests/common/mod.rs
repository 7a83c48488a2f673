#![allow(dead_code)]

use eqr_core::constructive::{check_aperiodic, ShiftScope};
use eqr_core::io::{DatasetManifest, ManifestEntry, RangeTag};
use eqr_core::net::{
    Activation, CircularFilter, ConstantBias, EquivariantLayer, EquivariantNetwork,
};
use eqr_core::tensor::{CircularTensor, FlatIndex, MultiTensor, Shape, TranslationVector};
use eqr_core::training::grad;
use rand::Rng;
use twofloat::TwoFloat;

pub fn random_shape(rng: &mut impl Rng, max_side: usize) -> Shape {
    let arity = rng.gen_range(1..=2);
    let dims: Vec<usize> = (0..arity).map(|_| rng.gen_range(1..=max_side)).collect();
    Shape::new(&dims).unwrap()
}

pub fn random_tensor(rng: &mut impl Rng, shape: &Shape, channels: usize) -> MultiTensor {
    let data = (0..channels * shape.len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    MultiTensor::new(shape.clone(), channels, data).unwrap()
}

pub fn random_filter(rng: &mut impl Rng, shape: &Shape) -> CircularFilter {
    let n = shape.len();
    if rng.gen_bool(0.5) {
        CircularFilter::dense(CircularTensor::from_fn(shape.clone(), |_| {
            rng.gen_range(-1.0..1.0)
        }))
    } else {
        let k = rng.gen_range(0..=n.min(5));
        let taps = (0..k)
            .map(|_| (FlatIndex(rng.gen_range(0..n)), rng.gen_range(-1.0..1.0)))
            .collect();
        CircularFilter::sparse(shape.clone(), taps).unwrap()
    }
}

pub fn random_layer(
    rng: &mut impl Rng,
    shape: &Shape,
    cin: usize,
    cout: usize,
) -> EquivariantLayer {
    let filters = (0..cin * cout).map(|_| random_filter(rng, shape)).collect();
    let biases = (0..cout)
        .map(|_| ConstantBias(rng.gen_range(-0.5..0.5)))
        .collect();
    let act = if rng.gen_bool(0.5) {
        Activation::Relu
    } else {
        Activation::Identity
    };
    EquivariantLayer::new(cin, cout, filters, biases, act).unwrap()
}

/// Random net with `1..=max_depth` layers and `1..=max_channels` channels.
pub fn random_network(
    rng: &mut impl Rng,
    shape: &Shape,
    max_depth: usize,
    max_channels: usize,
) -> EquivariantNetwork {
    let depth = rng.gen_range(1..=max_depth);
    let cin = rng.gen_range(1..=max_channels);
    let mut c = cin;
    let layers = (0..depth)
        .map(|_| {
            let cout = rng.gen_range(1..=max_channels);
            let l = random_layer(rng, shape, c, cout);
            c = cout;
            l
        })
        .collect();
    EquivariantNetwork::new(shape.clone(), cin, layers).unwrap()
}

pub fn random_binary(
    rng: &mut impl Rng,
    shape: &Shape,
    channels: usize,
    density: f64,
) -> MultiTensor {
    let data = (0..channels * shape.len())
        .map(|_| if rng.gen_bool(density) { 1.0 } else { 0.0 })
        .collect();
    MultiTensor::new(shape.clone(), channels, data).unwrap()
}

/// Draws binary elements until `count` of them form a spatially and
/// channel-wise aperiodic set.
pub fn random_aperiodic_binary(
    rng: &mut impl Rng,
    shape: &Shape,
    channels: usize,
    count: usize,
) -> Vec<MultiTensor> {
    let mut out: Vec<MultiTensor> = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 10_000, "could not draw an aperiodic set");
        let density = rng.gen_range(0.2..0.8);
        let cand = random_binary(rng, shape, channels, density);
        let mut trial = out.clone();
        trial.push(cand);
        if check_aperiodic(&trial, ShiftScope::SpatialAndChannel)
            .unwrap()
            .is_aperiodic()
        {
            out = trial;
        }
    }
    out
}

/// Mixed-radix flat index, computed independently of the library.
pub fn flat(dims: &[usize], idx: &[i64]) -> usize {
    idx.iter()
        .zip(dims)
        .fold(0, |acc, (&i, &n)| acc * n + i.rem_euclid(n as i64) as usize)
}

/// `T^M(x)[I] = x[I - M]` by direct index arithmetic.
pub fn translate_oracle(x: &MultiTensor, m: &[i64]) -> MultiTensor {
    let dims = x.shape().dims().to_vec();
    let n = x.spatial_len();
    let mut out = vec![0.0; x.as_slice().len()];
    for r in 0..x.channels() {
        for k in 0..n {
            let mut rem = k;
            let mut idx = vec![0i64; dims.len()];
            for (slot, &d) in idx.iter_mut().zip(&dims).rev() {
                *slot = (rem % d) as i64;
                rem /= d;
            }
            let src: Vec<i64> = idx.iter().zip(m).map(|(i, mm)| i - mm).collect();
            out[r * n + k] = x.channel(r)[flat(&dims, &src)];
        }
    }
    MultiTensor::new(x.shape().clone(), x.channels(), out).unwrap()
}

/// Random single-output net with biases, for gradient checks.
pub fn random_estimator(rng: &mut impl Rng, shape: &Shape, max_depth: usize) -> EquivariantNetwork {
    let depth = rng.gen_range(1..=max_depth);
    let cin = rng.gen_range(1..=2);
    let mut c = cin;
    let layers = (0..depth)
        .map(|l| {
            let cout = if l + 1 == depth {
                1
            } else {
                rng.gen_range(1..=2)
            };
            let layer = random_layer(rng, shape, c, cout);
            c = cout;
            layer
        })
        .collect();
    EquivariantNetwork::new(shape.clone(), cin, layers).unwrap()
}

/// Network outputs in double-double arithmetic, straight from the index
/// arithmetic `out_k[M] = act(b_k + sum_r sum_J w_kr[J] h_r[M + J])`, plus
/// the on/off pattern of every ReLU unit.
fn forward_dd(net: &EquivariantNetwork, x: &MultiTensor) -> (Vec<TwoFloat>, Vec<bool>) {
    let dims = net.shape().dims();
    let n = net.shape().len();
    let unflat = |mut k: usize| {
        let mut idx = vec![0i64; dims.len()];
        for (slot, &d) in idx.iter_mut().zip(dims).rev() {
            *slot = (k % d) as i64;
            k /= d;
        }
        idx
    };
    let sum_index: Vec<usize> = (0..n * n)
        .map(|mj| {
            let (m, j) = (unflat(mj / n), unflat(mj % n));
            let s: Vec<i64> = m.iter().zip(&j).map(|(a, b)| a + b).collect();
            flat(dims, &s)
        })
        .collect();
    let mut h: Vec<Vec<TwoFloat>> = (0..x.channels())
        .map(|r| x.channel(r).iter().map(|&v| TwoFloat::from(v)).collect())
        .collect();
    let mut pattern = Vec::new();
    for layer in net.layers() {
        let mut next = Vec::with_capacity(layer.out_channels());
        for k in 0..layer.out_channels() {
            let mut out = vec![TwoFloat::from(layer.bias(k).0); n];
            for (r, hr) in h.iter().enumerate() {
                for (j, w) in layer.filter(k, r).taps() {
                    let w = TwoFloat::from(w);
                    for (m, o) in out.iter_mut().enumerate() {
                        *o += w * hr[sum_index[m * n + j]];
                    }
                }
            }
            if layer.activation() == Activation::Relu {
                for o in out.iter_mut() {
                    pattern.push(*o > 0.0);
                    if !(*o > 0.0) {
                        *o = TwoFloat::from(0.0);
                    }
                }
            }
            next.push(out);
        }
        h = next;
    }
    (h.concat(), pattern)
}

fn to_f64(v: TwoFloat) -> f64 {
    v.hi() + v.lo()
}

/// `loss(z_plus) - loss(z_minus)` for softmax cross-entropy toward index 0,
/// without cancelling two nearly equal losses:
/// `z0- - z0+ + ln(sum_j softmax(z-)_j exp(z+_j - z-_j))`.
fn loss_difference(plus: &[TwoFloat], minus: &[TwoFloat]) -> f64 {
    let zm: Vec<f64> = minus.iter().map(|&v| to_f64(v)).collect();
    let d: Vec<f64> = plus
        .iter()
        .zip(minus)
        .map(|(&p, &m)| to_f64(p - m))
        .collect();
    let top = zm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = zm.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = e.iter().sum();
    let ratio_m1: f64 = e
        .iter()
        .zip(&d)
        .map(|(ei, di)| ei / total * di.exp_m1())
        .sum();
    -d[0] + ratio_m1.ln_1p()
}

pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst_rel: f64,
}

/// Central differences `(L(w + h) - L(w - h)) / 2h` with `h = 1e-5 max(1, |w|)`
/// over every filter tap and bias; relative error is
/// `|a - n| / max(|a|, |n|, 1e-6)`.
///
/// The two losses are evaluated by an independent double-double forward
/// pass and subtracted without cancellation, so the quotient is accurate
/// even where the gradient is tiny next to the loss. Steps that flip a
/// ReLU unit are skipped.
pub fn fd_check(net: &EquivariantNetwork, x: &MultiTensor) -> FdReport {
    let (_, g) = grad(net, x).unwrap();
    let analytic = g.flatten();
    let (_, base_pattern) = forward_dd(net, x);
    let mut report = FdReport {
        checked: 0,
        skipped_kinks: 0,
        worst_rel: 0.0,
    };
    let mut idx = 0;
    for (li, layer) in net.layers().iter().enumerate() {
        let cin = layer.in_channels();
        let params: Vec<(Option<(usize, usize)>, usize)> = (0..layer.filters().len())
            .flat_map(|fi| (0..layer.filters()[fi].support_len()).map(move |t| (Some((fi, t)), 0)))
            .chain((0..layer.out_channels()).map(|k| (None, k)))
            .collect();
        for (which, k) in params {
            let read = |n: &EquivariantNetwork| match which {
                Some((fi, t)) => n.layers()[li].filter(fi / cin, fi % cin).weights()[t],
                None => n.layers()[li].bias(k).0,
            };
            let write = |n: &mut EquivariantNetwork, v: f64| match which {
                Some((fi, t)) => {
                    n.layers_mut()[li]
                        .filter_mut(fi / cin, fi % cin)
                        .weights_mut()[t] = v
                }
                None => n.layers_mut()[li].biases_mut()[k].0 = v,
            };
            let w = read(net);
            let h = 1e-5 * w.abs().max(1.0);
            let mut plus = net.clone();
            write(&mut plus, w + h);
            let mut minus = net.clone();
            write(&mut minus, w - h);
            let a = analytic[idx];
            idx += 1;
            let (zp, pp) = forward_dd(&plus, x);
            let (zm, pm) = forward_dd(&minus, x);
            if pp != base_pattern || pm != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            // the step actually taken, after rounding w +- h
            let step = read(&plus) - read(&minus);
            let numeric = loss_difference(&zp, &zm) / step;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            report.worst_rel = report.worst_rel.max(rel);
            report.checked += 1;
        }
    }
    assert_eq!(idx, analytic.len());
    report
}

/// Sum of Gaussian blobs `(row, col, sigma, amplitude)` on an `h x w` grid.
pub fn blob_image(h: usize, w: usize, blobs: &[(f64, f64, f64, f64)]) -> CircularTensor {
    let shape = Shape::new(&[h, w]).unwrap();
    CircularTensor::from_fn(shape, |k| {
        let (r, c) = ((k / w) as f64, (k % w) as f64);
        blobs
            .iter()
            .map(|&(br, bc, s, a)| {
                a * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * s * s)).exp()
            })
            .sum()
    })
}

/// Smooth, rotationally asymmetric test image: three blobs of different
/// size and strength at different angles and radii.
pub fn asymmetric_image(side: usize) -> CircularTensor {
    let s = side as f64;
    let c = (s - 1.0) / 2.0;
    blob_image(
        side,
        side,
        &[
            (c - 0.30 * s, c + 0.05 * s, 0.06 * s, 1.0),
            (c + 0.10 * s, c + 0.25 * s, 0.09 * s, 0.6),
            (c + 0.22 * s, c - 0.18 * s, 0.04 * s, 0.8),
        ],
    )
}

/// Binary L: a vertical bar down from the center and a foot to the right.
pub fn l_mark(side: usize) -> CircularTensor {
    let shape = Shape::new(&[side, side]).unwrap();
    let (a, b) = (side / 4, 3 * side / 4);
    let t = (side / 16).max(1);
    CircularTensor::from_fn(shape, |k| {
        let (r, c) = (k / side, k % side);
        let stem = (a..b).contains(&r) && (side / 2 - t..side / 2 + t).contains(&c);
        let foot = (b - 2 * t..b).contains(&r) && (side / 2..b).contains(&c);
        if stem || foot {
            1.0
        } else {
            0.0
        }
    })
}

/// Digital disk about the grid center; symmetric under quarter turns.
pub fn disk(side: usize, radius: f64) -> CircularTensor {
    let shape = Shape::new(&[side, side]).unwrap();
    let c = (side as f64 - 1.0) / 2.0;
    CircularTensor::from_fn(shape, |k| {
        let (r, col) = ((k / side) as f64, (k % side) as f64);
        if (r - c).powi(2) + (col - c).powi(2) <= radius * radius {
            1.0
        } else {
            0.0
        }
    })
}

pub fn random_manifest(rng: &mut impl Rng) -> DatasetManifest {
    let arity = rng.gen_range(1..=3);
    let dims: Vec<usize> = (0..arity).map(|_| rng.gen_range(1..=9)).collect();
    let range = match rng.gen_range(0..3) {
        0 => RangeTag::U8,
        1 => RangeTag::Binary,
        _ => RangeTag::Bits(rng.gen_range(0..=52)),
    };
    let word = |rng: &mut dyn rand::RngCore, len: usize| -> String {
        (0..len)
            .map(|_| (b'a' + rng.gen_range(0..26)) as char)
            .collect()
    };
    let entries = (0..rng.gen_range(0..6))
        .map(|_| ManifestEntry {
            path: format!("{}/{}.pgm", word(rng, 3), word(rng, 5)),
            label: if rng.gen_bool(0.2) {
                String::new()
            } else {
                format!("{} {}", word(rng, 2), word(rng, 4))
            },
        })
        .collect();
    DatasetManifest {
        version: 1,
        shape: Shape::new(&dims).unwrap(),
        channels: rng.gen_range(1..=4),
        range,
        certificate: rng
            .gen_bool(0.5)
            .then(|| format!("{:016x}", rng.gen::<u64>())),
        entries,
    }
}

fn dot(a: &MultiTensor, b: &MultiTensor) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum()
}

/// Brute-force check, over every ordered pair and spatial shift, of the
/// inner-product facts the estimator head relies on for binary aperiodic
/// data: `<Z, Z> = |Z|^2 <= GN`, shifted inner products at most `|Z_s|^2`,
/// a nontrivial self-shift or an equal-norm other element overlaps in at
/// most `|Z|^2 - 1` places, and distinct norms are separated:
/// `|Z_s| >= sqrt(|Z_t|^2 + 1) >= |Z_t| + 1/(2GN)`.
pub fn check_binary_inner_products(data: &[MultiTensor]) -> Result<(), String> {
    let sh = data[0].shape().clone();
    let gn = (data[0].channels() * sh.len()) as f64;
    for (s, zs) in data.iter().enumerate() {
        let ns = zs.norm_sq();
        if dot(zs, zs) != ns {
            return Err(format!("<Z, Z> != |Z|^2 for element {s}"));
        }
        if ns > gn {
            return Err(format!("|Z|^2 > GN for element {s}"));
        }
        for (t, zt) in data.iter().enumerate() {
            let nt = zt.norm_sq();
            for m in TranslationVector::all(&sh) {
                let ip = dot(&zs.translate(&m).unwrap(), zt);
                let trivial = m.0.iter().all(|&v| v == 0);
                if !(ip <= ns && ns <= gn * gn) {
                    return Err(format!(
                        "<T Z_s, Z_t> exceeds |Z_s|^2 or |Z_s|^2 > (GN)^2 for ({s}, {t}) at {:?}",
                        m.0
                    ));
                }
                if s == t && !trivial && ip > ns - 1.0 {
                    return Err(format!(
                        "element {s} overlaps its own shift {:?} in more than |Z|^2 - 1 places",
                        m.0
                    ));
                }
                if s != t && ns == nt && ip > nt - 1.0 {
                    return Err(format!("equal-norm elements ({s}, {t}) overlap in more than |Z|^2 - 1 places at {:?}", m.0));
                }
            }
            if ns > nt
                && !(ns.sqrt() >= (nt + 1.0).sqrt()
                    && (nt + 1.0).sqrt() >= nt.sqrt() + 1.0 / (2.0 * gn))
            {
                return Err(format!("norm gap between ({s}, {t}) is below 1/(2GN)"));
            }
        }
    }
    Ok(())
}
