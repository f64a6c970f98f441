// The reference implementations index like the formulas they transcribe.
#![allow(clippy::needless_range_loop)]

use super::*;
use crate::numerics::{finite_difference_gradcheck, l2_normalize};
use proptest::prelude::*;

fn small_config() -> EncoderConfig {
    EncoderConfig {
        input_dim: 5,
        base_hidden_dims: vec![7],
        repr_dim: 6,
        head_hidden_dim: 8,
        embed_dim: 4,
        momentum: 0.9,
    }
}

/// Straight-line re-implementation with explicit loops, independent of the
/// gemm-based batch path.
fn naive_forward(p: &EncoderParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cfg = p.config();
    let mut h = x.to_vec();
    let mut repr = Vec::new();
    for l in 0..p.layer_count() {
        let w = p.weight(l);
        let b = p.bias(l).as_slice();
        let mut z = vec![0.0; w.rows()];
        for o in 0..w.rows() {
            let mut s = b[o];
            for i in 0..w.cols() {
                s += w.get(o, i) * h[i];
            }
            z[o] = if l + 1 < p.layer_count() {
                s.max(0.0)
            } else {
                s
            };
        }
        h = z;
        if l + 1 == cfg.base_layer_count() {
            repr = h.clone();
        }
    }
    let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    (repr, h.iter().map(|v| v / n).collect())
}

fn random_input(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

#[test]
fn layer_dims_follow_config() {
    let dims = EncoderConfig::default().layer_dims();
    assert_eq!(
        dims,
        vec![(64, 256), (256, 256), (256, 128), (128, 256), (256, 64)]
    );
    let p = EncoderParams::zeros(&EncoderConfig::default()).unwrap();
    assert_eq!(p.tensors().len(), 10);
}

#[test]
fn invalid_config_rejected() {
    let mut c = small_config();
    c.momentum = 1.0;
    assert!(c.validate().is_err());
    let mut c = small_config();
    c.base_hidden_dims = vec![0];
    assert!(EncoderParams::zeros(&c).is_err());
}

#[test]
fn zero_params_give_zero_representation() {
    let p = EncoderParams::zeros(&small_config()).unwrap();
    let r = p.forward_base(&[1.0, -2.0, 3.0, 0.5, 4.0]).unwrap();
    assert_eq!(r, vec![0.0; 6]);
}

#[test]
fn identity_single_layer_is_relu() {
    let cfg = EncoderConfig {
        input_dim: 4,
        base_hidden_dims: vec![],
        repr_dim: 4,
        head_hidden_dim: 2,
        embed_dim: 2,
        momentum: 0.0,
    };
    let mut p = EncoderParams::zeros(&cfg).unwrap();
    for i in 0..4 {
        p.weight_mut(0).set(i, i, 1.0);
    }
    let r = p.forward_base(&[1.5, -2.0, 0.0, 3.0]).unwrap();
    assert_eq!(r, vec![1.5, 0.0, 0.0, 3.0]);
}

#[test]
fn forward_matches_naive_oracle() {
    let mut rng = RngStream::new(11);
    let cfg = small_config();
    let p = EncoderParams::init(&cfg, &mut rng).unwrap();
    for _ in 0..10 {
        let x = random_input(&mut rng, cfg.input_dim);
        let (repr, emb) = naive_forward(&p, &x);
        let got_repr = p.forward_base(&x).unwrap();
        let got_emb = p.embed(&x).unwrap();
        for (a, b) in repr.iter().zip(&got_repr) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in emb.iter().zip(&got_emb) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn batch_and_single_agree() {
    let mut rng = RngStream::new(3);
    let cfg = small_config();
    let p = EncoderParams::init(&cfg, &mut rng).unwrap();
    let rows: Vec<Vec<f64>> = (0..6).map(|_| random_input(&mut rng, 5)).collect();
    let batch = p
        .forward_batch(&DenseMatrix::from_rows(&rows).unwrap())
        .unwrap();
    for (i, x) in rows.iter().enumerate() {
        let e = p.embed(x).unwrap();
        for (a, b) in e.iter().zip(batch.embed.row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = p.forward_base(x).unwrap();
        for (a, b) in r.iter().zip(batch.representations().row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn head_output_is_normalized() {
    let cfg = small_config();
    let mut p = EncoderParams::zeros(&cfg).unwrap();
    // last layer: zero weights, bias [3, 4, 0, 0]
    let last = p.layer_count() - 1;
    p.bias_mut(last)
        .as_mut_slice()
        .copy_from_slice(&[3.0, 4.0, 0.0, 0.0]);
    let e = p.forward_head(&[0.1; 6]).unwrap();
    assert!((e[0] - 0.6).abs() < 1e-15 && (e[1] - 0.8).abs() < 1e-15);

    let mut rng = RngStream::new(5);
    let p = EncoderParams::init(&cfg, &mut rng).unwrap();
    for _ in 0..20 {
        let e = p.embed(&random_input(&mut rng, 5)).unwrap();
        let n: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn zero_head_output_is_an_error() {
    let p = EncoderParams::zeros(&small_config()).unwrap();
    assert!(matches!(p.embed(&[1.0; 5]), Err(Error::ZeroVector { .. })));
}

#[test]
fn shape_mismatch_on_input() {
    let p = EncoderParams::zeros(&small_config()).unwrap();
    assert!(matches!(
        p.forward_base(&[1.0; 4]),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(p.forward_head(&[1.0; 5]).is_err());
    let mut rng = RngStream::new(1);
    let p = EncoderParams::init(&small_config(), &mut rng).unwrap();
    assert!(p.backward(&[1.0; 5], &[1.0; 3]).is_err());
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = RngStream::new(2);
    let p = EncoderParams::init(&small_config(), &mut rng).unwrap();
    let g = p.backward(&random_input(&mut rng, 5), &[0.0; 4]).unwrap();
    assert!(g.is_zero());
}

#[test]
fn last_layer_gradient_closed_form() {
    // dL/dW_last = [(I − uuᵀ) g / ‖h‖] ⊗ a, where a is the last layer's input.
    let mut rng = RngStream::new(8);
    let cfg = small_config();
    let p = EncoderParams::init(&cfg, &mut rng).unwrap();
    let x = random_input(&mut rng, 5);
    let g = random_input(&mut rng, 4);
    let last = p.layer_count() - 1;
    // recompute the last layer's input and head output by hand
    let mut a = x.clone();
    for l in 0..last {
        let w = p.weight(l);
        a = (0..w.rows())
            .map(|o| {
                (p.bias(l).as_slice()[o] + (0..w.cols()).map(|i| w.get(o, i) * a[i]).sum::<f64>())
                    .max(0.0)
            })
            .collect();
    }
    let w = p.weight(last);
    let h: Vec<f64> = (0..w.rows())
        .map(|o| {
            p.bias(last).as_slice()[o] + (0..w.cols()).map(|i| w.get(o, i) * a[i]).sum::<f64>()
        })
        .collect();
    let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = h.iter().map(|v| v / hn).collect();
    let ug: f64 = u.iter().zip(&g).map(|(x, y)| x * y).sum();
    let jg: Vec<f64> = g
        .iter()
        .zip(&u)
        .map(|(gi, ui)| (gi - ui * ug) / hn)
        .collect();

    let grads = p.backward(&x, &g).unwrap();
    let dw = &grads.tensors[2 * last];
    for o in 0..w.rows() {
        for i in 0..w.cols() {
            assert!((dw.get(o, i) - jg[o] * a[i]).abs() < 1e-12);
        }
    }
    for o in 0..w.rows() {
        assert!((grads.tensors[2 * last + 1].as_slice()[o] - jg[o]).abs() < 1e-12);
    }
}

#[test]
fn normalization_jacobian_is_orthogonal_to_embedding() {
    let mut rng = RngStream::new(21);
    for _ in 0..50 {
        let h = random_input(&mut rng, 6);
        let g = random_input(&mut rng, 6);
        let u = l2_normalize(&h).unwrap();
        let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ug: f64 = u.iter().zip(&g).map(|(a, b)| a * b).sum();
        let jg: Vec<f64> = g
            .iter()
            .zip(&u)
            .map(|(gi, ui)| (gi - ui * ug) / hn)
            .collect();
        let proj: f64 = u.iter().zip(&jg).map(|(a, b)| a * b).sum();
        assert!(proj.abs() < 1e-10);
    }
}

/// Gradient check of `w · embed(x; θ)` over all parameters.
pub(crate) fn encoder_gradcheck(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let cfg = EncoderConfig {
        input_dim: 2 + rng.below(4),
        base_hidden_dims: (0..rng.below(3)).map(|_| 2 + rng.below(5)).collect(),
        repr_dim: 2 + rng.below(5),
        head_hidden_dim: 2 + rng.below(5),
        embed_dim: 2 + rng.below(4),
        momentum: 0.5,
    };
    let mut p = EncoderParams::init(&cfg, &mut rng).unwrap();
    // non-zero biases so the check covers them
    for l in 0..p.layer_count() {
        for b in p.bias_mut(l).as_mut_slice() {
            *b = 0.1 * rng.standard_normal();
        }
    }
    let x = random_input(&mut rng, cfg.input_dim);
    let w = random_input(&mut rng, cfg.embed_dim);
    let analytic = p.backward(&x, &w).unwrap().flatten();
    let theta = p.flatten();
    let probe = p.clone();
    let f = |t: &[f64]| {
        let mut q = probe.clone();
        q.set_flat(t).unwrap();
        let e = q.embed(&x).unwrap();
        e.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
    };
    finite_difference_gradcheck(f, &analytic, &theta, 1e-6).unwrap()
}

#[test]
fn full_gradient_check_random_configs() {
    for seed in 0..20 {
        let err = encoder_gradcheck(seed);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn ema_examples() {
    let cfg = small_config();
    let mut rng = RngStream::new(4);
    let mut pair = EncoderPair::init(&cfg, &mut rng).unwrap();
    assert_eq!(pair.key, pair.query);

    // equal encoders are a fixed point for any m
    for m in [0.0, 0.3, 0.999] {
        let before = pair.key.clone();
        pair.ema_update(m);
        assert_eq!(pair.key, before);
    }

    pair.query = EncoderParams::init(&cfg, &mut rng).unwrap();
    pair.ema_update(0.0);
    assert_eq!(pair.key, pair.query);

    let mut k = EncoderParams::zeros(&cfg).unwrap();
    let mut q = EncoderParams::zeros(&cfg).unwrap();
    q.tensors_mut().iter_mut().for_each(|t| t.fill(1.0));
    std::mem::swap(&mut k, &mut q);
    let mut pair = EncoderPair { query: k, key: q };
    pair.ema_update(0.999);
    for t in pair.key.tensors() {
        for &v in t.as_slice() {
            assert!((v - 0.001).abs() < 1e-15);
        }
    }
}

fn distance(a: &EncoderParams, b: &EncoderParams) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #[test]
    fn ema_contracts_distance(seed in 0u64..1000, m in 0.0f64..0.9999) {
        let cfg = small_config();
        let mut rng = RngStream::new(seed);
        let query = EncoderParams::init(&cfg, &mut rng).unwrap();
        let key = EncoderParams::init(&cfg, &mut rng).unwrap();
        let mut pair = EncoderPair { query, key };
        let before = distance(&pair.key, &pair.query);
        pair.ema_update(m);
        let after = distance(&pair.key, &pair.query);
        prop_assert!(after <= m * before * (1.0 + 1e-12) + 1e-15);
    }
}
