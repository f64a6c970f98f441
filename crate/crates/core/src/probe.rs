//! Linear probe: multinomial logistic regression on frozen base representations.

use std::collections::BTreeMap;

use crate::data::Instance;
use crate::encoder::EncoderParams;
use crate::numerics::{DenseMatrix, RngStream, Transpose};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Within each class, every `holdout_every`-th instance is evaluated
    /// instead of trained on.
    pub holdout_every: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.1,
            batch_size: 64,
            holdout_every: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub top1: f64,
    pub top5: f64,
    pub per_class_accuracy: BTreeMap<i64, f64>,
    /// Mean training cross-entropy after each epoch.
    pub train_loss_curve: Vec<f64>,
}

/// Fitted classifier. Inputs are standardized with the training mean and
/// standard deviation; constant features are only centered.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `n_classes × dim`
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LinearProbe {
    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn standardize(&self, x: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(x.rows(), x.cols(), |r, c| {
            (x.get(r, c) - self.mean[c]) * self.scale[c]
        })
    }

    /// Class scores (logits), one row per input row.
    pub fn scores(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape(
                format!("* x {}", self.mean.len()),
                format!("{:?}", x.shape()),
            ));
        }
        let z = self.standardize(x);
        let mut s = DenseMatrix::from_fn(x.rows(), self.n_classes(), |_, c| self.bias[c]);
        s.gemm(1.0, &z, Transpose::No, &self.weights, Transpose::Yes, 1.0)?;
        Ok(s)
    }
}

fn softmax_rows(s: &mut DenseMatrix) {
    for r in 0..s.rows() {
        let row = s.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
}

fn mean_cross_entropy(probe: &LinearProbe, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    let mut p = probe.scores(x)?;
    softmax_rows(&mut p);
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -p.get(i, y).max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mini-batch SGD on softmax cross-entropy, no weight decay. Labels must lie
/// in `0..n_classes`; at least two distinct labels are required.
pub fn fit_linear_probe(
    x: &DenseMatrix,
    labels: &[i64],
    n_classes: usize,
    cfg: &ProbeConfig,
    rng: &mut RngStream,
) -> Result<(LinearProbe, Vec<f64>)> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyInput("probe training set"));
    }
    if labels.len() != n {
        return Err(Error::shape(n.to_string(), labels.len().to_string()));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|&l| {
            usize::try_from(l)
                .ok()
                .filter(|&c| c < n_classes)
                .ok_or(Error::UnknownLabel(l))
        })
        .collect::<Result<_>>()?;
    let mut distinct = y.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateLabels(distinct.len()));
    }
    if cfg.batch_size == 0 || !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(Error::Config(
            "probe needs batch_size >= 1 and a finite lr >= 0".into(),
        ));
    }

    let d = x.cols();
    let sums = x.column_sums();
    let mean: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|c| {
            let var = x.iter_rows().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut probe = LinearProbe {
        mean,
        scale,
        weights: DenseMatrix::zeros(n_classes, d),
        bias: vec![0.0; n_classes],
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        // Fisher–Yates
        for i in (1..n).rev() {
            order.swap(i, rng.below(i + 1));
        }
        for chunk in order.chunks(cfg.batch_size) {
            let xb = DenseMatrix::from_fn(chunk.len(), d, |r, c| x.get(chunk[r], c));
            let mut g = probe.scores(&xb)?;
            softmax_rows(&mut g);
            for (r, &i) in chunk.iter().enumerate() {
                let v = g.get(r, y[i]);
                g.set(r, y[i], v - 1.0);
            }
            let zb = probe.standardize(&xb);
            let step = cfg.lr / chunk.len() as f64;
            probe
                .weights
                .gemm(-step, &g, Transpose::Yes, &zb, Transpose::No, 1.0)?;
            for (b, s) in probe.bias.iter_mut().zip(g.column_sums()) {
                *b -= step * s;
            }
        }
        curve.push(mean_cross_entropy(&probe, x, &y)?);
    }
    Ok((probe, curve))
}

/// Fraction of rows whose true label is among the `k` highest scores. Equal
/// scores are ordered by lower class index first.
pub fn top_k_accuracy(scores: &DenseMatrix, labels: &[i64], k: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| in_top_k(scores.row(i), y as usize, k))
        .count();
    hits as f64 / labels.len() as f64
}

fn in_top_k(row: &[f64], y: usize, k: usize) -> bool {
    let sy = row[y];
    let ahead = row
        .iter()
        .enumerate()
        .filter(|&(c, &s)| s > sy || (s == sy && c < y))
        .count();
    ahead < k
}

/// Score a fitted probe on held-out data.
pub fn evaluate_probe(
    probe: &LinearProbe,
    x: &DenseMatrix,
    labels: &[i64],
    train_loss_curve: Vec<f64>,
) -> Result<ProbeResult> {
    let scores = probe.scores(x)?;
    let k5 = probe.n_classes().min(5);
    let mut per_class: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        let e = per_class.entry(y).or_default();
        e.1 += 1;
        if in_top_k(scores.row(i), y as usize, 1) {
            e.0 += 1;
        }
    }
    Ok(ProbeResult {
        top1: top_k_accuracy(&scores, labels, 1),
        top5: top_k_accuracy(&scores, labels, k5),
        per_class_accuracy: per_class
            .into_iter()
            .map(|(c, (h, t))| (c, h as f64 / t as f64))
            .collect(),
        train_loss_curve,
    })
}

/// Base representations of `instances` (no augmentation), one row each.
pub fn representations(encoder: &EncoderParams, instances: &[&Instance]) -> Result<DenseMatrix> {
    if instances.is_empty() {
        return Err(Error::EmptyInput("instances"));
    }
    let x = DenseMatrix::from_rows(
        &instances
            .iter()
            .map(|i| &i.features[..])
            .collect::<Vec<_>>(),
    )?;
    encoder.forward_base_batch(&x)
}

/// Fit on `train`, evaluate on `test`, using the frozen base network.
pub fn probe_encoder(
    encoder: &EncoderParams,
    train: &[&Instance],
    test: &[&Instance],
    n_classes: usize,
    cfg: &ProbeConfig,
    rng: &mut RngStream,
) -> Result<ProbeResult> {
    let xtr = representations(encoder, train)?;
    let ytr: Vec<i64> = train.iter().map(|i| i.class_label).collect();
    let (probe, curve) = fit_linear_probe(&xtr, &ytr, n_classes, cfg, rng)?;
    let xte = representations(encoder, test)?;
    let yte: Vec<i64> = test.iter().map(|i| i.class_label).collect();
    evaluate_probe(&probe, &xte, &yte, curve)
}
