use crate::numerics::dot;

/// Softmax over `[positive, negatives...]` logits (dots / τ), with the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxWeights {
    pub loss: f64,
    pub positive: f64,
    pub negatives: Vec<f64>,
}

/// `−log(exp(p/τ) / (exp(p/τ) + Σ exp(nᵢ/τ)))`, max-shifted log-sum-exp.
pub fn info_nce_from_dots(pos_dot: f64, neg_dots: &[f64], tau: f64) -> f64 {
    let p = pos_dot / tau;
    let m = neg_dots.iter().fold(p, |acc, &d| acc.max(d / tau));
    let sum = (p - m).exp() + neg_dots.iter().map(|&d| (d / tau - m).exp()).sum::<f64>();
    (m + sum.ln() - p).max(0.0)
}

/// Loss plus the softmax weight of every logit, for gradient assembly.
pub fn info_nce_weights(pos_dot: f64, neg_dots: &[f64], tau: f64) -> SoftmaxWeights {
    let p = pos_dot / tau;
    let m = neg_dots.iter().fold(p, |acc, &d| acc.max(d / tau));
    let ep = (p - m).exp();
    let en: Vec<f64> = neg_dots.iter().map(|&d| (d / tau - m).exp()).collect();
    let sum = ep + en.iter().sum::<f64>();
    SoftmaxWeights {
        loss: (m + sum.ln() - p).max(0.0),
        positive: ep / sum,
        negatives: en.into_iter().map(|e| e / sum).collect(),
    }
}

pub fn info_nce_loss(query: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64) -> f64 {
    let dots: Vec<f64> = negatives.iter().map(|k| dot(query, k)).collect();
    info_nce_from_dots(dot(query, positive), &dots, tau)
}

/// `∂L/∂q = (1/τ)·(Σⱼ wⱼ kⱼ − k₊)`, the sum running over the positive and
/// every negative.
pub fn info_nce_grad_query(
    query: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    tau: f64,
) -> Vec<f64> {
    let dots: Vec<f64> = negatives.iter().map(|k| dot(query, k)).collect();
    let w = info_nce_weights(dot(query, positive), &dots, tau);
    let mut g: Vec<f64> = positive.iter().map(|k| (w.positive - 1.0) * k).collect();
    for (k, wi) in negatives.iter().zip(&w.negatives) {
        for (gj, kj) in g.iter_mut().zip(k.iter()) {
            *gj += wi * kj;
        }
    }
    g.iter_mut().for_each(|v| *v /= tau);
    g
}
