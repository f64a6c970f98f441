//! Post-training measurements on the contrastive space: class overlap and
//! semantic depth of difficulty bands, difficulty–dot curves, hard-negative
//! consistency against a shuffled baseline, and class-pair mean dots.
//!
//! Every analysis is a pure function of its inputs; the shuffled baseline
//! takes an explicit RNG.

mod report;

pub use report::{mean_std, write_csv};

use std::collections::BTreeMap;

use crate::contrastive::{band_count, rank_order, Band, Embedding};
use crate::data::{lca_depth, ClassTree, Instance};
use crate::encoder::EncoderParams;
use crate::numerics::{DenseMatrix, RngStream, Transpose};
use crate::{Error, Result};

/// Query × negative dot products with per-row hardest-first rankings.
#[derive(Clone, Debug, PartialEq)]
pub struct DifficultyMatrix {
    pub query_ids: Vec<i64>,
    pub query_labels: Vec<i64>,
    pub negative_ids: Vec<i64>,
    pub negative_labels: Vec<i64>,
    /// `Q × N`, clamped to `[−1, 1]`.
    pub dots: DenseMatrix,
    /// `rank[i][r]` is the negative at rank `r` for query `i`. A negative with
    /// the query's own instance id is left out of that row.
    pub rank: Vec<Vec<usize>>,
}

impl DifficultyMatrix {
    pub fn from_embeddings(queries: &[Embedding], negatives: &[Embedding]) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::EmptyInput("queries"));
        }
        if negatives.is_empty() {
            return Err(Error::EmptyInput("negatives"));
        }
        let q = DenseMatrix::from_rows(&queries.iter().map(|e| &e.vector[..]).collect::<Vec<_>>())?;
        let n =
            DenseMatrix::from_rows(&negatives.iter().map(|e| &e.vector[..]).collect::<Vec<_>>())?;
        Self::from_parts(
            &q,
            queries
                .iter()
                .map(|e| (e.instance_id, e.class_label))
                .collect(),
            &n,
            negatives
                .iter()
                .map(|e| (e.instance_id, e.class_label))
                .collect(),
        )
    }

    fn from_parts(
        q: &DenseMatrix,
        qmeta: Vec<(i64, i64)>,
        n: &DenseMatrix,
        nmeta: Vec<(i64, i64)>,
    ) -> Result<Self> {
        let mut dots = DenseMatrix::product(q, Transpose::No, n, Transpose::Yes)?;
        dots.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = v.clamp(-1.0, 1.0));
        let rank = (0..q.rows())
            .map(|i| {
                let qid = qmeta[i].0;
                rank_order(dots.row(i), |j| j as u64)
                    .into_iter()
                    .filter(|&j| nmeta[j].0 != qid)
                    .collect()
            })
            .collect();
        Ok(Self {
            query_ids: qmeta.iter().map(|m| m.0).collect(),
            query_labels: qmeta.iter().map(|m| m.1).collect(),
            negative_ids: nmeta.iter().map(|m| m.0).collect(),
            negative_labels: nmeta.iter().map(|m| m.1).collect(),
            dots,
            rank,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.dots.rows()
    }

    pub fn n_negatives(&self) -> usize {
        self.dots.cols()
    }

    /// `(query, negative)` pairs falling in `band` of each query's ranking.
    fn band_pairs(&self, band: Band) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rank.iter().enumerate().flat_map(move |(i, row)| {
            let (s, e) = band.rank_interval(row.len());
            row[s..e].iter().map(move |&j| (i, j))
        })
    }
}

/// Embed both sides with `encoder` (no augmentation) and rank.
pub fn build_difficulty_matrix(
    encoder: &EncoderParams,
    queries: &[&Instance],
    negatives: &[&Instance],
) -> Result<DifficultyMatrix> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("queries"));
    }
    if negatives.is_empty() {
        return Err(Error::EmptyInput("negatives"));
    }
    let embed = |set: &[&Instance]| -> Result<DenseMatrix> {
        let x = DenseMatrix::from_rows(&set.iter().map(|i| &i.features[..]).collect::<Vec<_>>())?;
        encoder.embed_batch(&x)
    };
    let meta = |set: &[&Instance]| set.iter().map(|i| (i.instance_id, i.class_label)).collect();
    DifficultyMatrix::from_parts(
        &embed(queries)?,
        meta(queries),
        &embed(negatives)?,
        meta(negatives),
    )
}

/// Pooled fraction of band members whose label equals the query's label.
/// Returns 0 for an empty band.
pub fn band_same_class_fraction(dm: &DifficultyMatrix, band: Band) -> f64 {
    let (mut same, mut total) = (0usize, 0usize);
    for (i, j) in dm.band_pairs(band) {
        total += 1;
        same += (dm.query_labels[i] == dm.negative_labels[j]) as usize;
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

/// Mean LCA depth between query and negative labels over band members.
pub fn band_mean_lca(dm: &DifficultyMatrix, tree: &ClassTree, band: Band) -> Result<f64> {
    let (mut sum, mut total) = (0usize, 0usize);
    for (i, j) in dm.band_pairs(band) {
        sum += lca_depth(tree, dm.query_labels[i], dm.negative_labels[j])?;
        total += 1;
    }
    Ok(if total == 0 {
        0.0
    } else {
        sum as f64 / total as f64
    })
}

/// Mean dot product at `n_points` evenly spaced rank positions, from the
/// hardest (percentile 0) to the easiest (percentile 100). Row `i` samples
/// rank `round(p·(n_i − 1))`, so the curve is non-increasing.
pub fn difficulty_dot_curve(dm: &DifficultyMatrix, n_points: usize) -> Result<Vec<(f64, f64)>> {
    if n_points < 2 {
        return Err(Error::Config(format!(
            "curve needs at least 2 points, got {n_points}"
        )));
    }
    let rows: Vec<(usize, &Vec<usize>)> = dm
        .rank
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput("ranked negatives"));
    }
    Ok((0..n_points)
        .map(|k| {
            let p = k as f64 / (n_points - 1) as f64;
            let sum: f64 = rows
                .iter()
                .map(|&(i, row)| {
                    let r = (p * (row.len() - 1) as f64).round() as usize;
                    dm.dots.get(i, row[r])
                })
                .sum();
            (100.0 * p, sum / rows.len() as f64)
        })
        .collect())
}

/// Per-negative hard frequencies together with their histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyDistribution {
    pub frequencies: Vec<f64>,
    /// Probability mass per bin of width `1/n_bins` on `[0, 1]`; 1.0 falls in
    /// the last bin.
    pub histogram: Vec<f64>,
    /// `total hard slots / (rows · N)`, computed from integer counts.
    pub mean: f64,
    /// Population variance of `frequencies`.
    pub variance: f64,
}

impl FrequencyDistribution {
    fn from_counts(counts: &[usize], rows: usize, n_bins: usize) -> Self {
        let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / rows as f64).collect();
        let total: usize = counts.iter().sum();
        let mean = total as f64 / (rows * counts.len()) as f64;
        let variance =
            frequencies.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / frequencies.len() as f64;
        let mut bins = vec![0usize; n_bins];
        for f in &frequencies {
            bins[((f * n_bins as f64).floor() as usize).min(n_bins - 1)] += 1;
        }
        let histogram = bins
            .iter()
            .map(|&b| b as f64 / frequencies.len() as f64)
            .collect();
        Self {
            frequencies,
            histogram,
            mean,
            variance,
        }
    }
}

fn check_hist_args(frac: f64, n_bins: usize) -> Result<()> {
    if !(frac > 0.0 && frac < 1.0) || n_bins == 0 {
        return Err(Error::Config(format!(
            "hard fraction must be in (0, 1) and bins >= 1, got {frac} and {n_bins}"
        )));
    }
    Ok(())
}

/// For each negative, the fraction of queries that rank it within their
/// hardest `band_count(frac, n)`.
pub fn hard_frequency_histogram(
    dm: &DifficultyMatrix,
    frac: f64,
    n_bins: usize,
) -> Result<FrequencyDistribution> {
    check_hist_args(frac, n_bins)?;
    let mut counts = vec![0usize; dm.n_negatives()];
    for row in &dm.rank {
        if row.is_empty() {
            continue;
        }
        for &j in &row[..band_count(frac, row.len())] {
            counts[j] += 1;
        }
    }
    Ok(FrequencyDistribution::from_counts(
        &counts,
        dm.n_queries(),
        n_bins,
    ))
}

/// Same statistic with every query's ranking replaced by an independent
/// uniform permutation, repeated `n_shuffles` times. Frequencies from all
/// shuffles are pooled into one distribution.
pub fn shuffled_baseline_histogram(
    dm: &DifficultyMatrix,
    frac: f64,
    n_bins: usize,
    rng: &mut RngStream,
    n_shuffles: usize,
) -> Result<FrequencyDistribution> {
    check_hist_args(frac, n_bins)?;
    if n_shuffles == 0 {
        return Err(Error::Config("n_shuffles must be >= 1".into()));
    }
    let n = dm.n_negatives();
    let mut counts = vec![0usize; n * n_shuffles];
    for s in 0..n_shuffles {
        for row in &dm.rank {
            if row.is_empty() {
                continue;
            }
            let bc = band_count(frac, row.len());
            let mut perm = row.clone();
            // partial Fisher–Yates: the first bc slots are a uniform sample
            for r in 0..bc {
                let pick = r + rng.below(perm.len() - r);
                perm.swap(r, pick);
                counts[s * n + perm[r]] += 1;
            }
        }
    }
    Ok(FrequencyDistribution::from_counts(
        &counts,
        dm.n_queries(),
        n_bins,
    ))
}

/// Mean pairwise dot products between classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPairTable {
    /// Sorted class labels; row/column `i` of `means` is `classes[i]`.
    pub classes: Vec<i64>,
    pub means: DenseMatrix,
    /// `(a, b, mean)` with `a < b`, ten most negative first.
    pub most_negative: Vec<(i64, i64, f64)>,
    pub most_positive: Vec<(i64, i64, f64)>,
    pub nearest_zero: Vec<(i64, i64, f64)>,
}

pub const LEAGUE_TABLE_LEN: usize = 10;

/// Entry `(a, b)` averages `x·y` over `x` in class `a`, `y` in class `b`,
/// `x ≠ y`. Every class needs at least two members.
pub fn class_pair_mean_dots(embeddings: &[Embedding]) -> Result<ClassPairTable> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput("embeddings"));
    }
    let mut members: BTreeMap<i64, usize> = BTreeMap::new();
    for e in embeddings {
        *members.entry(e.class_label).or_default() += 1;
    }
    if let Some((&label, &count)) = members.iter().find(|(_, &c)| c < 2) {
        return Err(Error::InsufficientInstances { label, count });
    }
    let classes: Vec<i64> = members.keys().copied().collect();
    let index: BTreeMap<i64, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let cls: Vec<usize> = embeddings.iter().map(|e| index[&e.class_label]).collect();
    let c = classes.len();

    let all =
        DenseMatrix::from_rows(&embeddings.iter().map(|e| &e.vector[..]).collect::<Vec<_>>())?;
    let mut sums = vec![0.0; c * c];
    const BLOCK: usize = 256;
    for start in (0..all.rows()).step_by(BLOCK) {
        let end = (start + BLOCK).min(all.rows());
        let block = DenseMatrix::from_fn(end - start, all.cols(), |r, k| all.get(start + r, k));
        let g = DenseMatrix::product(&block, Transpose::No, &all, Transpose::Yes)?;
        for r in 0..g.rows() {
            let i = start + r;
            for (j, &v) in g.row(r).iter().enumerate() {
                if j != i {
                    sums[cls[i] * c + cls[j]] += v;
                }
            }
        }
    }
    let sizes: Vec<usize> = classes.iter().map(|k| members[k]).collect();
    let means = DenseMatrix::from_fn(c, c, |a, b| {
        let pairs = if a == b {
            sizes[a] * (sizes[a] - 1)
        } else {
            sizes[a] * sizes[b]
        };
        // symmetric by construction: average the two accumulation orders
        0.5 * (sums[a * c + b] + sums[b * c + a]) / pairs as f64
    });

    let mut pairs: Vec<(i64, i64, f64)> = Vec::new();
    for a in 0..c {
        for b in (a + 1)..c {
            pairs.push((classes[a], classes[b], means.get(a, b)));
        }
    }
    let league = |key: &dyn Fn(f64) -> f64| {
        let mut p = pairs.clone();
        p.sort_by(|x, y| key(x.2).total_cmp(&key(y.2)));
        p.truncate(LEAGUE_TABLE_LEN);
        p
    };
    Ok(ClassPairTable {
        most_negative: league(&|v| v),
        most_positive: league(&|v| -v),
        nearest_zero: league(&|v| v.abs()),
        classes,
        means,
    })
}
