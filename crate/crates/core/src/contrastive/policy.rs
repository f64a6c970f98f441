use super::{Embedding, SENTINEL_LABEL};
use crate::numerics::dot;
use crate::{Error, Result};

/// `max(1, round(f·K))`, rounding half away from zero.
pub fn band_count(fraction: f64, k: usize) -> usize {
    debug_assert!(fraction > 0.0 && fraction <= 1.0);
    ((fraction * k as f64).round() as usize).max(1)
}

/// A contiguous slice of the per-query difficulty ordering.
///
/// Percentiles run from easiest (0) to hardest (1): `Range { lo: 0.95, hi: 1.0 }`
/// is the hardest 5%.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Band {
    All,
    HardestFrac(f64),
    EasiestFrac(f64),
    Range { lo: f64, hi: f64 },
}

impl Band {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Band::All => true,
            Band::HardestFrac(f) | Band::EasiestFrac(f) => f > 0.0 && f <= 1.0,
            Band::Range { lo, hi } => 0.0 <= lo && lo < hi && hi <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid band {self:?}")))
        }
    }

    /// Half-open interval of hardest-first ranks covered among `n` negatives.
    ///
    /// Fractional bands use [`band_count`]. Percentile ranges place both
    /// edges at `round((1 − p)·n)`, so adjacent ranges tile `0..n` exactly.
    pub fn rank_interval(&self, n: usize) -> (usize, usize) {
        if n == 0 {
            return (0, 0);
        }
        match *self {
            Band::All => (0, n),
            Band::HardestFrac(f) => (0, band_count(f, n).min(n)),
            Band::EasiestFrac(f) => (n - band_count(f, n).min(n), n),
            Band::Range { lo, hi } => {
                let edge = |p: f64| (((1.0 - p) * n as f64).round() as usize).min(n);
                (edge(hi), edge(lo))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    Keep,
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassRelation {
    Any,
    Same,
    Different,
}

impl ClassRelation {
    /// Sentinel-labelled entries are never "same class" as anything.
    pub fn matches(self, query_label: i64, negative_label: i64) -> bool {
        let same = query_label == negative_label && negative_label != SENTINEL_LABEL;
        match self {
            ClassRelation::Any => true,
            ClassRelation::Same => same,
            ClassRelation::Different => !same,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Replacement {
    /// Filtered negatives simply leave the denominator.
    Omit,
    /// Each filtered negative is replaced by a reserve entry, oldest first.
    ReplaceWithOlder,
}

/// Which queue negatives a query is contrasted against: the members of
/// `band ∩ class_relation` are kept (everything else removed) or removed
/// (everything else kept).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterPolicy {
    pub mode: FilterMode,
    pub band: Band,
    pub class_relation: ClassRelation,
    pub replacement: Replacement,
}

impl FilterPolicy {
    pub fn keep_all() -> Self {
        Self {
            mode: FilterMode::Keep,
            band: Band::All,
            class_relation: ClassRelation::Any,
            replacement: Replacement::Omit,
        }
    }

    pub fn keep(band: Band) -> Self {
        Self {
            band,
            ..Self::keep_all()
        }
    }

    pub fn drop(band: Band, class_relation: ClassRelation, replacement: Replacement) -> Self {
        Self {
            mode: FilterMode::Drop,
            band,
            class_relation,
            replacement,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.band.validate()
    }

    /// True when every negative is always retained.
    pub fn is_identity(&self) -> bool {
        self.mode == FilterMode::Keep
            && self.band == Band::All
            && self.class_relation == ClassRelation::Any
    }
}

/// Hardest-first order of a query's negatives, with their dot products.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    /// `order[r]` is the index of the negative at rank `r` (0 = hardest).
    pub order: Vec<usize>,
    /// Dot products in ranked order.
    pub dots: Vec<f64>,
}

/// Sort indices by dot product descending, ties broken by smaller age first.
pub fn rank_order(dots: &[f64], ages: impl Fn(usize) -> u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dots.len()).collect();
    order.sort_by(|&a, &b| {
        dots[b]
            .total_cmp(&dots[a])
            .then_with(|| ages(a).cmp(&ages(b)))
    });
    order
}

pub fn rank_difficulty(query: &Embedding, negatives: &[Embedding]) -> Result<Ranking> {
    if negatives.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    let raw: Vec<f64> = negatives
        .iter()
        .map(|n| dot(&query.vector, &n.vector).clamp(-1.0, 1.0))
        .collect();
    let order = rank_order(&raw, |i| negatives[i].age);
    let dots = order.iter().map(|&i| raw[i]).collect();
    Ok(Ranking { order, dots })
}

/// Outcome of applying a policy for one query.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Selection {
    /// Indices into the active negatives that stay, ascending.
    pub retained: Vec<usize>,
    /// Indices into the reserve pulled in as replacements, oldest first.
    pub replacements: Vec<usize>,
    /// How many active negatives were filtered out.
    pub removed: usize,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.retained.len() + self.replacements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Apply `policy` given a hardest-first `order` over `labels.len()` negatives.
pub fn select(
    order: &[usize],
    labels: &[i64],
    query_label: i64,
    policy: &FilterPolicy,
    reserve_len: usize,
) -> Result<Selection> {
    let n = labels.len();
    debug_assert_eq!(order.len(), n);
    if policy.is_identity() {
        return Ok(Selection {
            retained: (0..n).collect(),
            ..Selection::default()
        });
    }
    let (start, end) = policy.band.rank_interval(n);
    let mut in_band = vec![false; n];
    for &i in &order[start..end] {
        in_band[i] = true;
    }
    let retained: Vec<usize> = (0..n)
        .filter(|&i| {
            let member = in_band[i] && policy.class_relation.matches(query_label, labels[i]);
            match policy.mode {
                FilterMode::Keep => member,
                FilterMode::Drop => !member,
            }
        })
        .collect();
    let removed = n - retained.len();
    let replacements = match policy.replacement {
        Replacement::Omit => Vec::new(),
        Replacement::ReplaceWithOlder => {
            if removed > reserve_len {
                return Err(Error::ReserveExhausted {
                    needed: removed,
                    available: reserve_len,
                });
            }
            (0..removed).collect()
        }
    };
    Ok(Selection {
        retained,
        replacements,
        removed,
    })
}

/// Rank `negatives` (the active queue region) for `query` and apply `policy`.
pub fn apply_policy(
    query: &Embedding,
    negatives: &[Embedding],
    reserve: &[Embedding],
    policy: &FilterPolicy,
) -> Result<Selection> {
    let ranking = rank_difficulty(query, negatives)?;
    let labels: Vec<i64> = negatives.iter().map(|n| n.class_label).collect();
    select(
        &ranking.order,
        &labels,
        query.class_label,
        policy,
        reserve.len(),
    )
}
