//! InfoNCE, the negative queue, per-query difficulty ranking and filter
//! policies that decide which queue entries each query is contrasted against.

mod loss;
mod policy;
mod queue;

pub use loss::{
    info_nce_from_dots, info_nce_grad_query, info_nce_loss, info_nce_weights, SoftmaxWeights,
};
pub use policy::{
    apply_policy, band_count, rank_difficulty, rank_order, select, Band, ClassRelation, FilterMode,
    FilterPolicy, Ranking, Replacement, Selection,
};
pub use queue::{init_queue, NegativeQueue};

use crate::numerics::norm;
use crate::{Error, Result};

/// Class label carried by cold-start queue entries. Never counts as "same class".
pub const SENTINEL_LABEL: i64 = -1;

/// A unit-norm contrastive-space vector tagged with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub instance_id: i64,
    pub class_label: i64,
    /// Enqueue counter; 0 until the embedding enters a queue.
    pub age: u64,
}

impl Embedding {
    /// Wrap a vector that must already be unit norm (within 1e-10).
    pub fn new(vector: Vec<f64>, instance_id: i64, class_label: i64) -> Result<Self> {
        let n = norm(&vector);
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::NonFinite(format!(
                "embedding must be unit norm, got norm {n}"
            )));
        }
        Ok(Self {
            vector,
            instance_id,
            class_label,
            age: 0,
        })
    }

    pub fn with_age(mut self, age: u64) -> Self {
        self.age = age;
        self
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub queue_capacity: usize,
    pub reserve: usize,
    pub policy: FilterPolicy,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.2,
            queue_capacity: 1024,
            reserve: 64,
            policy: FilterPolicy::keep_all(),
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue_capacity must be >= 1".into()));
        }
        self.policy.validate()?;
        // Replacement demand that is fixed by the band alone can be checked
        // up front; class-dependent demand is checked per query.
        if self.policy.replacement == Replacement::ReplaceWithOlder
            && self.policy.class_relation == ClassRelation::Any
        {
            let (start, end) = self.policy.band.rank_interval(self.queue_capacity);
            let members = end - start;
            let dropped = match self.policy.mode {
                FilterMode::Drop => members,
                FilterMode::Keep => self.queue_capacity - members,
            };
            if dropped > self.reserve {
                return Err(Error::Config(format!(
                    "policy drops {dropped} negatives per query but reserve is {}",
                    self.reserve
                )));
            }
        }
        Ok(())
    }
}
