use super::{Embedding, SENTINEL_LABEL};
use crate::numerics::{l2_normalize, DenseMatrix, RngStream};
use crate::{Error, Result};

/// FIFO memory of past positives, oldest first.
///
/// The newest `capacity` entries are the active negatives; the `reserve`
/// entries just older than those are only used as replacements.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeQueue {
    capacity: usize,
    reserve: usize,
    dim: usize,
    entries: Vec<Embedding>,
    next_age: u64,
}

impl NegativeQueue {
    pub fn new(capacity: usize, reserve: usize, dim: usize) -> Self {
        Self {
            capacity,
            reserve,
            dim,
            entries: Vec::with_capacity(capacity + reserve),
            next_age: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn reserve_capacity(&self) -> usize {
        self.reserve
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_age(&self) -> u64 {
        self.next_age
    }

    /// Every stored entry, oldest first.
    pub fn entries(&self) -> &[Embedding] {
        &self.entries
    }

    fn active_start(&self) -> usize {
        self.entries.len().saturating_sub(self.capacity)
    }

    pub fn active(&self) -> &[Embedding] {
        &self.entries[self.active_start()..]
    }

    /// Reserve region, oldest first.
    pub fn reserve(&self) -> &[Embedding] {
        let end = self.active_start();
        &self.entries[end.saturating_sub(self.reserve)..end]
    }

    /// Active embeddings stacked as rows, oldest first.
    pub fn active_matrix(&self) -> DenseMatrix {
        let active = self.active();
        let mut data = Vec::with_capacity(active.len() * self.dim);
        for e in active {
            data.extend_from_slice(&e.vector);
        }
        DenseMatrix::new(active.len(), self.dim, data).expect("queue entries share one dimension")
    }

    /// Append a batch with fresh ages, evicting the oldest beyond `capacity + reserve`.
    pub fn enqueue(&mut self, batch: Vec<Embedding>) -> Result<()> {
        if batch.len() > self.capacity {
            return Err(Error::BatchTooLarge {
                batch: batch.len(),
                capacity: self.capacity,
            });
        }
        if let Some(bad) = batch.iter().find(|e| e.dim() != self.dim) {
            return Err(Error::shape(self.dim, bad.dim()));
        }
        for mut e in batch {
            e.age = self.next_age;
            self.next_age += 1;
            self.entries.push(e);
        }
        let limit = self.capacity + self.reserve;
        if self.entries.len() > limit {
            let excess = self.entries.len() - limit;
            self.entries.drain(..excess);
        }
        Ok(())
    }
}

/// Queue pre-filled with `K + R` random unit vectors carrying the sentinel label.
pub fn init_queue(
    capacity: usize,
    reserve: usize,
    dim: usize,
    rng: &mut RngStream,
) -> NegativeQueue {
    assert!(capacity >= 1, "queue capacity must be at least 1");
    let mut q = NegativeQueue::new(capacity, reserve, dim);
    let fill = (0..capacity + reserve)
        .map(|_| {
            let v = loop {
                let raw: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
                if let Ok(u) = l2_normalize(&raw) {
                    break u;
                }
            };
            Embedding {
                vector: v,
                instance_id: -1,
                class_label: SENTINEL_LABEL,
                age: 0,
            }
        })
        .collect::<Vec<_>>();
    // fill may exceed capacity per enqueue call; push directly with ages
    for mut e in fill {
        e.age = q.next_age;
        q.next_age += 1;
        q.entries.push(e);
    }
    q
}
