//! Datasets with known class hierarchies, augmentation, CIFAR-10 ingestion.

mod augment;
mod cifar;
mod synth;
mod tree;

pub use augment::{augment, augment_instance, AugmentConfig};
pub use cifar::{load_cifar10_batch, parse_cifar10, write_cifar10_batch, CIFAR_RECORD_LEN};
pub use synth::{gen_hierarchical_gaussian, SyntheticConfig};
pub use tree::{lca_depth, ClassTree};

/// One example: a feature vector with its identity and ground-truth class.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub instance_id: i64,
    pub features: Vec<f64>,
    pub class_label: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub tree: ClassTree,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.instances.first().map_or(0, |i| i.features.len())
    }

    pub fn n_classes(&self) -> usize {
        self.tree.n_classes()
    }

    /// Deterministic train/test split for the probe: within each class, every
    /// `holdout_every`-th instance (by position) goes to the test side.
    pub fn probe_split(&self, holdout_every: usize) -> (Vec<&Instance>, Vec<&Instance>) {
        let mut seen = std::collections::HashMap::<i64, usize>::new();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for inst in &self.instances {
            let c = seen.entry(inst.class_label).or_insert(0);
            if holdout_every > 0 && *c % holdout_every == holdout_every - 1 {
                test.push(inst);
            } else {
                train.push(inst);
            }
            *c += 1;
        }
        (train, test)
    }
}
