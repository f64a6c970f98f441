use super::{ClassTree, Dataset, Instance};
use crate::numerics::RngStream;
use crate::{Error, Result};

/// Hierarchical Gaussian clusters over a balanced binary class tree.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub depth: usize,
    pub dims: usize,
    /// Offset scale for nodes at depth 1, 2, ..., `depth`.
    pub level_sigmas: Vec<f64>,
    pub within_class_sigma: f64,
    pub instances_per_class: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            dims: 64,
            level_sigmas: vec![1.0, 0.7, 0.5, 0.35],
            within_class_sigma: 0.6,
            instances_per_class: 200,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.dims == 0 || self.instances_per_class == 0 {
            return Err(Error::Config(
                "synthetic data needs depth, dims and instances_per_class >= 1".into(),
            ));
        }
        if self.level_sigmas.len() != self.depth {
            return Err(Error::Config(format!(
                "level_sigmas has {} entries for depth {}",
                self.level_sigmas.len(),
                self.depth
            )));
        }
        if self
            .level_sigmas
            .iter()
            .chain([&self.within_class_sigma])
            .any(|s| !s.is_finite() || *s < 0.0)
        {
            return Err(Error::Config(
                "sigmas must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Draw a dataset with `2^depth` classes. Each tree node below the root gets
/// an offset `~ N(0, σ_level² I)`; a class mean is the sum of offsets along
/// its root-to-leaf path, so classes sharing a deeper ancestor have closer
/// means. Instances are `~ N(mean, σ_within² I)`, grouped by class.
///
/// Returns the dataset and the class means. All-zero level sigmas are allowed
/// and give identical means.
pub fn gen_hierarchical_gaussian(
    cfg: &SyntheticConfig,
    rng: &mut RngStream,
) -> Result<(Dataset, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let tree = ClassTree::balanced_binary(cfg.depth);
    let mut offsets = vec![vec![0.0; cfg.dims]; tree.n_nodes()];
    for (node, off) in offsets.iter_mut().enumerate().skip(1) {
        let sigma = cfg.level_sigmas[tree.depth(node) - 1];
        for v in off.iter_mut() {
            *v = sigma * rng.standard_normal();
        }
    }
    let means: Vec<Vec<f64>> = (0..tree.n_classes() as i64)
        .map(|label| {
            let mut m = vec![0.0; cfg.dims];
            for node in tree.path_from_root(tree.leaf(label).unwrap()) {
                for (a, b) in m.iter_mut().zip(&offsets[node]) {
                    *a += b;
                }
            }
            m
        })
        .collect();
    let mut instances = Vec::with_capacity(means.len() * cfg.instances_per_class);
    for (label, mean) in means.iter().enumerate() {
        for _ in 0..cfg.instances_per_class {
            let features = mean
                .iter()
                .map(|m| m + cfg.within_class_sigma * rng.standard_normal())
                .collect();
            instances.push(Instance {
                instance_id: instances.len() as i64,
                features,
                class_label: label as i64,
            });
        }
    }
    Ok((Dataset { instances, tree }, means))
}
