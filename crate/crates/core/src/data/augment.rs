use super::Instance;
use crate::numerics::RngStream;

/// Flat-vector augmentation: multiplicative jitter, coordinate dropout, additive noise.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    /// Scale drawn uniformly from `[1 − s, 1 + s]`.
    pub scale_jitter: f64,
    pub dropout_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.3,
            scale_jitter: 0.1,
            dropout_prob: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            noise_sigma: 0.0,
            scale_jitter: 0.0,
            dropout_prob: 0.0,
        }
    }
}

/// `view = mask ⊙ (scale · x) + noise`.
///
/// The same number of random draws is consumed regardless of the config, so
/// a substream yields comparable views under different settings.
pub fn augment(x: &[f64], cfg: &AugmentConfig, rng: &mut RngStream) -> Vec<f64> {
    let scale = 1.0 + cfg.scale_jitter * rng.uniform_range(-1.0, 1.0);
    x.iter()
        .map(|&v| {
            let keep = rng.uniform() >= cfg.dropout_prob;
            let noise = rng.standard_normal();
            let kept = if keep { scale * v } else { 0.0 };
            kept + cfg.noise_sigma * noise
        })
        .collect()
}

pub fn augment_instance(inst: &Instance, cfg: &AugmentConfig, rng: &mut RngStream) -> Instance {
    Instance {
        instance_id: inst.instance_id,
        features: augment(&inst.features, cfg, rng),
        class_label: inst.class_label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Vec<f64> {
        (0..32).map(|i| (i as f64 - 15.5) * 0.37).collect()
    }

    #[test]
    fn identity_config_is_exact() {
        let v = augment(&x(), &AugmentConfig::identity(), &mut RngStream::new(1));
        assert_eq!(v, x());
    }

    #[test]
    fn dropout_only_keeps_surviving_values() {
        let cfg = AugmentConfig {
            dropout_prob: 0.5,
            ..AugmentConfig::identity()
        };
        let v = augment(&x(), &cfg, &mut RngStream::new(2));
        let mut dropped = 0;
        for (a, b) in v.iter().zip(x()) {
            if *a != 0.0 {
                assert_eq!(*a, b);
            } else {
                dropped += 1;
            }
        }
        assert!(dropped > 0 && dropped < 32);
    }

    #[test]
    fn independent_views_differ_and_keep_identity() {
        let inst = Instance {
            instance_id: 17,
            features: x(),
            class_label: 3,
        };
        let cfg = AugmentConfig::default();
        let root = RngStream::new(5);
        let a = augment_instance(&inst, &cfg, &mut root.substream(&[17, 0, 0]));
        let b = augment_instance(&inst, &cfg, &mut root.substream(&[17, 1, 0]));
        assert_ne!(a.features, b.features);
        assert_eq!((a.instance_id, a.class_label), (17, 3));
        assert_eq!((b.instance_id, b.class_label), (17, 3));
    }
}
