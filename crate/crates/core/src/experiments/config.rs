//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Every key is optional and defaults as in [`ExperimentConfig::default`];
//! unknown or repeated keys are errors. [`ExperimentConfig::to_text`] writes
//! every key and parses back to an identical config.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::contrastive::{Band, ClassRelation, FilterMode, FilterPolicy, Replacement};
use crate::data::SyntheticConfig;
use crate::encoder::EncoderConfig;
use crate::numerics::LrSchedule;
use crate::probe::ProbeConfig;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    /// CIFAR-10 binary batch; `tree` is an optional edge-list file over the
    /// label names `0`..`9`, otherwise all classes hang off one root.
    Cifar {
        path: PathBuf,
        tree: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Seed for dataset generation, independent of the training seed.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticConfig::default()),
            seed: 0,
        }
    }
}

/// Which analysis groups a run emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Emit {
    pub bands: bool,
    pub curve: bool,
    pub consistency: bool,
    pub class_pairs: bool,
}

impl Emit {
    pub const NONE: Emit = Emit {
        bands: false,
        curve: false,
        consistency: false,
        class_pairs: false,
    };
    pub const ALL: Emit = Emit {
        bands: true,
        curve: true,
        consistency: true,
        class_pairs: true,
    };

    pub fn any(&self) -> bool {
        self.bands || self.curve || self.consistency || self.class_pairs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisConfig {
    pub queries: usize,
    pub negatives: usize,
    /// Embed with the key encoder instead of the query encoder.
    pub use_momentum: bool,
    pub bins: usize,
    pub hard_frac: f64,
    pub curve_points: usize,
    pub shuffles: usize,
    pub emit: Emit,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            queries: 1000,
            negatives: 1000,
            use_momentum: false,
            bins: 50,
            hard_frac: 0.05,
            curve_points: 21,
            shuffles: 5,
            emit: Emit::ALL,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// `train.encoder.input_dim` is filled in from the dataset at run time.
    pub train: TrainConfig,
    pub data: DataConfig,
    pub probe: ProbeConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                encoder: EncoderConfig {
                    input_dim: 0,
                    ..EncoderConfig::default()
                },
                ..TrainConfig::default()
            },
            data: DataConfig::default(),
            probe: ProbeConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Every accepted key, in the order `to_text` writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "snapshot_every",
    "temperature",
    "queue_capacity",
    "queue_reserve",
    "policy",
    "encoder.base_hidden",
    "encoder.repr_dim",
    "encoder.head_hidden",
    "encoder.embed_dim",
    "encoder.momentum",
    "optim.lr",
    "optim.momentum",
    "optim.weight_decay",
    "optim.schedule",
    "augment.noise_sigma",
    "augment.scale_jitter",
    "augment.dropout",
    "data.source",
    "data.cifar_path",
    "data.tree",
    "data.depth",
    "data.dims",
    "data.level_sigmas",
    "data.within_sigma",
    "data.per_class",
    "data.seed",
    "probe.epochs",
    "probe.lr",
    "probe.batch_size",
    "probe.holdout",
    "analysis.queries",
    "analysis.negatives",
    "analysis.use_momentum",
    "analysis.bins",
    "analysis.hard_frac",
    "analysis.curve_points",
    "analysis.shuffles",
    "analysis.emit",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() || value == "none" {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    if v.is_empty() {
        "none".into()
    } else {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// `all`, `hardest:F`, `easiest:F` or `range:LO:HI` (fractions, easiest = 0).
pub fn parse_band(s: &str) -> Result<Band> {
    let parts: Vec<&str> = s.split(':').collect();
    let band = match parts.as_slice() {
        ["all"] => Band::All,
        ["hardest", f] => Band::HardestFrac(parse("band", f)?),
        ["easiest", f] => Band::EasiestFrac(parse("band", f)?),
        ["range", lo, hi] => Band::Range {
            lo: parse("band", lo)?,
            hi: parse("band", hi)?,
        },
        _ => return Err(Error::Config(format!("unrecognised band {s:?}"))),
    };
    band.validate()?;
    Ok(band)
}

pub fn format_band(b: &Band) -> String {
    match *b {
        Band::All => "all".into(),
        Band::HardestFrac(f) => format!("hardest:{f}"),
        Band::EasiestFrac(f) => format!("easiest:{f}"),
        Band::Range { lo, hi } => format!("range:{lo}:{hi}"),
    }
}

/// `none`, or `MODE BAND [CLASS] [REPLACEMENT]` with MODE `keep|drop`, CLASS
/// `any|same|different` (default any) and REPLACEMENT `omit|replace`
/// (default omit). Example: `drop hardest:0.001 same replace`.
pub fn parse_policy(s: &str) -> Result<FilterPolicy> {
    let t: Vec<&str> = s.split_whitespace().collect();
    if t == ["none"] {
        return Ok(FilterPolicy::keep_all());
    }
    if t.len() < 2 || t.len() > 4 {
        return Err(Error::Config(format!(
            "policy: expected `MODE BAND [CLASS] [REPLACEMENT]`, got {s:?}"
        )));
    }
    let mode = match t[0] {
        "keep" => FilterMode::Keep,
        "drop" => FilterMode::Drop,
        m => return Err(Error::Config(format!("policy: unknown mode {m:?}"))),
    };
    let class_relation = match t.get(2).copied().unwrap_or("any") {
        "any" => ClassRelation::Any,
        "same" => ClassRelation::Same,
        "different" => ClassRelation::Different,
        c => {
            return Err(Error::Config(format!(
                "policy: unknown class relation {c:?}"
            )))
        }
    };
    let replacement = match t.get(3).copied().unwrap_or("omit") {
        "omit" => Replacement::Omit,
        "replace" => Replacement::ReplaceWithOlder,
        r => return Err(Error::Config(format!("policy: unknown replacement {r:?}"))),
    };
    let p = FilterPolicy {
        mode,
        band: parse_band(t[1])?,
        class_relation,
        replacement,
    };
    p.validate()?;
    Ok(p)
}

pub fn format_policy(p: &FilterPolicy) -> String {
    let mode = match p.mode {
        FilterMode::Keep => "keep",
        FilterMode::Drop => "drop",
    };
    let class = match p.class_relation {
        ClassRelation::Any => "any",
        ClassRelation::Same => "same",
        ClassRelation::Different => "different",
    };
    let repl = match p.replacement {
        Replacement::Omit => "omit",
        Replacement::ReplaceWithOlder => "replace",
    };
    format!("{mode} {} {class} {repl}", format_band(&p.band))
}

fn parse_emit(value: &str) -> Result<Emit> {
    let mut e = Emit::NONE;
    if value == "none" {
        return Ok(e);
    }
    for part in value.split(',').map(str::trim) {
        match part {
            "all" => e = Emit::ALL,
            "bands" => e.bands = true,
            "curve" => e.curve = true,
            "consistency" => e.consistency = true,
            "class_pairs" => e.class_pairs = true,
            _ => {
                return Err(Error::Config(format!(
                    "analysis.emit: unknown group {part:?}"
                )))
            }
        }
    }
    Ok(e)
}

fn format_emit(e: &Emit) -> String {
    let mut v = Vec::new();
    if e.bands {
        v.push("bands");
    }
    if e.curve {
        v.push("curve");
    }
    if e.consistency {
        v.push("consistency");
    }
    if e.class_pairs {
        v.push("class_pairs");
    }
    join(&v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

impl ExperimentConfig {
    pub fn synthetic(&self) -> Option<&SyntheticConfig> {
        match &self.data.source {
            DataSource::Synthetic(s) => Some(s),
            DataSource::Cifar { .. } => None,
        }
    }

    fn synthetic_mut(&mut self, key: &str) -> Result<&mut SyntheticConfig> {
        match &mut self.data.source {
            DataSource::Synthetic(s) => Ok(s),
            DataSource::Cifar { .. } => Err(Error::Config(format!(
                "{key} applies only to data.source = synthetic"
            ))),
        }
    }

    fn cifar_mut(&mut self, key: &str) -> Result<(&mut PathBuf, &mut Option<PathBuf>)> {
        match &mut self.data.source {
            DataSource::Cifar { path, tree } => Ok((path, tree)),
            DataSource::Synthetic(_) => Err(Error::Config(format!(
                "{key} applies only to data.source = cifar"
            ))),
        }
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "seed" => t.seed = parse(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "snapshot_every" => t.snapshot_every = parse(key, v)?,
            "temperature" => t.contrastive.temperature = parse(key, v)?,
            "queue_capacity" => t.contrastive.queue_capacity = parse(key, v)?,
            "queue_reserve" => t.contrastive.reserve = parse(key, v)?,
            "policy" => t.contrastive.policy = parse_policy(v)?,
            "encoder.base_hidden" => t.encoder.base_hidden_dims = parse_list(key, v)?,
            "encoder.repr_dim" => t.encoder.repr_dim = parse(key, v)?,
            "encoder.head_hidden" => t.encoder.head_hidden_dim = parse(key, v)?,
            "encoder.embed_dim" => t.encoder.embed_dim = parse(key, v)?,
            "encoder.momentum" => t.encoder.momentum = parse(key, v)?,
            "optim.lr" => t.optim.lr = parse(key, v)?,
            "optim.momentum" => t.optim.momentum = parse(key, v)?,
            "optim.weight_decay" => t.optim.weight_decay = parse(key, v)?,
            "optim.schedule" => {
                t.optim.schedule = match v {
                    "cosine" => LrSchedule::Cosine,
                    "constant" => LrSchedule::Constant,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected cosine or constant, got {v:?}"
                        )))
                    }
                }
            }
            "augment.noise_sigma" => t.augment.noise_sigma = parse(key, v)?,
            "augment.scale_jitter" => t.augment.scale_jitter = parse(key, v)?,
            "augment.dropout" => t.augment.dropout_prob = parse(key, v)?,
            "data.source" => {
                self.data.source = match (v, &self.data.source) {
                    ("synthetic", DataSource::Synthetic(_))
                    | ("cifar", DataSource::Cifar { .. }) => return Ok(()),
                    ("synthetic", _) => DataSource::Synthetic(SyntheticConfig::default()),
                    ("cifar", _) => DataSource::Cifar {
                        path: PathBuf::new(),
                        tree: None,
                    },
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected synthetic or cifar, got {v:?}"
                        )))
                    }
                }
            }
            "data.cifar_path" => *self.cifar_mut(key)?.0 = PathBuf::from(v),
            "data.tree" => {
                *self.cifar_mut(key)?.1 = (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
            }
            "data.depth" => self.synthetic_mut(key)?.depth = parse(key, v)?,
            "data.dims" => self.synthetic_mut(key)?.dims = parse(key, v)?,
            "data.level_sigmas" => self.synthetic_mut(key)?.level_sigmas = parse_list(key, v)?,
            "data.within_sigma" => self.synthetic_mut(key)?.within_class_sigma = parse(key, v)?,
            "data.per_class" => self.synthetic_mut(key)?.instances_per_class = parse(key, v)?,
            "data.seed" => self.data.seed = parse(key, v)?,
            "probe.epochs" => self.probe.epochs = parse(key, v)?,
            "probe.lr" => self.probe.lr = parse(key, v)?,
            "probe.batch_size" => self.probe.batch_size = parse(key, v)?,
            "probe.holdout" => self.probe.holdout_every = parse(key, v)?,
            "analysis.queries" => self.analysis.queries = parse(key, v)?,
            "analysis.negatives" => self.analysis.negatives = parse(key, v)?,
            "analysis.use_momentum" => self.analysis.use_momentum = parse_bool(key, v)?,
            "analysis.bins" => self.analysis.bins = parse(key, v)?,
            "analysis.hard_frac" => self.analysis.hard_frac = parse(key, v)?,
            "analysis.curve_points" => self.analysis.curve_points = parse(key, v)?,
            "analysis.shuffles" => self.analysis.shuffles = parse(key, v)?,
            "analysis.emit" => self.analysis.emit = parse_emit(v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parse a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Apply `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        // data.source first so source-specific keys land on the right variant
        let mut lines = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    n + 1
                ))
            })?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {k:?}",
                    n + 1
                )));
            }
            lines.push((k, v.trim()));
        }
        lines.sort_by_key(|(k, _)| *k != "data.source");
        for (k, v) in lines {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Apply `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut t = self.train.clone();
        t.encoder.input_dim = t.encoder.input_dim.max(1);
        t.validate()?;
        if let DataSource::Synthetic(s) = &self.data.source {
            s.validate()?;
        }
        let a = &self.analysis;
        if !(a.hard_frac > 0.0 && a.hard_frac < 1.0)
            || a.bins == 0
            || a.curve_points < 2
            || a.shuffles == 0
        {
            return Err(Error::Config(format!("invalid analysis settings {a:?}")));
        }
        if a.emit.any() && (a.queries == 0 || a.negatives == 0) {
            return Err(Error::Config(
                "analysis needs queries and negatives >= 1".into(),
            ));
        }
        if self.probe.holdout_every < 2 || self.probe.batch_size == 0 {
            return Err(Error::Config(
                "probe.holdout must be >= 2 and probe.batch_size >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", t.seed.to_string());
        put("epochs", t.epochs.to_string());
        put("batch_size", t.batch_size.to_string());
        put("snapshot_every", t.snapshot_every.to_string());
        put("temperature", t.contrastive.temperature.to_string());
        put("queue_capacity", t.contrastive.queue_capacity.to_string());
        put("queue_reserve", t.contrastive.reserve.to_string());
        put("policy", format_policy(&t.contrastive.policy));
        put("encoder.base_hidden", join(&t.encoder.base_hidden_dims));
        put("encoder.repr_dim", t.encoder.repr_dim.to_string());
        put("encoder.head_hidden", t.encoder.head_hidden_dim.to_string());
        put("encoder.embed_dim", t.encoder.embed_dim.to_string());
        put("encoder.momentum", t.encoder.momentum.to_string());
        put("optim.lr", t.optim.lr.to_string());
        put("optim.momentum", t.optim.momentum.to_string());
        put("optim.weight_decay", t.optim.weight_decay.to_string());
        put(
            "optim.schedule",
            match t.optim.schedule {
                LrSchedule::Cosine => "cosine",
                LrSchedule::Constant => "constant",
            }
            .into(),
        );
        put("augment.noise_sigma", t.augment.noise_sigma.to_string());
        put("augment.scale_jitter", t.augment.scale_jitter.to_string());
        put("augment.dropout", t.augment.dropout_prob.to_string());
        match &self.data.source {
            DataSource::Synthetic(d) => {
                put("data.source", "synthetic".into());
                put("data.depth", d.depth.to_string());
                put("data.dims", d.dims.to_string());
                put("data.level_sigmas", join(&d.level_sigmas));
                put("data.within_sigma", d.within_class_sigma.to_string());
                put("data.per_class", d.instances_per_class.to_string());
            }
            DataSource::Cifar { path, tree } => {
                put("data.source", "cifar".into());
                put("data.cifar_path", path.display().to_string());
                put(
                    "data.tree",
                    tree.as_ref()
                        .map_or("none".into(), |p| p.display().to_string()),
                );
            }
        }
        put("data.seed", self.data.seed.to_string());
        put("probe.epochs", self.probe.epochs.to_string());
        put("probe.lr", self.probe.lr.to_string());
        put("probe.batch_size", self.probe.batch_size.to_string());
        put("probe.holdout", self.probe.holdout_every.to_string());
        let a = &self.analysis;
        put("analysis.queries", a.queries.to_string());
        put("analysis.negatives", a.negatives.to_string());
        put("analysis.use_momentum", a.use_momentum.to_string());
        put("analysis.bins", a.bins.to_string());
        put("analysis.hard_frac", a.hard_frac.to_string());
        put("analysis.curve_points", a.curve_points.to_string());
        put("analysis.shuffles", a.shuffles.to_string());
        put("analysis.emit", format_emit(&a.emit));
        s
    }
}
