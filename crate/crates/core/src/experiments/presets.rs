use std::collections::BTreeSet;
use std::path::Path;

use super::config::ExperimentConfig;
use super::runner::{run_single, write_manifest, ManifestEntry, RunResults};
use crate::analysis::{mean_std, write_csv};
use crate::{Error, Result};

/// One row of a preset: a label and the config keys it overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub overrides: Vec<(String, String)>,
}

impl Variant {
    fn new(label: impl Into<String>, overrides: &[(&str, &str)]) -> Self {
        Self {
            label: label.into(),
            overrides: overrides
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

/// A named experiment: variants applied on top of a base config, run once
/// per seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPreset {
    pub name: String,
    pub description: &'static str,
    pub variants: Vec<Variant>,
    pub default_seeds: usize,
}

pub const PRESET_NAMES: &[&str] = &[
    "band_sufficiency",
    "band_necessity",
    "hardest_removal_temps",
    "same_class_ablation",
    "semantic_bands",
    "consistency",
    "class_pairs",
];

const PROBE_ONLY: (&str, &str) = ("analysis.emit", "none");

/// `(label, lo, hi)` in percent, easiest = 0.
fn percent_band(lo: u32, hi: u32) -> (String, String) {
    (
        format!("{lo}-{hi}"),
        format!("range:{}:{}", lo as f64 / 100.0, hi as f64 / 100.0),
    )
}

/// Table rows of the same-class ablation, as `(label, policy)`.
pub const SAME_CLASS_ROWS: &[(&str, &str)] = &[
    ("baseline", "none"),
    ("drop_hardest_0.1pct", "drop hardest:0.001 any replace"),
    ("drop_same_class", "drop all same replace"),
    (
        "drop_hardest_0.1pct_and_same",
        "drop hardest:0.001 same replace",
    ),
    (
        "drop_hardest_0.1pct_and_different",
        "drop hardest:0.001 different replace",
    ),
    (
        "drop_easiest_99.9pct_and_same",
        "drop easiest:0.999 same replace",
    ),
];

/// Reserve used by the replacement presets: large enough that dropping all
/// same-class negatives (about K / classes per query) never runs out.
pub const REPLACEMENT_RESERVE: &str = "256";

pub fn preset(name: &str) -> Result<ExperimentPreset> {
    let (description, variants): (&'static str, Vec<Variant>) = match name {
        "band_sufficiency" => (
            "probe accuracy when training only on one difficulty band",
            [
                (0, 90),
                (0, 95),
                (85, 90),
                (90, 95),
                (95, 100),
                (85, 100),
                (90, 100),
                (0, 100),
            ]
            .iter()
            .map(|&(lo, hi)| {
                let (label, band) = percent_band(lo, hi);
                Variant::new(
                    label,
                    &[("policy", &format!("keep {band} any omit")), PROBE_ONLY],
                )
            })
            .collect(),
        ),
        "band_necessity" => (
            "probe accuracy when one difficulty band is removed",
            std::iter::once(Variant::new("baseline", &[("policy", "none"), PROBE_ONLY]))
                .chain(
                    [(85, 90), (90, 95), (95, 100), (85, 100), (90, 100)]
                        .iter()
                        .map(|&(lo, hi)| {
                            let (label, band) = percent_band(lo, hi);
                            Variant::new(
                                format!("without_{label}"),
                                &[("policy", &format!("drop {band} any omit")), PROBE_ONLY],
                            )
                        }),
                )
                .collect(),
        ),
        "hardest_removal_temps" => (
            "removing the hardest 0.1% of negatives at several temperatures",
            ["0.07", "0.1", "0.2"]
                .iter()
                .flat_map(|&t| {
                    [
                        ("baseline", "none"),
                        ("drop_hardest_0.1pct", "drop hardest:0.001 any replace"),
                    ]
                    .map(|(l, p)| {
                        Variant::new(
                            format!("tau{t}_{l}"),
                            &[("temperature", t), ("policy", p), PROBE_ONLY],
                        )
                    })
                })
                .collect(),
        ),
        "same_class_ablation" => (
            "removing same-class and hardest negatives, with older replacements",
            ["0.07", "0.2"]
                .iter()
                .flat_map(|&t| {
                    SAME_CLASS_ROWS.iter().map(move |&(l, p)| {
                        Variant::new(
                            format!("tau{t}_{l}"),
                            &[
                                ("temperature", t),
                                ("policy", p),
                                ("queue_reserve", REPLACEMENT_RESERVE),
                                PROBE_ONLY,
                            ],
                        )
                    })
                })
                .collect(),
        ),
        "semantic_bands" => (
            "class overlap and LCA depth of hard vs easy negatives, and the difficulty-dot curve",
            vec![Variant::new(
                "baseline",
                &[("policy", "none"), ("analysis.emit", "bands,curve")],
            )],
        ),
        "consistency" => (
            "hard-negative frequency distribution against a shuffled baseline",
            vec![Variant::new(
                "baseline",
                &[("policy", "none"), ("analysis.emit", "consistency")],
            )],
        ),
        "class_pairs" => (
            "class-pair mean dot products and their extremes",
            vec![Variant::new(
                "baseline",
                &[("policy", "none"), ("analysis.emit", "class_pairs")],
            )],
        ),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?}; known presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(ExperimentPreset {
        name: name.to_string(),
        description,
        variants,
        default_seeds: 3,
    })
}

impl ExperimentPreset {
    /// A preset with a single variant that leaves `base` untouched.
    pub fn from_config(name: &str) -> Self {
        Self {
            name: name.to_string(),
            description: "user config",
            variants: vec![Variant::new("config", &[])],
            default_seeds: 1,
        }
    }

    pub fn config_for(
        &self,
        base: &ExperimentConfig,
        variant: usize,
        seed: u64,
    ) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        for (k, v) in &self.variants[variant].overrides {
            c.set(k, v)?;
        }
        c.train.seed = seed;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

pub const SUMMARY_HEADER: &[&str] = &["variant", "metric", "mean", "std", "n", "values"];

/// Mean ± sample std of every metric across seeds, per variant.
pub fn summarize(per_run: &[(String, RunResults)]) -> Vec<SummaryRow> {
    let mut variants: Vec<&str> = Vec::new();
    for (v, _) in per_run {
        if !variants.contains(&v.as_str()) {
            variants.push(v);
        }
    }
    let mut rows = Vec::new();
    for v in variants {
        let runs: Vec<&RunResults> = per_run
            .iter()
            .filter(|(n, _)| n == v)
            .map(|p| &p.1)
            .collect();
        let mut metrics: Vec<&str> = Vec::new();
        for r in &runs {
            for (k, _) in &r.values {
                if !metrics.contains(&k.as_str()) {
                    metrics.push(k);
                }
            }
        }
        for m in metrics {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.get(m)).collect();
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                variant: v.to_string(),
                metric: m.to_string(),
                mean,
                std,
                values,
            });
        }
    }
    rows
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(
        path,
        SUMMARY_HEADER,
        rows.iter().map(|r| {
            [
                r.variant.clone(),
                r.metric.clone(),
                r.mean.to_string(),
                r.std.to_string(),
                r.values.len().to_string(),
                r.values
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ]
        }),
    )
}

/// Result of running every variant × seed of a preset.
#[derive(Clone, Debug)]
pub struct PresetReport {
    pub summary: Vec<SummaryRow>,
    pub manifest: Vec<ManifestEntry>,
}

impl PresetReport {
    pub fn failed(&self) -> usize {
        self.manifest.iter().filter(|e| e.status != "ok").count()
    }

    pub fn row(&self, variant: &str, metric: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.variant == variant && r.metric == metric)
    }
}

/// Run every variant for every seed under `out/<variant>/seed_<s>/`, then
/// write `out/summary.csv` and `out/manifest.tsv`. A failing run is recorded
/// in the manifest and does not stop the others.
pub fn run_preset(
    preset: &ExperimentPreset,
    base: &ExperimentConfig,
    seeds: &[u64],
    out: &Path,
) -> Result<PresetReport> {
    let labels: BTreeSet<&str> = preset.variants.iter().map(|v| v.label.as_str()).collect();
    if labels.len() != preset.variants.len() {
        return Err(Error::Config(format!(
            "preset {} has duplicate variant labels",
            preset.name
        )));
    }
    // reject bad overrides before any training starts
    for v in 0..preset.variants.len() {
        preset.config_for(base, v, base.train.seed)?;
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut per_run = Vec::new();
    let mut manifest = Vec::new();
    for (vi, variant) in preset.variants.iter().enumerate() {
        for &seed in seeds {
            let dir = out.join(&variant.label).join(format!("seed_{seed}"));
            let status = match preset
                .config_for(base, vi, seed)
                .and_then(|c| run_single(&c, Some(&dir)))
            {
                Ok(r) => {
                    per_run.push((variant.label.clone(), r.results));
                    "ok".to_string()
                }
                Err(e) => format!("failed: {e}"),
            };
            manifest.push(ManifestEntry {
                name: format!("{}/{}", preset.name, variant.label),
                path: dir,
                seed,
                status,
            });
        }
    }
    let summary = summarize(&per_run);
    write_summary(&out.join("summary.csv"), &summary)?;
    write_manifest(&out.join("manifest.tsv"), &manifest)?;
    Ok(PresetReport { summary, manifest })
}
