//! Config files, paper-experiment presets, sweeps and run artifacts.
//!
//! A run directory holds `config.txt` (every key, enough to reproduce the
//! run), `metrics.csv`, `checkpoints/`, the probe and analysis CSVs and
//! `results.csv` with the scalar outcomes. Preset and sweep directories add
//! `manifest.tsv`; presets also write `summary.csv` with mean ± std across
//! seeds.

mod config;
mod presets;
mod runner;
mod sweep;

pub use config::{
    format_band, format_policy, parse_band, parse_policy, AnalysisConfig, DataConfig, DataSource,
    Emit, ExperimentConfig, CONFIG_KEYS,
};
pub use presets::{
    preset, run_preset, summarize, write_summary, ExperimentPreset, PresetReport, SummaryRow,
    Variant, PRESET_NAMES, REPLACEMENT_RESERVE, SAME_CLASS_ROWS, SUMMARY_HEADER,
};
pub use runner::{
    evaluate, load_dataset, read_manifest, run_single, write_manifest, ManifestEntry, RunOutput,
    RunResults,
};
pub use sweep::{sweep, Grid, DEFAULT_MAX_GRID_POINTS};
