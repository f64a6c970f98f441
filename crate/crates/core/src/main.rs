use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cidlab::encoder::load_checkpoint;
use cidlab::experiments::{
    evaluate, load_dataset, preset, run_preset, sweep, ExperimentConfig, ExperimentPreset, Grid,
    DEFAULT_MAX_GRID_POINTS, PRESET_NAMES,
};
use cidlab::trainer::{train, TrainArtifacts};

#[derive(Parser)]
#[command(
    name = "cidlab",
    version,
    about = "Contrastive instance discrimination experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (`key = value` lines); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set temperature=0.07`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => read_config(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train an encoder pair; writes config.txt, metrics.csv and checkpoints/.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a linear probe on a checkpoint's frozen representations.
    Probe {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe plus every analysis enabled by `analysis.emit`.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a preset (or a config file) over several seeds and summarize.
    Run {
        /// Preset name or path to a config file.
        target: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of seeds, starting at the config's seed.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One run per point of a grid file (`key = v1 | v2` lines).
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_GRID_POINTS)]
        max_points: usize,
    },
    /// List the experiment presets.
    Presets,
}

fn read_config(p: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(ExperimentConfig::parse(&text)?)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train { cfg, seed, out } => {
            let mut cfg = cfg.load()?;
            cfg.train.seed = seed;
            cfg.validate()?;
            let ds = load_dataset(&cfg)?;
            let mut tc = cfg.train.clone();
            tc.encoder.input_dim = ds.input_dim();
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("config.txt"), cfg.to_text())?;
            let o = train(&tc, &ds, Some(&TrainArtifacts { dir: out.clone() }))?;
            let spe = tc.steps_per_epoch(ds.len());
            let losses = o.epoch_losses(spe);
            println!(
                "trained {} steps; loss {:.4} -> {:.4}; checkpoint {}",
                o.records.len(),
                losses.first().copied().unwrap_or(f64::NAN),
                losses.last().copied().unwrap_or(f64::NAN),
                out.join("checkpoints/final.ckpt").display()
            );
        }
        Command::Probe {
            cfg,
            checkpoint,
            out,
        } => {
            let mut cfg = cfg.load()?;
            cfg.analysis.emit = cidlab::experiments::Emit::NONE;
            let (ds, ck) = (load_dataset(&cfg)?, load_checkpoint(&checkpoint)?);
            if let Some(d) = &out {
                std::fs::create_dir_all(d)?;
            }
            let (p, res) = evaluate(&cfg, &ds, &ck.pair.query, &ck.pair.key, out.as_deref())?;
            if let Some(d) = &out {
                res.write(&d.join("results.csv"))?;
            }
            println!("top1 {:.4}  top5 {:.4}", p.top1, p.top5);
        }
        Command::Analyze {
            cfg,
            checkpoint,
            out,
        } => {
            let cfg = cfg.load()?;
            let (ds, ck) = (load_dataset(&cfg)?, load_checkpoint(&checkpoint)?);
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("config.txt"), cfg.to_text())?;
            let (_, res) = evaluate(&cfg, &ds, &ck.pair.query, &ck.pair.key, Some(&out))?;
            res.write(&out.join("results.csv"))?;
            for (k, v) in &res.values {
                println!("{k:<28} {v:.6}");
            }
        }
        Command::Run {
            target,
            cfg,
            seeds,
            out,
        } => {
            let (p, base) = if PRESET_NAMES.contains(&target.as_str()) {
                (preset(&target)?, cfg.load()?)
            } else {
                let path = PathBuf::from(&target);
                if !path.is_file() {
                    bail!(
                        "{target:?} is neither a preset ({}) nor a config file",
                        PRESET_NAMES.join(", ")
                    );
                }
                if cfg.config.is_some() {
                    bail!("--config cannot be combined with a config-file target");
                }
                let mut base = read_config(&path)?;
                base.apply_overrides(&cfg.overrides)?;
                (ExperimentPreset::from_config("config"), base)
            };
            let n = seeds.unwrap_or(p.default_seeds) as u64;
            let seeds: Vec<u64> = (base.train.seed..base.train.seed + n).collect();
            let report = run_preset(&p, &base, &seeds, &out)?;
            for r in report.summary.iter().filter(|r| r.metric == "probe_top1") {
                println!(
                    "{:<40} top1 {:.4} ± {:.4} (n={})",
                    r.variant,
                    r.mean,
                    r.std,
                    r.values.len()
                );
            }
            if report.failed() > 0 {
                bail!(
                    "{} run(s) failed; see {}",
                    report.failed(),
                    out.join("manifest.tsv").display()
                );
            }
        }
        Command::Sweep {
            grid,
            cfg,
            out,
            max_points,
        } => {
            let text = std::fs::read_to_string(&grid)
                .with_context(|| format!("reading {}", grid.display()))?;
            let g = Grid::parse(&text)?;
            let m = sweep(&g, &cfg.load()?, &out, max_points)?;
            let failed = m.iter().filter(|e| e.status != "ok").count();
            println!(
                "{} run(s), {} failed; manifest {}",
                m.len(),
                failed,
                out.join("manifest.tsv").display()
            );
            if failed > 0 {
                bail!("{failed} sweep point(s) failed");
            }
        }
        Command::Presets => {
            for name in PRESET_NAMES {
                let p = preset(name)?;
                let n = p.variants.len();
                println!(
                    "{name:<24} {} ({n} variant{})",
                    p.description,
                    if n == 1 { "" } else { "s" }
                );
            }
        }
    }
    Ok(())
}
