use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{DataSource, ExperimentConfig};
use crate::analysis::{
    band_mean_lca, band_same_class_fraction, build_difficulty_matrix, class_pair_mean_dots,
    difficulty_dot_curve, hard_frequency_histogram, shuffled_baseline_histogram, write_csv,
};
use crate::contrastive::{Band, Embedding};
use crate::data::{gen_hierarchical_gaussian, load_cifar10_batch, ClassTree, Dataset, Instance};
use crate::encoder::EncoderParams;
use crate::numerics::{derive_seed, DenseMatrix, RngStream};
use crate::probe::{probe_encoder, ProbeResult};
use crate::trainer::{train, TrainArtifacts, TrainOutput};
use crate::{Error, Result};

const STREAM_ANALYSIS_SAMPLE: u64 = 5;
const STREAM_ANALYSIS_SHUFFLE: u64 = 6;
const STREAM_PROBE: u64 = 7;

/// Build the dataset a config describes.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data.source {
        DataSource::Synthetic(s) => {
            Ok(gen_hierarchical_gaussian(s, &mut RngStream::new(cfg.data.seed))?.0)
        }
        DataSource::Cifar { path, tree } => {
            let instances = load_cifar10_batch(path)?;
            let tree = match tree {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    ClassTree::from_edge_list(&text)?
                }
                None => ClassTree::from_edge_list(
                    &(0..10).map(|c| format!("root {c}\n")).collect::<String>(),
                )?,
            };
            for l in 0..tree.n_classes() as i64 {
                if tree.label_name(l)? != l.to_string() {
                    return Err(Error::Config(
                        "CIFAR class tree leaves must be named 0..9 in order of first appearance"
                            .into(),
                    ));
                }
            }
            if let Some(bad) = instances
                .iter()
                .find(|i| i.class_label as usize >= tree.n_classes())
            {
                return Err(Error::UnknownLabel(bad.class_label));
            }
            Ok(Dataset { instances, tree })
        }
    }
}

/// Named scalar results of one run, in emission order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunResults {
    pub values: Vec<(String, f64)>,
}

impl RunResults {
    fn push(&mut self, k: &str, v: f64) {
        self.values.push((k.to_string(), v));
    }

    pub fn get(&self, k: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == k).map(|p| p.1)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["metric", "value"],
            self.values.iter().map(|(k, v)| [k.clone(), v.to_string()]),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = Vec::new();
        for line in text.lines().skip(1) {
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| Error::MalformedRecord(format!("{}: {line:?}", path.display())))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::MalformedRecord(format!("{}: {line:?}", path.display())))?;
            values.push((k.to_string(), v));
        }
        Ok(Self { values })
    }
}

/// Everything produced by [`run_single`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub train: TrainOutput,
    pub probe: ProbeResult,
    pub results: RunResults,
}

fn sample_split(n: usize, q: usize, m: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if q + m > n {
        return Err(Error::Config(format!(
            "analysis wants {q} queries + {m} negatives but the dataset has {n} instances"
        )));
    }
    let mut rng = RngStream::new(derive_seed(&[seed, STREAM_ANALYSIS_SAMPLE]));
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.below(i + 1));
    }
    Ok((idx[..q].to_vec(), idx[q..q + m].to_vec()))
}

/// Probe and emit every enabled analysis for a trained encoder pair.
/// Artifacts go to `dir` when given.
pub fn evaluate(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    query: &EncoderParams,
    key: &EncoderParams,
    dir: Option<&Path>,
) -> Result<(ProbeResult, RunResults)> {
    let seed = cfg.train.seed;
    let mut res = RunResults::default();
    let (tr, te) = dataset.probe_split(cfg.probe.holdout_every);
    let probe = probe_encoder(
        query,
        &tr,
        &te,
        dataset.n_classes(),
        &cfg.probe,
        &mut RngStream::new(derive_seed(&[seed, STREAM_PROBE])),
    )?;
    res.push("probe_top1", probe.top1);
    res.push("probe_top5", probe.top5);
    if let Some(d) = dir {
        write_csv(
            d.join("probe_per_class.csv"),
            &["class", "accuracy"],
            probe
                .per_class_accuracy
                .iter()
                .map(|(c, a)| [c.to_string(), a.to_string()]),
        )?;
        write_csv(
            d.join("probe_loss.csv"),
            &["epoch", "loss"],
            probe
                .train_loss_curve
                .iter()
                .enumerate()
                .map(|(e, l)| [(e + 1).to_string(), l.to_string()]),
        )?;
    }

    let a = &cfg.analysis;
    let encoder = if a.use_momentum { key } else { query };
    let emit = a.emit;
    if emit.bands || emit.curve || emit.consistency {
        let (qi, ni) = sample_split(dataset.len(), a.queries, a.negatives, seed)?;
        let qs: Vec<&Instance> = qi.iter().map(|&i| &dataset.instances[i]).collect();
        let ns: Vec<&Instance> = ni.iter().map(|&i| &dataset.instances[i]).collect();
        let dm = build_difficulty_matrix(encoder, &qs, &ns)?;
        let hard = Band::Range {
            lo: 1.0 - a.hard_frac,
            hi: 1.0,
        };
        let easy = Band::Range {
            lo: 0.0,
            hi: 1.0 - a.hard_frac,
        };
        if emit.bands {
            let rows = [
                (
                    "hard",
                    band_same_class_fraction(&dm, hard),
                    band_mean_lca(&dm, &dataset.tree, hard)?,
                ),
                (
                    "easy",
                    band_same_class_fraction(&dm, easy),
                    band_mean_lca(&dm, &dataset.tree, easy)?,
                ),
            ];
            res.push("hard_same_class", rows[0].1);
            res.push("easy_same_class", rows[1].1);
            res.push("hard_mean_lca", rows[0].2);
            res.push("easy_mean_lca", rows[1].2);
            if let Some(d) = dir {
                write_csv(
                    d.join("bands.csv"),
                    &["band", "same_class_fraction", "mean_lca_depth"],
                    rows.iter()
                        .map(|r| [r.0.to_string(), r.1.to_string(), r.2.to_string()]),
                )?;
            }
        }
        if emit.curve {
            let curve = difficulty_dot_curve(&dm, a.curve_points)?;
            let easy_q = curve
                .iter()
                .filter(|p| p.0 >= 75.0)
                .map(|p| p.1)
                .fold(f64::INFINITY, f64::min);
            res.push("curve_hardest", curve[0].1);
            res.push("curve_easiest_quartile_min", easy_q);
            if let Some(d) = dir {
                write_csv(
                    d.join("curve.csv"),
                    &["rank_pct", "mean_dot"],
                    curve.iter().map(|p| [p.0, p.1]),
                )?;
            }
        }
        if emit.consistency {
            let real = hard_frequency_histogram(&dm, a.hard_frac, a.bins)?;
            let mut rng = RngStream::new(derive_seed(&[seed, STREAM_ANALYSIS_SHUFFLE]));
            let shuf = shuffled_baseline_histogram(&dm, a.hard_frac, a.bins, &mut rng, a.shuffles)?;
            res.push("hard_freq_mean", real.mean);
            res.push("hard_freq_var", real.variance);
            res.push("shuffled_freq_var", shuf.variance);
            res.push("hard_freq_var_ratio", real.variance / shuf.variance);
            if let Some(d) = dir {
                let w = 1.0 / a.bins as f64;
                write_csv(
                    d.join("hard_frequency.csv"),
                    &["bin_lo", "bin_hi", "real", "shuffled"],
                    (0..a.bins).map(|b| {
                        [
                            b as f64 * w,
                            (b + 1) as f64 * w,
                            real.histogram[b],
                            shuf.histogram[b],
                        ]
                    }),
                )?;
            }
        }
    }
    if emit.class_pairs {
        let x = DenseMatrix::from_rows(
            &dataset
                .instances
                .iter()
                .map(|i| &i.features[..])
                .collect::<Vec<_>>(),
        )?;
        let z = encoder.embed_batch(&x)?;
        let embs = dataset
            .instances
            .iter()
            .zip(z.iter_rows())
            .map(|(i, v)| Embedding::new(v.to_vec(), i.instance_id, i.class_label))
            .collect::<Result<Vec<_>>>()?;
        let t = class_pair_mean_dots(&embs)?;
        res.push(
            "class_pair_min",
            t.most_negative.first().map_or(f64::NAN, |p| p.2),
        );
        res.push(
            "class_pair_max",
            t.most_positive.first().map_or(f64::NAN, |p| p.2),
        );
        if let Some(d) = dir {
            let c = t.classes.len();
            write_csv(
                d.join("class_pairs.csv"),
                &["class_a", "class_b", "mean_dot"],
                (0..c).flat_map(|a| {
                    let t = &t;
                    (0..c).map(move |b| {
                        [
                            t.classes[a].to_string(),
                            t.classes[b].to_string(),
                            t.means.get(a, b).to_string(),
                        ]
                    })
                }),
            )?;
            let name = |l: i64| dataset.tree.label_name(l).unwrap_or("?").to_string();
            let mut rows = Vec::new();
            for (table, list) in [
                ("most_negative", &t.most_negative),
                ("most_positive", &t.most_positive),
                ("nearest_zero", &t.nearest_zero),
            ] {
                for (r, &(x, y, v)) in list.iter().enumerate() {
                    rows.push([
                        table.to_string(),
                        (r + 1).to_string(),
                        name(x),
                        name(y),
                        v.to_string(),
                    ]);
                }
            }
            write_csv(
                d.join("class_pair_extremes.csv"),
                &["table", "rank", "class_a", "class_b", "mean_dot"],
                rows,
            )?;
        }
    }
    Ok((probe, res))
}

/// Train, probe and analyse one config. With `dir`, every artifact is
/// written there, including `config.txt` which reproduces the run.
pub fn run_single(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let mut tc = cfg.train.clone();
    tc.encoder.input_dim = dataset.input_dim();
    let artifacts = match dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            let p = d.join("config.txt");
            std::fs::write(&p, cfg.to_text()).map_err(|e| Error::io(&p, e))?;
            Some(TrainArtifacts {
                dir: d.to_path_buf(),
            })
        }
        None => None,
    };
    let out = train(&tc, &dataset, artifacts.as_ref())?;
    let (probe, mut results) = evaluate(
        cfg,
        &dataset,
        &out.state.pair.query,
        &out.state.pair.key,
        dir,
    )?;
    let spe = tc.steps_per_epoch(dataset.len());
    if let (Some(first), Some(last)) = (out.epoch_losses(spe).first(), out.epoch_losses(spe).last())
    {
        results
            .values
            .insert(0, ("first_epoch_loss".into(), *first));
        results.values.insert(1, ("last_epoch_loss".into(), *last));
    }
    if let Some(d) = dir {
        results.write(&d.join("results.csv"))?;
    }
    Ok(RunOutput {
        train: out,
        probe,
        results,
    })
}

/// Status line of a finished run for the manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    pub seed: u64,
    pub status: String,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut s = String::from("name\tpath\tseed\tstatus\n");
    for e in entries {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            e.name,
            e.path.display(),
            e.seed,
            e.status.replace(['\t', '\n'], " ")
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.splitn(4, '\t').collect();
            if f.len() != 4 {
                return Err(Error::MalformedRecord(format!("manifest line {l:?}")));
            }
            Ok(ManifestEntry {
                name: f[0].into(),
                path: f[1].into(),
                seed: f[2]
                    .parse()
                    .map_err(|_| Error::MalformedRecord(format!("manifest seed {:?}", f[2])))?,
                status: f[3].into(),
            })
        })
        .collect()
}
