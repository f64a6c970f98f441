//! Contrastive pre-training loop.
//!
//! Each step runs, in this order: two augmented views per instance; view A
//! through the query encoder and view B through the key encoder; per-query
//! ranking of the active queue, policy selection and InfoNCE; the mean
//! gradient backpropagated through the query encoder only; SGD; EMA of the
//! key encoder; enqueue of the batch's positives.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::contrastive::{
    info_nce_weights, init_queue, rank_order, select, ContrastiveConfig, Embedding, NegativeQueue,
    Selection,
};
use crate::data::{augment, AugmentConfig, Dataset, Instance};
use crate::encoder::{save_checkpoint, Checkpoint, EncoderConfig, EncoderPair, EncoderParams};
use crate::numerics::{
    derive_seed, dot, sgd_momentum_step, DenseMatrix, LrSchedule, OptimizerState, RngStream,
    Transpose,
};
use crate::{Error, Result};

const STREAM_INIT: u64 = 1;
const STREAM_QUEUE: u64 = 2;
const STREAM_AUGMENT: u64 = 3;
const STREAM_SHUFFLE: u64 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.03,
            momentum: 0.9,
            weight_decay: 1e-4,
            schedule: LrSchedule::Cosine,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub contrastive: ContrastiveConfig,
    pub encoder: EncoderConfig,
    pub optim: OptimConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 64,
            contrastive: ContrastiveConfig::default(),
            encoder: EncoderConfig::default(),
            optim: OptimConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.contrastive.validate()?;
        if self.batch_size == 0 || self.batch_size > self.contrastive.queue_capacity {
            return Err(Error::Config(format!(
                "batch_size must be in 1..={} (queue capacity), got {}",
                self.contrastive.queue_capacity, self.batch_size
            )));
        }
        let o = &self.optim;
        if !(o.lr >= 0.0 && o.lr.is_finite())
            || !(0.0..1.0).contains(&o.momentum)
            || !o.weight_decay.is_finite()
            || o.weight_decay < 0.0
        {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Telemetry for one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    /// Mean InfoNCE over the batch.
    pub loss: f64,
    /// Negatives each query was contrasted against (replacements included).
    pub retained_counts: Vec<usize>,
    /// Batch-mean dot product at the hardest and easiest rank of the policy
    /// band; absent for the identity policy.
    pub band_edges: Option<(f64, f64)>,
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "step,loss,retained_counts,band_edges,lr";

impl StepRecord {
    /// CSV line; list fields are `;`-joined, an absent band is empty.
    pub fn csv_line(&self) -> String {
        let counts: Vec<String> = self.retained_counts.iter().map(|c| c.to_string()).collect();
        let edges = self
            .band_edges
            .map_or(String::new(), |(a, b)| format!("{a};{b}"));
        format!(
            "{},{},{},{},{}",
            self.step,
            self.loss,
            counts.join(";"),
            edges,
            self.lr
        )
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub pair: EncoderPair,
    pub optimizer: OptimizerState,
    pub queue: NegativeQueue,
    /// Root stream; all randomness is derived from its seed, so it never advances.
    pub rng: RngStream,
    pub global_step: u64,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, total_steps: usize) -> Result<Self> {
        cfg.validate()?;
        let pair = EncoderPair::init(
            &cfg.encoder,
            &mut RngStream::new(derive_seed(&[cfg.seed, STREAM_INIT])),
        )?;
        let optimizer = OptimizerState::new(
            pair.query.tensors(),
            cfg.optim.lr,
            cfg.optim.momentum,
            cfg.optim.weight_decay,
            cfg.optim.schedule,
            total_steps,
        );
        let queue = init_queue(
            cfg.contrastive.queue_capacity,
            cfg.contrastive.reserve,
            cfg.encoder.embed_dim,
            &mut RngStream::new(derive_seed(&[cfg.seed, STREAM_QUEUE])),
        );
        Ok(Self {
            pair,
            optimizer,
            queue,
            rng: RngStream::new(cfg.seed),
            global_step: 0,
            epoch: 0,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            pair: self.pair.clone(),
            optimizer: self.optimizer.clone(),
            rng: self.rng.clone(),
            global_step: self.global_step,
        }
    }
}

/// Augmented view `view` of `inst` in `epoch`, from its own substream.
pub fn view(inst: &Instance, cfg: &TrainConfig, view: u64, epoch: usize) -> Vec<f64> {
    let mut rng = RngStream::new(derive_seed(&[
        cfg.seed,
        STREAM_AUGMENT,
        inst.instance_id as u64,
        view,
        epoch as u64,
    ]));
    augment(&inst.features, &cfg.augment, &mut rng)
}

fn stack(rows: Vec<Vec<f64>>) -> Result<DenseMatrix> {
    DenseMatrix::from_rows(&rows)
}

/// Output of the contrastive part of a step.
pub(crate) struct Contrast {
    /// `∂(mean loss)/∂q`, one row per query.
    pub upstream: DenseMatrix,
    pub loss_sum: f64,
    pub retained_counts: Vec<usize>,
    pub band_edges: Option<(f64, f64)>,
}

/// Rank the active queue for every query, apply the policy, and assemble
/// losses and query gradients. Only the active region is ranked; the reserve
/// only supplies replacements.
pub(crate) fn contrast_batch(
    q: &DenseMatrix,
    keys: &DenseMatrix,
    queue: &NegativeQueue,
    batch: &[&Instance],
    cfg: &ContrastiveConfig,
) -> Result<Contrast> {
    let tau = cfg.temperature;
    let policy = &cfg.policy;
    let b = q.rows();
    let active = queue.active();
    let reserve = queue.reserve();
    let labels: Vec<i64> = active.iter().map(|e| e.class_label).collect();
    let dots = DenseMatrix::product(q, Transpose::No, &queue.active_matrix(), Transpose::Yes)?;
    let mut upstream = DenseMatrix::zeros(b, q.cols());
    let mut loss_sum = 0.0;
    let mut retained_counts = Vec::with_capacity(b);
    let mut edge_sum = (0.0, 0.0);
    let identity = policy.is_identity();
    let n = active.len();
    let (band_start, band_end) = policy.band.rank_interval(n);
    for (i, inst) in batch.iter().enumerate() {
        let qi = q.row(i);
        let row = dots.row(i);
        let sel = if identity {
            Selection {
                retained: (0..n).collect(),
                ..Selection::default()
            }
        } else {
            let clamped: Vec<f64> = row.iter().map(|d| d.clamp(-1.0, 1.0)).collect();
            let order = rank_order(&clamped, |j| active[j].age);
            if band_end > band_start {
                edge_sum.0 += clamped[order[band_start]];
                edge_sum.1 += clamped[order[band_end - 1]];
            }
            select(&order, &labels, inst.class_label, policy, reserve.len())?
        };
        let negs: Vec<&[f64]> = sel
            .retained
            .iter()
            .map(|&j| &active[j].vector[..])
            .chain(sel.replacements.iter().map(|&r| &reserve[r].vector[..]))
            .collect();
        let neg_dots: Vec<f64> = sel
            .retained
            .iter()
            .map(|&j| row[j])
            .chain(
                sel.replacements
                    .iter()
                    .map(|&r| dot(qi, &reserve[r].vector)),
            )
            .collect();
        let kp = keys.row(i);
        let w = info_nce_weights(dot(qi, kp), &neg_dots, tau);
        loss_sum += w.loss;
        retained_counts.push(sel.len());

        // ∂L/∂q = (Σ_j w_j n_j + w₊ k₊ − k₊) / τ, averaged over the batch
        let scale = 1.0 / (tau * b as f64);
        let g = upstream.row_mut(i);
        for (gd, kd) in g.iter_mut().zip(kp) {
            *gd = (w.positive - 1.0) * kd;
        }
        for (wj, nj) in w.negatives.iter().zip(&negs) {
            for (gd, nd) in g.iter_mut().zip(nj.iter()) {
                *gd += wj * nd;
            }
        }
        g.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(Contrast {
        upstream,
        loss_sum,
        retained_counts,
        band_edges: (!identity && band_end > band_start)
            .then(|| (edge_sum.0 / b as f64, edge_sum.1 / b as f64)),
    })
}

/// One optimizer step on `batch`.
pub fn train_step(
    state: &mut TrainState,
    batch: &[&Instance],
    cfg: &TrainConfig,
) -> Result<StepRecord> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if batch.len() > cfg.contrastive.queue_capacity {
        return Err(Error::BatchTooLarge {
            batch: batch.len(),
            capacity: cfg.contrastive.queue_capacity,
        });
    }
    let b = batch.len();

    // (1) views
    let xa = stack(batch.iter().map(|i| view(i, cfg, 0, state.epoch)).collect())?;
    let xb = stack(batch.iter().map(|i| view(i, cfg, 1, state.epoch)).collect())?;

    // (2) encoders
    let cache = state.pair.query.forward_batch(&xa)?;
    let keys = state.pair.key.embed_batch(&xb)?;
    let q = &cache.embed;

    // (3) per-query selection and loss
    let c = contrast_batch(q, &keys, &state.queue, batch, &cfg.contrastive)?;
    if !c.loss_sum.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss at step {}",
            state.global_step
        )));
    }

    // (4) backward through the query encoder, (5) SGD
    let grads = state.pair.query.backward_batch(&cache, &c.upstream)?;
    let lr = sgd_momentum_step(
        state.pair.query.tensors_mut(),
        &grads.tensors,
        &mut state.optimizer,
    )?;

    // (6) EMA
    state.pair.ema_update(cfg.encoder.momentum);

    // (7) enqueue positives
    let batch_keys = batch
        .iter()
        .enumerate()
        .map(|(i, inst)| Embedding::new(keys.row(i).to_vec(), inst.instance_id, inst.class_label))
        .collect::<Result<Vec<_>>>()?;
    state.queue.enqueue(batch_keys)?;

    let record = StepRecord {
        step: state.global_step,
        loss: c.loss_sum / b as f64,
        retained_counts: c.retained_counts,
        band_edges: c.band_edges,
        lr,
    };
    state.global_step += 1;
    Ok(record)
}

/// Seeded permutation of `0..n` for `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = RngStream::new(derive_seed(&[seed, STREAM_SHUFFLE, epoch as u64]));
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.below(i + 1));
    }
    order
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub state: TrainState,
    pub records: Vec<StepRecord>,
}

impl TrainOutput {
    pub fn pair(&self) -> &EncoderPair {
        &self.state.pair
    }

    pub fn query_encoder(&self) -> &EncoderParams {
        &self.state.pair.query
    }

    /// Mean step loss of every epoch.
    pub fn epoch_losses(&self, steps_per_epoch: usize) -> Vec<f64> {
        self.records
            .chunks(steps_per_epoch.max(1))
            .map(|c| c.iter().map(|r| r.loss).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// Where `train` persists artifacts. Paths are created if missing.
#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub dir: PathBuf,
}

impl TrainArtifacts {
    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }

    pub fn checkpoint_path(&self, epoch: usize) -> PathBuf {
        self.dir
            .join("checkpoints")
            .join(format!("epoch_{epoch:04}.ckpt"))
    }

    pub fn final_checkpoint_path(&self) -> PathBuf {
        self.dir.join("checkpoints").join("final.ckpt")
    }
}

fn write_metrics(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Run `epochs × ⌈n / batch_size⌉` steps, reshuffling every epoch.
pub fn train(
    cfg: &TrainConfig,
    dataset: &Dataset,
    artifacts: Option<&TrainArtifacts>,
) -> Result<TrainOutput> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    if dataset.input_dim() != cfg.encoder.input_dim {
        return Err(Error::shape(cfg.encoder.input_dim, dataset.input_dim()));
    }
    let steps_per_epoch = cfg.steps_per_epoch(dataset.len());
    let mut state = TrainState::new(cfg, cfg.epochs * steps_per_epoch)?;
    if let Some(a) = artifacts {
        let dir = a.dir.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut records = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    for epoch in 0..cfg.epochs {
        state.epoch = epoch;
        let order = epoch_order(dataset.len(), cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Instance> = chunk.iter().map(|&i| &dataset.instances[i]).collect();
            records.push(train_step(&mut state, &batch, cfg)?);
        }
        if let Some(a) = artifacts {
            if cfg.snapshot_every > 0 && (epoch + 1) % cfg.snapshot_every == 0 {
                save_checkpoint(&state.checkpoint(), a.checkpoint_path(epoch + 1))?;
            }
        }
    }
    state.epoch = cfg.epochs;
    if let Some(a) = artifacts {
        save_checkpoint(&state.checkpoint(), a.final_checkpoint_path())?;
        write_metrics(&a.metrics_path(), &records)?;
    }
    Ok(TrainOutput { state, records })
}
