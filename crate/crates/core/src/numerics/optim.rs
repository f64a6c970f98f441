use super::DenseMatrix;
use crate::{Error, Result};

/// `base_lr · ½ · (1 + cos(π · step / total_steps))`.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64) -> f64 {
    debug_assert!(total_steps >= 1 && step <= total_steps);
    let t = step as f64 / total_steps.max(1) as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    Cosine,
}

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub learning_rate_base: f64,
    pub momentum_coeff: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    pub velocity: Vec<DenseMatrix>,
    pub step_count: usize,
    pub total_steps: usize,
}

impl OptimizerState {
    /// Fresh state with zero velocity shaped like `params`.
    pub fn new(
        params: &[DenseMatrix],
        learning_rate_base: f64,
        momentum_coeff: f64,
        weight_decay: f64,
        schedule: LrSchedule,
        total_steps: usize,
    ) -> Self {
        Self {
            learning_rate_base,
            momentum_coeff,
            weight_decay,
            schedule,
            velocity: params
                .iter()
                .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                .collect(),
            step_count: 0,
            total_steps: total_steps.max(1),
        }
    }

    /// Learning rate the next call to [`sgd_momentum_step`] will use.
    pub fn current_lr(&self) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate_base,
            LrSchedule::Cosine => cosine_lr(
                self.step_count.min(self.total_steps),
                self.total_steps,
                self.learning_rate_base,
            ),
        }
    }
}

/// One update: `v ← μ·v + (g + λ·θ)`, `θ ← θ − lr·v`. Returns the lr used.
pub fn sgd_momentum_step(
    params: &mut [DenseMatrix],
    grads: &[DenseMatrix],
    state: &mut OptimizerState,
) -> Result<f64> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::shape(
            format!("{} parameter tensors", params.len()),
            format!(
                "{} gradients / {} velocities",
                grads.len(),
                state.velocity.len()
            ),
        ));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::shape(
                format!("{:?}", p.shape()),
                format!("{:?}", g.shape()),
            ));
        }
    }
    let lr = state.current_lr();
    let mu = state.momentum_coeff;
    let wd = state.weight_decay;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((theta, grad), vel) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(v.as_mut_slice())
        {
            *vel = mu * *vel + (grad + wd * *theta);
            *theta -= lr * *vel;
        }
    }
    state.step_count += 1;
    Ok(lr)
}
