//! Base network, projection head, and the momentum (key) copy.
//!
//! The base is a stack of affine+ReLU layers ending in the representation the
//! linear probe consumes. The head is affine → ReLU → affine followed by l2
//! normalization, producing the contrastive-space embedding. Parameters live
//! in one ordered list of tensors `[W0, b0, W1, b1, ...]` (base layers first,
//! then head layers), which is also the order used by the optimizer, EMA and
//! the checkpoint file.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use crate::numerics::{dot, DenseMatrix, RngStream, Transpose, NORM_TOLERANCE};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub base_hidden_dims: Vec<usize>,
    pub repr_dim: usize,
    pub head_hidden_dim: usize,
    pub embed_dim: usize,
    /// EMA coefficient for the key encoder.
    pub momentum: f64,
}

impl EncoderConfig {
    pub fn with_input_dim(input_dim: usize) -> Self {
        Self {
            input_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.input_dim >= 1
            && self.repr_dim >= 1
            && self.head_hidden_dim >= 1
            && self.embed_dim >= 1
            && self.base_hidden_dims.iter().all(|&d| d >= 1);
        if !dims_ok {
            return Err(Error::Config(format!(
                "encoder dims must all be >= 1: {self:?}"
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "encoder momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, base then head.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.base_hidden_dims);
        widths.push(self.repr_dim);
        widths.push(self.head_hidden_dim);
        widths.push(self.embed_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn base_layer_count(&self) -> usize {
        self.base_hidden_dims.len() + 1
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 64,
            base_hidden_dims: vec![256, 256],
            repr_dim: 128,
            head_hidden_dim: 256,
            embed_dim: 64,
            momentum: 0.999,
        }
    }
}

/// Weights and biases for base and head.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    config: EncoderConfig,
    tensors: Vec<DenseMatrix>,
}

impl EncoderParams {
    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn init(config: &EncoderConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut tensors = Vec::new();
        for (fan_in, fan_out) in config.layer_dims() {
            let bound = (6.0 / fan_in as f64).sqrt();
            tensors.push(DenseMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.uniform_range(-bound, bound)
            }));
            tensors.push(DenseMatrix::zeros(1, fan_out));
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn zeros(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .layer_dims()
            .into_iter()
            .flat_map(|(i, o)| [DenseMatrix::zeros(o, i), DenseMatrix::zeros(1, o)])
            .collect();
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    /// Rebuild from tensors in declared order, checking every shape.
    pub fn from_tensors(config: &EncoderConfig, tensors: Vec<DenseMatrix>) -> Result<Self> {
        config.validate()?;
        let expected = Self::zeros(config)?;
        if expected.tensors.len() != tensors.len() {
            return Err(Error::shape(
                format!("{} tensors", expected.tensors.len()),
                tensors.len(),
            ));
        }
        for (e, t) in expected.tensors.iter().zip(&tensors) {
            if e.shape() != t.shape() {
                return Err(Error::shape(
                    format!("{:?}", e.shape()),
                    format!("{:?}", t.shape()),
                ));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite("encoder parameter".into()));
            }
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[DenseMatrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.tensors
    }

    pub fn layer_count(&self) -> usize {
        self.tensors.len() / 2
    }

    pub fn weight(&self, layer: usize) -> &DenseMatrix {
        &self.tensors[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &DenseMatrix {
        &self.tensors[2 * layer + 1]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut DenseMatrix {
        &mut self.tensors[2 * layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut DenseMatrix {
        &mut self.tensors[2 * layer + 1]
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(self.param_count(), flat.len()));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.as_slice().len();
            t.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Whether layer `l` is followed by a ReLU. Only the final head layer is not.
    fn has_relu(&self, layer: usize) -> bool {
        layer + 1 != self.layer_count()
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::shape(
                format!("{} input features", self.config.input_dim),
                x.cols(),
            ));
        }
        Ok(())
    }

    fn affine(&self, layer: usize, input: &DenseMatrix) -> Result<DenseMatrix> {
        let w = self.weight(layer);
        let mut z = DenseMatrix::zeros(input.rows(), w.rows());
        z.gemm(1.0, input, Transpose::No, w, Transpose::Yes, 0.0)?;
        let b = self.bias(layer).as_slice();
        for r in 0..z.rows() {
            for (v, bb) in z.row_mut(r).iter_mut().zip(b) {
                *v += bb;
            }
        }
        Ok(z)
    }

    /// Base representations for a batch (one row per input).
    pub fn forward_base_batch(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in 0..self.config.base_layer_count() {
            h = self.affine(l, &h)?;
            relu_in_place(&mut h);
        }
        Ok(h)
    }

    /// Full forward pass, keeping what backward needs.
    pub fn forward_batch(&self, x: &DenseMatrix) -> Result<ForwardCache> {
        self.check_input(x)?;
        let n_layers = self.layer_count();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut h = x.clone();
        for l in 0..n_layers {
            let z = self.affine(l, &h)?;
            inputs.push(h);
            h = z.clone();
            if self.has_relu(l) {
                relu_in_place(&mut h);
            }
            pre.push(z);
        }
        let mut norms = Vec::with_capacity(h.rows());
        let mut embed = h.clone();
        for r in 0..embed.rows() {
            let row = embed.row_mut(r);
            let n = dot(row, row).sqrt();
            if !n.is_finite() {
                return Err(Error::NonFinite("head output".into()));
            }
            if n <= NORM_TOLERANCE {
                return Err(Error::ZeroVector { norm: n });
            }
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        Ok(ForwardCache {
            base_layers: self.config.base_layer_count(),
            inputs,
            pre,
            norms,
            embed,
        })
    }

    /// Parameter gradients summed over the batch, given `∂L/∂embedding` rows.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: &DenseMatrix,
    ) -> Result<Gradients> {
        let b = cache.embed.rows();
        if upstream.shape() != (b, self.config.embed_dim) {
            return Err(Error::shape(
                format!("{b}x{} upstream gradient", self.config.embed_dim),
                format!("{:?}", upstream.shape()),
            ));
        }
        // through normalization: (I − u uᵀ) g / ‖h‖
        let mut delta = upstream.clone();
        for r in 0..b {
            let u = cache.embed.row(r);
            let g = delta.row_mut(r);
            let ug = dot(u, g);
            let inv = 1.0 / cache.norms[r];
            for (gi, ui) in g.iter_mut().zip(u) {
                *gi = (*gi - ui * ug) * inv;
            }
        }
        let n_layers = self.layer_count();
        let mut grads: Vec<DenseMatrix> = vec![DenseMatrix::zeros(0, 0); 2 * n_layers];
        for l in (0..n_layers).rev() {
            if self.has_relu(l) {
                let z = &cache.pre[l];
                for (d, zv) in delta.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if *zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let w = self.weight(l);
            let mut dw = DenseMatrix::zeros(w.rows(), w.cols());
            dw.gemm(
                1.0,
                &delta,
                Transpose::Yes,
                &cache.inputs[l],
                Transpose::No,
                0.0,
            )?;
            grads[2 * l] = dw;
            grads[2 * l + 1] = DenseMatrix::row_vector(delta.column_sums());
            if l > 0 {
                let mut dx = DenseMatrix::zeros(b, w.cols());
                dx.gemm(1.0, &delta, Transpose::No, w, Transpose::No, 0.0)?;
                delta = dx;
            }
        }
        Ok(Gradients { tensors: grads })
    }

    /// Representation (base output, un-normalized) for one input.
    pub fn forward_base(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = DenseMatrix::row_vector(x.to_vec());
        Ok(self.forward_base_batch(&m)?.into_vec())
    }

    /// Head applied to a representation, l2-normalized.
    pub fn forward_head(&self, repr: &[f64]) -> Result<Vec<f64>> {
        if repr.len() != self.config.repr_dim {
            return Err(Error::shape(self.config.repr_dim, repr.len()));
        }
        let mut h = DenseMatrix::row_vector(repr.to_vec());
        for l in self.config.base_layer_count()..self.layer_count() {
            h = self.affine(l, &h)?;
            if self.has_relu(l) {
                relu_in_place(&mut h);
            }
        }
        crate::numerics::l2_normalize(h.as_slice())
    }

    /// Contrastive embedding for one input.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_head(&self.forward_base(x)?)
    }

    /// Contrastive embeddings for a batch.
    pub fn embed_batch(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_batch(x)?.embed)
    }

    /// Parameter gradients for one input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let cache = self.forward_batch(&DenseMatrix::row_vector(x.to_vec()))?;
        self.backward_batch(&cache, &DenseMatrix::row_vector(upstream.to_vec()))
    }
}

fn relu_in_place(m: &mut DenseMatrix) {
    m.as_mut_slice().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}

/// Activations saved by [`EncoderParams::forward_batch`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    base_layers: usize,
    /// Input to each layer; `inputs[0]` is the raw batch.
    inputs: Vec<DenseMatrix>,
    /// Pre-activation output of each layer.
    pre: Vec<DenseMatrix>,
    /// Norm of each head output row before normalization.
    norms: Vec<f64>,
    pub embed: DenseMatrix,
}

impl ForwardCache {
    /// Base-network representations (input to the first head layer).
    pub fn representations(&self) -> &DenseMatrix {
        &self.inputs[self.base_layers]
    }

    pub fn head_norms(&self) -> &[f64] {
        &self.norms
    }
}

/// Gradients shaped like [`EncoderParams::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<DenseMatrix>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.as_slice().iter().all(|&v| v == 0.0))
    }
}

/// Trained query encoder and its moving-average key encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderPair {
    pub query: EncoderParams,
    pub key: EncoderParams,
}

impl EncoderPair {
    /// Key encoder starts as an exact copy of the query encoder.
    pub fn init(config: &EncoderConfig, rng: &mut RngStream) -> Result<Self> {
        let query = EncoderParams::init(config, rng)?;
        Ok(Self {
            key: query.clone(),
            query,
        })
    }

    pub fn from_query(query: EncoderParams) -> Self {
        Self {
            key: query.clone(),
            query,
        }
    }

    /// `θ_k ← m·θ_k + (1−m)·θ_q` for every parameter.
    ///
    /// Computed as `θ_k + (1−m)(θ_q − θ_k)` so that equal encoders stay
    /// bit-identical; `m = 0` copies the query encoder exactly.
    pub fn ema_update(&mut self, m: f64) {
        debug_assert!((0.0..1.0).contains(&m));
        if m == 0.0 {
            self.key = self.query.clone();
            return;
        }
        let step = 1.0 - m;
        for (k, q) in self.key.tensors.iter_mut().zip(&self.query.tensors) {
            for (kv, qv) in k.as_mut_slice().iter_mut().zip(q.as_slice()) {
                *kv += step * (qv - *kv);
            }
        }
    }
}

#[cfg(test)]
mod tests;
