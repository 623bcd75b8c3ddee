//! The incremental MLP: a query/key projection that attends over buffered
//! segment prototypes (values tied to keys), a context concatenated to the
//! raw input, two shared feed-forward layers and a linear classifier head.
//!
//! Shapes, with `B` the batch size and `W'` the current buffer fill:
//!
//! ```text
//! Q = x·W_q                      B  x d_h
//! K = H·W_k                      W' x d_h      (H = buffered prototypes)
//! α = softmax(Q·Kᵀ / √d_h)       B  x W'
//! c̃ = α·K                        B  x d_h      (zeros when the gate is closed)
//! z = [x ‖ c̃]                    B  x (d_in + d_h)
//! h = relu(relu(z·W_1 + b_1)·W_2 + b_2)
//! p = softmax(h·W_c + b_c)
//! ```
//!
//! Every batch row sees the same buffer, so `K` is projected once per forward
//! pass and shared across the batch. [`attention_context_batched`] computes the
//! same context through the replicated `B x W' x d_h` route.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::FeatureBuffer;
use crate::error::{Error, Result};
use crate::linalg::{
    batched_matmul, matmul, matmul_nt, matmul_tn, relu, relu_backward, softmax_rows, softmax_rows_backward,
    BatchTensor3, Matrix,
};

/// When prototypes enter the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BufferGranularity {
    /// One prototype per completed segment.
    #[default]
    Segment,
    /// One prototype (the batch mean) after every training step.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImlpConfig {
    pub d_in: usize,
    pub d_h: usize,
    pub d_ff: usize,
    pub n_classes: usize,
    pub window: usize,
    pub attention_enabled: bool,
    /// Bias on the second feed-forward layer.
    pub fc2_bias: bool,
    pub normalize_prototypes: bool,
    pub buffer_granularity: BufferGranularity,
}

impl ImlpConfig {
    pub const DEFAULT_D_H: usize = 256;
    pub const DEFAULT_D_FF: usize = 512;
    pub const DEFAULT_WINDOW: usize = 8;

    /// Default architecture for the given input width and class count.
    pub fn new(d_in: usize, n_classes: usize) -> Self {
        Self {
            d_in,
            d_h: Self::DEFAULT_D_H,
            d_ff: Self::DEFAULT_D_FF,
            n_classes,
            window: Self::DEFAULT_WINDOW,
            attention_enabled: true,
            fc2_bias: true,
            normalize_prototypes: true,
            buffer_granularity: BufferGranularity::Segment,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_in", self.d_in),
            ("d_h", self.d_h),
            ("d_ff", self.d_ff),
            ("n_classes", self.n_classes),
            ("window", self.window),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn new_buffer(&self) -> Result<FeatureBuffer> {
        FeatureBuffer::new(self.window, self.d_h)
    }
}

/// Learnable tensors. Biases are stored as `1 x n` matrices. The same struct
/// carries gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ImlpParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_1: Matrix,
    pub b_1: Matrix,
    pub w_2: Matrix,
    pub b_2: Matrix,
    pub w_c: Matrix,
    pub b_c: Matrix,
}

pub const PARAM_NAMES: [&str; 8] = ["w_q", "w_k", "w_1", "b_1", "w_2", "b_2", "w_c", "b_c"];

impl ImlpParams {
    pub fn zeros(config: &ImlpConfig) -> Self {
        let ImlpConfig {
            d_in, d_h, d_ff, n_classes, ..
        } = *config;
        Self {
            w_q: Matrix::zeros(d_in, d_h),
            w_k: Matrix::zeros(d_h, d_h),
            w_1: Matrix::zeros(d_in + d_h, d_ff),
            b_1: Matrix::zeros(1, d_ff),
            w_2: Matrix::zeros(d_ff, d_h),
            b_2: Matrix::zeros(1, d_h),
            w_c: Matrix::zeros(d_h, n_classes),
            b_c: Matrix::zeros(1, n_classes),
        }
    }

    /// He-uniform weights (`U(±√(6/fan_in))`, std `√(2/fan_in)`), zero biases.
    pub fn init(config: &ImlpConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in [&mut p.w_q, &mut p.w_k, &mut p.w_1, &mut p.w_2, &mut p.w_c] {
            let bound = (6.0 / w.rows() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in w.as_mut_slice() {
                *v = dist.sample(&mut rng);
            }
        }
        p
    }

    pub fn tensors(&self) -> [&Matrix; 8] {
        [
            &self.w_q, &self.w_k, &self.w_1, &self.b_1, &self.w_2, &self.b_2, &self.w_c, &self.b_c,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 8] {
        [
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_1,
            &mut self.b_1,
            &mut self.w_2,
            &mut self.b_2,
            &mut self.w_c,
            &mut self.b_c,
        ]
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn check_shapes(&self, config: &ImlpConfig) -> Result<()> {
        let expected = Self::zeros(config);
        for ((name, have), want) in PARAM_NAMES.iter().zip(self.tensors()).zip(expected.tensors()) {
            if have.shape() != want.shape() {
                return Err(Error::shape("ImlpParams", format!("{name} {}", want.shape_str()), have.shape_str()));
            }
        }
        Ok(())
    }
}

/// Intermediates of the attention block.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// Buffered prototypes `H`, `W' x d_h`. Constants for differentiation.
    pub memory: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    /// Unscaled `Q·Kᵀ`, `B x W'`.
    pub scores: Matrix,
    pub alpha: Matrix,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub x: Matrix,
    /// `None` when the attention gate was closed.
    pub attention: Option<AttentionTrace>,
    pub context: Matrix,
    pub z: Matrix,
    pub pre1: Matrix,
    pub act1: Matrix,
    pub pre2: Matrix,
    /// Penultimate features `h`.
    pub h: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
}

impl ForwardTrace {
    pub fn batch(&self) -> usize {
        self.x.rows()
    }

    /// Number of buffered keys attended over (0 with the gate closed).
    pub fn window_fill(&self) -> usize {
        self.attention.as_ref().map_or(0, |a| a.k.rows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<usize>,
    pub probs: Matrix,
}

/// A configured model: architecture plus its current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Imlp {
    pub config: ImlpConfig,
    pub params: ImlpParams,
}

impl Imlp {
    pub fn new(config: ImlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ImlpParams::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ImlpConfig, params: ImlpParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    /// Whether attention contributes for this buffer state.
    pub fn gate_open(&self, buffer: &FeatureBuffer) -> bool {
        self.config.attention_enabled && !buffer.is_empty()
    }

    pub fn forward(&self, x: &Matrix, buffer: &FeatureBuffer) -> Result<ForwardTrace> {
        let cfg = &self.config;
        let p = &self.params;
        if x.cols() != cfg.d_in {
            return Err(Error::shape("forward", format!("d_in = {}", cfg.d_in), x.shape_str()));
        }
        if buffer.dim() != cfg.d_h {
            return Err(Error::shape(
                "forward",
                format!("d_h = {}", cfg.d_h),
                format!("buffer dim {}", buffer.dim()),
            ));
        }
        let batch = x.rows();

        let (attention, context) = if self.gate_open(buffer) {
            let memory = buffer.to_matrix();
            let q = matmul(x, &p.w_q)?;
            let k = matmul(&memory, &p.w_k)?;
            let scores = matmul_nt(&q, &k)?;
            let alpha = softmax_rows(&scores.scale(1.0 / (cfg.d_h as f64).sqrt()));
            let context = matmul(&alpha, &k)?;
            (
                Some(AttentionTrace {
                    memory,
                    q,
                    k,
                    scores,
                    alpha,
                }),
                context,
            )
        } else {
            (None, Matrix::zeros(batch, cfg.d_h))
        };

        let z = x.hconcat(&context)?;
        let mut pre1 = matmul(&z, &p.w_1)?;
        pre1.add_row_broadcast(p.b_1.as_slice());
        let act1 = relu(&pre1);
        let mut pre2 = matmul(&act1, &p.w_2)?;
        if cfg.fc2_bias {
            pre2.add_row_broadcast(p.b_2.as_slice());
        }
        let h = relu(&pre2);
        let mut logits = matmul(&h, &p.w_c)?;
        logits.add_row_broadcast(p.b_c.as_slice());
        let probs = softmax_rows(&logits);

        Ok(ForwardTrace {
            x: x.clone(),
            attention,
            context,
            z,
            pre1,
            act1,
            pre2,
            h,
            logits,
            probs,
        })
    }

    /// Mean cross-entropy of the trace against `labels` and the gradient of
    /// that loss with respect to every parameter. Buffer entries are treated
    /// as constants.
    pub fn loss_and_backward(&self, trace: &ForwardTrace, labels: &[usize]) -> Result<(f64, ImlpParams)> {
        let loss = cross_entropy(&trace.probs, labels)?;
        let cfg = &self.config;
        let p = &self.params;
        let batch = trace.batch();
        let inv_b = 1.0 / batch as f64;
        let mut g = ImlpParams::zeros(cfg);

        // d loss / d logits = (p − onehot(y)) / B
        let mut d_logits = trace.probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            let v = d_logits.get(i, y);
            d_logits.set(i, y, v - 1.0);
        }
        let d_logits = d_logits.scale(inv_b);

        g.w_c = matmul_tn(&trace.h, &d_logits)?;
        g.b_c = d_logits.col_sums();
        let d_h = matmul_nt(&d_logits, &p.w_c)?;

        let d_pre2 = relu_backward(&trace.pre2, &d_h);
        g.w_2 = matmul_tn(&trace.act1, &d_pre2)?;
        if cfg.fc2_bias {
            g.b_2 = d_pre2.col_sums();
        }
        let d_act1 = matmul_nt(&d_pre2, &p.w_2)?;

        let d_pre1 = relu_backward(&trace.pre1, &d_act1);
        g.w_1 = matmul_tn(&trace.z, &d_pre1)?;
        g.b_1 = d_pre1.col_sums();

        if let Some(att) = &trace.attention {
            let d_z = matmul_nt(&d_pre1, &p.w_1)?;
            let d_context = d_z.col_range(cfg.d_in, cfg.d_in + cfg.d_h);

            // context = α·K
            let d_alpha = matmul_nt(&d_context, &att.k)?;
            let mut d_k = matmul_tn(&att.alpha, &d_context)?;
            // α = softmax(scores / √d_h)
            let d_scores = softmax_rows_backward(&att.alpha, &d_alpha).scale(1.0 / (cfg.d_h as f64).sqrt());
            // scores = Q·Kᵀ
            let d_q = matmul(&d_scores, &att.k)?;
            d_k.add_scaled(&matmul_tn(&d_scores, &att.q)?, 1.0);

            g.w_q = matmul_tn(&trace.x, &d_q)?;
            g.w_k = matmul_tn(&att.memory, &d_k)?;
        }

        Ok((loss, g))
    }

    /// Forward pass followed by the loss only.
    pub fn loss(&self, x: &Matrix, buffer: &FeatureBuffer, labels: &[usize]) -> Result<f64> {
        cross_entropy(&self.forward(x, buffer)?.probs, labels)
    }

    pub fn predict(&self, x: &Matrix, buffer: &FeatureBuffer) -> Result<Prediction> {
        let probs = self.forward(x, buffer)?.probs;
        let classes = (0..probs.rows()).map(|r| argmax(probs.row(r))).collect();
        Ok(Prediction { classes, probs })
    }

    /// Detached penultimate activations `h`, `B x d_h`.
    pub fn penultimate_features(&self, x: &Matrix, buffer: &FeatureBuffer) -> Result<Matrix> {
        Ok(self.forward(x, buffer)?.h)
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean over the batch of `−ln p[i, y_i]`.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != probs.rows() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} probability rows", probs.rows()),
            format!("{} labels", labels.len()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("cross_entropy needs at least one row"));
    }
    let n_classes = probs.cols();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::Label { label: y, n_classes });
        }
        total -= probs.get(i, y).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Attention context computed literally on replicated tensors: the buffer is
/// stacked to `B x W' x d_h`, projected per batch slice, scored with a batched
/// product against `Qᵀ`, and aggregated with `αᵀ·K`. Returns `(α, c̃)` as
/// `B x W'` and `B x d_h` matrices.
pub fn attention_context_batched(model: &Imlp, x: &Matrix, buffer: &FeatureBuffer) -> Result<(Matrix, Matrix)> {
    let cfg = &model.config;
    let batch = x.rows();
    let h = buffer.stacked(batch)?;
    let keys = h.matmul_right(&model.params.w_k)?; // B x W' x d_h
    let q = matmul(x, &model.params.w_q)?;
    let q3 = BatchTensor3::from_vec(batch, 1, cfg.d_h, q.into_vec())?;
    let scores = batched_matmul(&keys, &q3.transpose_inner())?; // B x W' x 1
    let fill = buffer.len();
    let scaled = Matrix::from_vec(batch, fill, scores.as_slice().to_vec())?.scale(1.0 / (cfg.d_h as f64).sqrt());
    let alpha = softmax_rows(&scaled);
    let alpha3 = BatchTensor3::from_vec(batch, fill, 1, alpha.as_slice().to_vec())?;
    let context = batched_matmul(&alpha3.transpose_inner(), &keys)?; // B x 1 x d_h
    Ok((alpha, Matrix::from_vec(batch, cfg.d_h, context.as_slice().to_vec())?))
}

/// Forward-pass FLOPs for one batch with `window_fill` buffered keys; a fill
/// of 0 means the gate is closed and no attention work (query included) runs.
///
/// Terms: query `2·B·d_in·d_h`, key projection `2·B·W'·d_h²`, scores
/// `2·B·W'·d_h`, aggregation `2·B·W'·d_h`, and the feed-forward stack
/// `2·B·((d_in+d_h)·d_ff + d_ff·d_h + d_h·C)`.
pub fn flops_per_batch(config: &ImlpConfig, batch: usize, window_fill: usize) -> u64 {
    let b = batch as u64;
    let d_in = config.d_in as u64;
    let d_h = config.d_h as u64;
    let d_ff = config.d_ff as u64;
    let c = config.n_classes as u64;
    let w = window_fill as u64;
    let query = if w > 0 { 2 * b * d_in * d_h } else { 0 };
    let key_projection = 2 * b * w * d_h * d_h;
    let scores = 2 * b * w * d_h;
    let aggregation = 2 * b * w * d_h;
    let mlp = 2 * b * ((d_in + d_h) * d_ff + d_ff * d_h + d_h * c);
    query + key_projection + scores + aggregation + mlp
}

/// Forward + backward is counted as three forward passes.
pub fn training_flops_per_batch(config: &ImlpConfig, batch: usize, window_fill: usize) -> u64 {
    3 * flops_per_batch(config, batch, window_fill)
}
