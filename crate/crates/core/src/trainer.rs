//! Segment-by-segment training of a stream.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{matrix_prototype, FeatureBuffer, PROTOTYPE_EPS};
use crate::energy::{EnergyProvider, Usage};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{balanced_accuracy, log_loss, netscore, SegmentResult, LOG_LOSS_CLIP};
use crate::model::{flops_per_batch, training_flops_per_batch, BufferGranularity, Imlp, ImlpConfig};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::seed::derive_seed;

/// Loss above this (or non-finite) aborts the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Rows per forward pass outside of training.
const INFERENCE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Train on each segment once, carrying parameters and buffer forward.
    #[default]
    Incremental,
    /// Re-initialize and train on every segment seen so far.
    CumulativeRetrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Imlp,
    /// The same network with the attention path switched off.
    PlainMlp,
}

impl ModelKind {
    /// The model configuration actually trained for this kind.
    pub fn effective_config(self, config: &ImlpConfig) -> ImlpConfig {
        match self {
            ModelKind::Imlp => config.clone(),
            ModelKind::PlainMlp => ImlpConfig {
                attention_enabled: false,
                ..config.clone()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs_per_segment: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub mode: TrainMode,
    pub shuffle: bool,
    /// Stop a segment after this many epochs without validation-loss
    /// improvement. Off by default; when on, a seeded tenth of the training
    /// rows is held out for validation.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_per_segment: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 42,
            mode: TrainMode::Incremental,
            shuffle: true,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_per_segment == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs_per_segment and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.patience == Some(0) {
            return Err(Error::InvalidArgument("patience must be >= 1 when set".into()));
        }
        Ok(())
    }
}

/// Encoded rows of one part of a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentData {
    pub x: Matrix,
    pub y: Vec<usize>,
    /// Row identifiers in the source table, for auditing data access.
    pub row_ids: Vec<usize>,
}

impl SegmentData {
    pub fn new(x: Matrix, y: Vec<usize>, row_ids: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() || y.len() != row_ids.len() {
            return Err(Error::shape(
                "SegmentData::new",
                x.shape_str(),
                format!("{} labels, {} row ids", y.len(), row_ids.len()),
            ));
        }
        Ok(Self { x, y, row_ids })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> SegmentData {
        SegmentData {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    pub fn concat(parts: &[&SegmentData]) -> Result<SegmentData> {
        let first = parts.first().ok_or(Error::EmptyInput("nothing to concatenate"))?;
        let cols = first.x.cols();
        let mut data = Vec::new();
        let mut y = Vec::new();
        let mut row_ids = Vec::new();
        for p in parts {
            if p.x.cols() != cols {
                return Err(Error::shape("SegmentData::concat", first.x.shape_str(), p.x.shape_str()));
            }
            data.extend_from_slice(p.x.as_slice());
            y.extend_from_slice(&p.y);
            row_ids.extend_from_slice(&p.row_ids);
        }
        SegmentData::new(Matrix::from_vec(y.len(), cols, data)?, y, row_ids)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub train: SegmentData,
    pub test: SegmentData,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    /// Mean minibatch loss of each epoch, weighted by batch size.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    /// Rows fed through a training step, with repetition.
    pub row_visits: usize,
    /// Distinct source rows read while training.
    pub touched_rows: BTreeSet<usize>,
    pub flops: u64,
    pub stopped_early: bool,
}

fn check_labels(data: &SegmentData, n_classes: usize) -> Result<()> {
    match data.y.iter().find(|&&y| y >= n_classes) {
        Some(&label) => Err(Error::Label { label, n_classes }),
        None => Ok(()),
    }
}

/// Runs `epochs × ⌈n/B⌉` minibatch steps on `data`.
///
/// The buffer is read for attention and left untouched, except under
/// [`BufferGranularity::Batch`], where each step's mean penultimate feature
/// is pushed.
pub fn train_segment(
    model: &mut Imlp,
    opt: &mut OptimizerState,
    buffer: &mut FeatureBuffer,
    data: &SegmentData,
    config: &TrainConfig,
    segment: usize,
) -> Result<TrainStats> {
    if data.is_empty() {
        return Err(Error::EmptySegment(format!("segment {segment} has no training rows")));
    }
    check_labels(data, model.config.n_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, segment as u64));

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut val: Option<SegmentData> = None;
    if config.patience.is_some() && data.len() >= 10 {
        order.shuffle(&mut rng);
        let n_val = data.len() / 10;
        let mut val_idx = order.split_off(data.len() - n_val);
        val_idx.sort_unstable();
        order.sort_unstable();
        val = Some(data.subset(&val_idx));
    }
    let track_batches = model.config.buffer_granularity == BufferGranularity::Batch && model.config.attention_enabled;

    let mut stats = TrainStats::default();
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    for _epoch in 0..config.epochs_per_segment {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = data.x.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.y[i]).collect();
            let trace = model.forward(&x, buffer)?;
            let (loss, grads) = model.loss_and_backward(&trace, &y)?;
            stats.steps += 1;
            if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD {
                return Err(Error::Divergence {
                    segment,
                    step: stats.steps,
                    loss,
                });
            }
            opt.step(&mut model.params, &grads, config.learning_rate);
            stats.flops += training_flops_per_batch(&model.config, chunk.len(), trace.window_fill());
            stats.row_visits += chunk.len();
            stats.touched_rows.extend(chunk.iter().map(|&i| data.row_ids[i]));
            loss_sum += loss * chunk.len() as f64;
            if track_batches {
                buffer.push(&matrix_prototype(&trace.h, model.config.normalize_prototypes, PROTOTYPE_EPS)?)?;
            }
        }
        stats.epoch_losses.push(loss_sum / order.len() as f64);

        if let (Some(patience), Some(v)) = (config.patience, &val) {
            let l = model.loss(&v.x, buffer, &v.y)?;
            stats.flops += flops_per_batch(&model.config, v.len(), buffer.len());
            if l < best_val {
                best_val = l;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    stats.stopped_early = true;
                    break;
                }
            }
        }
    }
    log::debug!(
        target: "imlp::progress",
        "segment={segment} steps={} final_loss={:.6}",
        stats.steps,
        stats.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(stats)
}

/// Pushes the prototype of `data` into the buffer. Returns the FLOPs spent on
/// the extra inference pass.
///
/// A no-op (0 FLOPs) when attention is disabled or prototypes are collected
/// per batch.
pub fn finalize_segment(model: &Imlp, buffer: &mut FeatureBuffer, data: &SegmentData) -> Result<u64> {
    if !model.config.attention_enabled || model.config.buffer_granularity == BufferGranularity::Batch {
        return Ok(0);
    }
    if data.is_empty() {
        return Err(Error::EmptySegment("cannot build a prototype from zero rows".into()));
    }
    let mut sum = vec![0.0; model.config.d_h];
    let mut flops = 0;
    let fill = buffer.len();
    for start in (0..data.len()).step_by(INFERENCE_CHUNK) {
        let idx: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(data.len())).collect();
        let h = model.penultimate_features(&data.x.select_rows(&idx), buffer)?;
        for r in 0..h.rows() {
            for (s, v) in sum.iter_mut().zip(h.row(r)) {
                *s += v;
            }
        }
        flops += flops_per_batch(&model.config, idx.len(), fill);
    }
    let mean = Matrix::row_vector(&sum.iter().map(|s| s / data.len() as f64).collect::<Vec<_>>());
    buffer.push(&matrix_prototype(&mean, model.config.normalize_prototypes, PROTOTYPE_EPS)?)?;
    Ok(flops)
}

/// Class probabilities for `data`, plus the FLOPs spent.
pub fn predict_proba(model: &Imlp, buffer: &FeatureBuffer, x: &Matrix) -> Result<(Matrix, u64)> {
    let mut out = Vec::with_capacity(x.rows() * model.config.n_classes);
    let mut flops = 0;
    for start in (0..x.rows()).step_by(INFERENCE_CHUNK) {
        let idx: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(x.rows())).collect();
        let pred = model.predict(&x.select_rows(&idx), buffer)?;
        out.extend_from_slice(pred.probs.as_slice());
        flops += flops_per_batch(&model.config, idx.len(), buffer.len());
    }
    Ok((Matrix::from_vec(x.rows(), model.config.n_classes, out)?, flops))
}

/// Balanced accuracy, log loss and FLOPs on `data`.
pub fn evaluate(model: &Imlp, buffer: &FeatureBuffer, data: &SegmentData) -> Result<(f64, f64, u64)> {
    if data.is_empty() {
        return Err(Error::EmptySegment("no test rows to evaluate".into()));
    }
    check_labels(data, model.config.n_classes)?;
    let (probs, flops) = predict_proba(model, buffer, &data.x)?;
    let pred: Vec<usize> = (0..probs.rows()).map(|r| crate::model::argmax(probs.row(r))).collect();
    let ba = balanced_accuracy(&data.y, &pred, model.config.n_classes)?;
    let ll = log_loss(&data.y, &probs, LOG_LOSS_CLIP)?;
    Ok((ba, ll, flops))
}

/// Final state and per-segment records of a stream run.
#[derive(Debug, Clone)]
pub struct StreamRun {
    pub results: Vec<SegmentResult>,
    pub stats: Vec<TrainStats>,
    pub model: Imlp,
    pub buffer: FeatureBuffer,
}

/// Trains and evaluates over `stream` in order.
///
/// Each segment's test split is scored with the buffer as it stood during
/// that segment's training, before the segment's own prototype is pushed.
/// Energy for segment `t` covers its training, evaluation and prototype pass.
pub fn run_stream(
    stream: &[Segment],
    kind: ModelKind,
    model_config: &ImlpConfig,
    config: &TrainConfig,
    energy: &EnergyProvider,
) -> Result<StreamRun> {
    if stream.is_empty() {
        return Err(Error::EmptyInput("stream has no segments"));
    }
    config.validate()?;
    energy.validate()?;
    let mcfg = kind.effective_config(model_config);
    mcfg.validate()?;
    for (t, seg) in stream.iter().enumerate() {
        for part in [&seg.train, &seg.test] {
            if part.x.cols() != mcfg.d_in {
                return Err(Error::shape("run_stream", format!("d_in = {}", mcfg.d_in), part.x.shape_str()).in_segment(t + 1));
            }
        }
    }

    let clock = Instant::now();
    let mut model = Imlp::new(mcfg.clone(), config.seed)?;
    let mut opt = OptimizerState::new(config.optimizer, &mcfg);
    let mut buffer = mcfg.new_buffer()?;
    let mut results = Vec::with_capacity(stream.len());
    let mut all_stats = Vec::with_capacity(stream.len());

    for (i, seg) in stream.iter().enumerate() {
        let t = i + 1;
        let start_s = clock.elapsed().as_secs_f64();
        let mut step = || -> Result<(TrainStats, f64, f64, u64, usize)> {
            let cumulative;
            let train_data = match config.mode {
                TrainMode::Incremental => &seg.train,
                TrainMode::CumulativeRetrain => {
                    model = Imlp::new(mcfg.clone(), config.seed)?;
                    opt = OptimizerState::new(config.optimizer, &mcfg);
                    buffer = mcfg.new_buffer()?;
                    let parts: Vec<&SegmentData> = stream[..t].iter().map(|s| &s.train).collect();
                    cumulative = SegmentData::concat(&parts)?;
                    &cumulative
                }
            };
            let stats = train_segment(&mut model, &mut opt, &mut buffer, train_data, config, t)?;
            let (ba, ll, eval_flops) = evaluate(&model, &buffer, &seg.test)?;
            let proto_flops = finalize_segment(&model, &mut buffer, train_data)?;
            Ok((stats, ba, ll, eval_flops + proto_flops, train_data.len()))
        };
        let (stats, ba, ll, inference_flops, train_rows) = step().map_err(|e| e.in_segment(t))?;
        let end_s = clock.elapsed().as_secs_f64();

        let usage = Usage {
            flops: stats.flops + inference_flops,
            start_s,
            end_s,
        };
        let energy_j = energy.energy(&usage).map_err(|e| e.in_segment(t))?;
        let ns = netscore(ba, energy_j).map_err(|e| e.in_segment(t))?;
        if ns.capped {
            log::warn!("segment {t}: energy {energy_j:e} J below the NetScore floor; score capped");
        }
        log::info!(
            target: "imlp::progress",
            "segment={t} epochs={} loss={:.6} balanced_accuracy={ba:.4} energy_j={energy_j:.6} seconds={:.3}",
            stats.epoch_losses.len(),
            stats.epoch_losses.last().copied().unwrap_or(f64::NAN),
            end_s - start_s
        );
        results.push(SegmentResult {
            segment: t,
            balanced_accuracy: ba,
            log_loss: ll,
            energy_j,
            netscore: ns.value,
            netscore_capped: ns.capped,
            train_rows,
            test_rows: seg.test.len(),
            train_flops: stats.flops,
            inference_flops,
            buffer_fill: buffer.len(),
            epoch_losses: stats.epoch_losses.clone(),
            wall_time_s: end_s - start_s,
        });
        all_stats.push(stats);
    }
    Ok(StreamRun {
        results,
        stats: all_stats,
        model,
        buffer,
    })
}
