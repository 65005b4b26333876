//! Cross-entropy training of [`Model`]s: gradients, optimizers, metrics.
//!
//! Rotation-parameter gradients use parameter-shift rules on the circuit's
//! measured distribution, chained with the closed-form softmax/head gradient.
//! Uncontrolled RY/RZ gates use the two-term rule
//! `∂f = ½[f(θ+π/2) − f(θ−π/2)]`. Controlled rotations have generator
//! eigenvalues `{0, ±½}` and need the four-term rule
//! `∂f = d₁[f(θ+π/2) − f(θ−π/2)] − d₂[f(θ+3π/2) − f(θ−3π/2)]`,
//! `d₁ = (√2+1)/(4√2)`, `d₂ = (√2−1)/(4√2)`.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frqi::AngleImage;
use crate::model::{softmax, Model, ModelError, ParamVector, ParametricOp};
use crate::qsim::StateVector;

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence {
        epoch: usize,
        batch: usize,
        /// Metrics of the epochs completed before the divergence.
        partial: Box<RunMetrics>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

/// One labelled input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub angles: AngleImage,
    pub label: usize,
}

/// `−ln max(probs[label], 1e-12)`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(TrainError::LabelOutOfRange {
        label,
        num_classes: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradientMode {
    ParameterShift,
    /// Central differences with step `h` over the dense forward pass.
    FiniteDifference { h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub shuffle: bool,
    /// Learning rate for the classical head; `None` uses the optimizer's rate for every parameter.
    #[serde(default)]
    pub head_lr: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::adam(0.01),
            batch_size: 32,
            epochs: 10,
            seed: 0,
            gradient_mode: GradientMode::ParameterShift,
            shuffle: true,
            head_lr: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for lr in std::iter::once(self.optimizer.lr()).chain(self.head_lr) {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(TrainError::InvalidConfig(format!("learning rate must be positive, got {lr}")));
            }
        }
        if self.batch_size < 1 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs < 1 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if let GradientMode::FiniteDifference { h } = self.gradient_mode {
            if !(h > 0.0) {
                return Err(TrainError::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    /// Parameters from this index on use `tail_lr`.
    tail: Option<(usize, f64)>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Self {
        Self {
            config,
            tail: None,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    /// Uses learning rate `lr` for parameters `first..`.
    pub fn with_tail_lr(mut self, first: usize, lr: f64) -> Self {
        self.tail = Some((first, lr));
        self
    }

    fn lr_at(&self, i: usize) -> f64 {
        match self.tail {
            Some((first, lr)) if i >= first => lr,
            _ => self.config.lr(),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.config {
            OptimizerConfig::Sgd { .. } => {
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    *p -= self.lr_at(i) * g;
                }
            }
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t);
                let bc2 = 1.0 - beta2.powi(self.t);
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    let lr = self.lr_at(i);
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                }
            }
        }
    }
}

/// `(shift, coefficient)` pairs whose weighted sum of shifted evaluations is the exact derivative.
fn shift_rule(op: &ParametricOp) -> &'static [(f64, f64)] {
    const TWO_TERM: [(f64, f64); 2] = [(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)];
    const D1: f64 = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
    const D2: f64 = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
    const FOUR_TERM: [(f64, f64); 4] = [
        (FRAC_PI_2, D1),
        (-FRAC_PI_2, -D1),
        (3.0 * FRAC_PI_2, -D2),
        (-3.0 * FRAC_PI_2, D2),
    ];
    if op.op.controls.is_empty() {
        &TWO_TERM
    } else {
        &FOUR_TERM
    }
}

fn weighted_probability(state: &StateVector, weights: &[f64]) -> f64 {
    state
        .amplitudes()
        .iter()
        .zip(weights)
        .map(|(a, w)| w * a.norm_sqr())
        .sum()
}

/// Adds `∂/∂θ Σ_i weights[i] · |⟨i|U(θ)|start⟩|²` into `grad` for every circuit parameter.
///
/// Walks the circuit once; each trainable gate's prefix state is kept and its
/// shifted suffixes are evaluated in parallel chunks. Results are reduced in
/// gate order, so the sum does not depend on the thread count.
fn accumulate_shift_gradient(model: &Model, params: &[f64], start: StateVector, weights: &[f64], grad: &mut [f64]) {
    let circuit = model.circuit();
    let chunk = 8 * rayon::current_num_threads();
    let mut pending: Vec<(usize, StateVector)> = Vec::with_capacity(chunk);
    let flush = |pending: &mut Vec<(usize, StateVector)>, grad: &mut [f64]| {
        let values: Vec<f64> = pending
            .par_iter()
            .map(|(g, prefix)| {
                let gate = &circuit[*g];
                shift_rule(gate)
                    .iter()
                    .map(|&(shift, coef)| {
                        let mut s = prefix.clone();
                        gate.apply(&mut s, params, shift);
                        for rest in &circuit[g + 1..] {
                            rest.apply(&mut s, params, 0.0);
                        }
                        coef * weighted_probability(&s, weights)
                    })
                    .sum()
            })
            .collect();
        for ((g, _), v) in pending.drain(..).zip(values) {
            grad[circuit[g].param.expect("trainable gate")] += v;
        }
    };
    let mut state = start;
    for (g, gate) in circuit.iter().enumerate() {
        if gate.param.is_some() {
            pending.push((g, state.clone()));
            if pending.len() == chunk {
                flush(&mut pending, grad);
            }
        }
        gate.apply(&mut state, params, 0.0);
    }
    flush(&mut pending, grad);
}

/// Batch-mean loss and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub values: Vec<f64>,
}

fn check_batch(model: &Model, params: &[f64], batch: &[&Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    model.check_params(params)?;
    let num_classes = model.config().num_classes;
    for s in batch {
        model.check_image(&s.angles)?;
        if s.label >= num_classes {
            return Err(TrainError::LabelOutOfRange {
                label: s.label,
                num_classes,
            });
        }
    }
    Ok(())
}

/// Mean over `batch` of `∂ cross_entropy(forward(x), y) / ∂params`.
pub fn gradient(model: &Model, params: &[f64], batch: &[Sample], mode: GradientMode) -> Result<Gradient> {
    let refs: Vec<&Sample> = batch.iter().collect();
    batch_gradient(model, params, &refs, mode)
}

pub fn batch_gradient(model: &Model, params: &[f64], batch: &[&Sample], mode: GradientMode) -> Result<Gradient> {
    check_batch(model, params, batch)?;
    match mode {
        GradientMode::ParameterShift => Ok(parameter_shift_gradient(model, params, batch)),
        GradientMode::FiniteDifference { h } => finite_difference_gradient(model, params, batch, h),
    }
}

/// Head-side quantities for one sample: loss, head gradient contribution, and
/// the loss gradient with respect to the memory distribution.
fn head_backward(model: &Model, params: &[f64], memory_dist: &[f64], label: usize, head_grad: &mut [f64]) -> (f64, Vec<f64>) {
    let config = model.config();
    let features = model.readout(memory_dist);
    let probs = softmax(&model.logits(params, &features));
    let loss = -probs[label].max(PROB_FLOOR).ln();
    // Clamping makes the loss flat below the floor.
    let clamped = probs[label] < PROB_FLOOR;
    let dz: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(c, p)| if clamped { 0.0 } else { p - f64::from(u8::from(c == label)) })
        .collect();
    let fd = config.feature_dim();
    for (c, d) in dz.iter().enumerate() {
        for (k, f) in features.iter().enumerate() {
            head_grad[c * fd + k] += d * f;
        }
    }
    if config.head.bias {
        let offset = config.num_classes * fd;
        for (c, d) in dz.iter().enumerate() {
            head_grad[offset + c] += d;
        }
    }
    let weights = model.head_weights(params);
    let dfeat: Vec<f64> = (0..fd)
        .map(|k| dz.iter().enumerate().map(|(c, d)| d * weights[c * fd + k]).sum())
        .collect();
    (loss, model.readout_adjoint(&dfeat))
}

fn parameter_shift_gradient(model: &Model, params: &[f64], batch: &[&Sample]) -> Gradient {
    let pqc = model.param_count().pqc;
    let mut values = vec![0.0; model.num_params()];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let frqi_dim = 1usize << model.config().frqi_qubits();
    let memory_dim = 1usize << model.config().memory_qubits;

    if let Some(transfer) = model.transfer_matrix(params).expect("checked params") {
        // Loss depends on the circuit only through the transfer matrix, so one
        // weighted observable covers the whole batch.
        let mut weights = vec![0.0; frqi_dim * memory_dim];
        for s in batch {
            let p = s.angles.basis_probabilities();
            let dist = transfer.memory_distribution(&p);
            let (l, ddist) = head_backward(model, params, &dist, s.label, &mut values[pqc..]);
            loss += l;
            for (row, dd) in weights.chunks_exact_mut(frqi_dim).zip(&ddist) {
                for (w, pj) in row.iter_mut().zip(&p) {
                    *w += dd * pj;
                }
            }
        }
        weights.iter_mut().for_each(|w| *w *= scale);
        accumulate_shift_gradient(model, params, model.transfer_seed_state(), &weights, &mut values);
    } else {
        for s in batch {
            let state = model.final_state(params, &s.angles).expect("checked inputs");
            let dist = state
                .probabilities(&model.config().memory_qubit_indices())
                .expect("memory qubits are valid");
            let (l, ddist) = head_backward(model, params, &dist, s.label, &mut values[pqc..]);
            loss += l;
            let weights: Vec<f64> = ddist
                .iter()
                .flat_map(|dd| std::iter::repeat(dd * scale).take(frqi_dim))
                .collect();
            accumulate_shift_gradient(model, params, model.initial_state(&s.angles), &weights, &mut values);
        }
    }
    values[pqc..].iter_mut().for_each(|g| *g *= scale);
    Gradient {
        loss: loss * scale,
        values,
    }
}

/// Batch-mean loss through the dense statevector forward pass.
pub fn batch_loss(model: &Model, params: &[f64], batch: &[&Sample]) -> Result<f64> {
    let losses = batch
        .par_iter()
        .map(|s| cross_entropy(&model.forward(params, &s.angles)?, s.label))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

fn finite_difference_gradient(model: &Model, params: &[f64], batch: &[&Sample], h: f64) -> Result<Gradient> {
    let loss = batch_loss(model, params, batch)?;
    let mut shifted = params.to_vec();
    let mut values = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        shifted[i] = params[i] + h;
        let up = batch_loss(model, &shifted, batch)?;
        shifted[i] = params[i] - h;
        let down = batch_loss(model, &shifted, batch)?;
        shifted[i] = params[i];
        values.push((up - down) / (2.0 * h));
    }
    Ok(Gradient { loss, values })
}

/// Class probabilities for every sample, in input order.
pub fn predict(model: &Model, params: &[f64], samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    model.check_params(params)?;
    for s in samples {
        model.check_image(&s.angles)?;
    }
    if let Some(transfer) = model.transfer_matrix(params)? {
        Ok(samples
            .par_iter()
            .map(|s| {
                let dist = transfer.memory_distribution(&s.angles.basis_probabilities());
                softmax(&model.logits(params, &model.readout(&dist)))
            })
            .collect())
    } else {
        samples
            .par_iter()
            .map(|s| model.forward(params, &s.angles).map_err(TrainError::from))
            .collect()
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.num_classes + predicted] += 1;
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.num_classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Header `true\pred,0,1,…`, then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in 0..self.num_classes {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for t in 0..self.num_classes {
            let _ = write!(s, "{t}");
            for p in 0..self.num_classes {
                let _ = write!(s, ",{}", self.get(t, p));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Mean loss, argmax accuracy, and confusion matrix over `samples`.
pub fn evaluate(model: &Model, params: &[f64], samples: &[Sample]) -> Result<Evaluation> {
    let num_classes = model.config().num_classes;
    if let Some(s) = samples.iter().find(|s| s.label >= num_classes) {
        return Err(TrainError::LabelOutOfRange {
            label: s.label,
            num_classes,
        });
    }
    let probs = predict(model, params, samples)?;
    let mut confusion = ConfusionMatrix::new(num_classes);
    let mut loss = 0.0;
    for (s, p) in samples.iter().zip(&probs) {
        loss += cross_entropy(p, s.label)?;
        confusion.record(s.label, argmax(p));
    }
    Ok(Evaluation {
        loss: loss / samples.len() as f64,
        accuracy: confusion.accuracy(),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
    /// Epoch (1-based) whose parameters are returned as best; 0 before any epoch completes.
    pub best_epoch: usize,
    /// Test-set confusion matrix of the best epoch.
    pub confusion: Option<ConfusionMatrix>,
    /// Test-set confusion matrix after the last epoch.
    pub final_confusion: Option<ConfusionMatrix>,
}

impl RunMetrics {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,test_loss,test_acc,seconds";

    /// `epoch,train_loss,train_acc,test_loss,test_acc,seconds` rows.
    pub fn to_csv(&self) -> String {
        self.render_csv(true)
    }

    /// Same as [`RunMetrics::to_csv`] without the wall-clock column; stable across identical runs.
    pub fn to_csv_untimed(&self) -> String {
        self.render_csv(false)
    }

    fn render_csv(&self, timed: bool) -> String {
        let mut s = String::from(if timed {
            Self::CSV_HEADER
        } else {
            "epoch,train_loss,train_acc,test_loss,test_acc"
        });
        s.push('\n');
        for e in &self.epochs {
            let _ = write!(
                s,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_accuracy, e.test_loss, e.test_accuracy
            );
            if timed {
                let _ = write!(s, ",{:.3}", e.seconds);
            }
            s.push('\n');
        }
        s
    }

    pub fn best(&self) -> Option<&EpochMetrics> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Parameters at the epoch with the highest test accuracy (earliest on ties).
    pub best_params: ParamVector,
    pub final_params: ParamVector,
    pub metrics: RunMetrics,
}

/// Seeded mini-batch training. Initial parameters come from `config.seed`;
/// shuffling uses an independent ChaCha stream of the same seed.
pub fn fit(model: &Model, train: &[Sample], test: &[Sample], config: &TrainConfig) -> Result<FitResult> {
    let init = model.init_params(config.seed);
    fit_from(model, init, train, test, config)
}

/// [`fit`] starting from explicit parameters.
pub fn fit_from(model: &Model, init: ParamVector, train: &[Sample], test: &[Sample], config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(TrainError::EmptySplit("test"));
    }
    model.check_params(init.as_slice())?;
    let mut params = init.0;
    let mut optimizer = Optimizer::new(config.optimizer, params.len());
    if let Some(lr) = config.head_lr {
        optimizer = optimizer.with_tail_lr(model.param_count().pqc, lr);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = RunMetrics::default();
    let mut best: Option<(f64, Vec<f64>)> = None;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let grad = batch_gradient(model, &params, &batch, config.gradient_mode)?;
            if !grad.loss.is_finite() || grad.values.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Divergence {
                    epoch,
                    batch: batch_index,
                    partial: Box::new(metrics),
                });
            }
            optimizer.step(&mut params, &grad.values);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(TrainError::Divergence {
                    epoch,
                    batch: batch_index,
                    partial: Box::new(metrics),
                });
            }
        }
        let train_eval = evaluate(model, &params, train)?;
        let test_eval = evaluate(model, &params, test)?;
        if !train_eval.loss.is_finite() || !test_eval.loss.is_finite() {
            return Err(TrainError::Divergence {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
                partial: Box::new(metrics),
            });
        }
        metrics.epochs.push(EpochMetrics {
            epoch,
            train_loss: train_eval.loss,
            train_accuracy: train_eval.accuracy,
            test_loss: test_eval.loss,
            test_accuracy: test_eval.accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        if best.as_ref().is_none_or(|(acc, _)| test_eval.accuracy > *acc) {
            best = Some((test_eval.accuracy, params.clone()));
            metrics.best_epoch = epoch;
            metrics.confusion = Some(test_eval.confusion.clone());
        }
        metrics.final_confusion = Some(test_eval.confusion);
    }
    let (_, best_params) = best.expect("at least one epoch");
    Ok(FitResult {
        best_params: ParamVector(best_params),
        final_params: ParamVector(params),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureMode, HeadConfig, ModelConfig, PairingStrategy, Variant};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn random_angles(n: u32, rng: &mut ChaCha8Rng) -> AngleImage {
        AngleImage::new(n, (0..1 << (2 * n)).map(|_| rng.gen_range(0.0..=FRAC_PI_2)).collect()).unwrap()
    }

    fn small_config(bias: bool) -> ModelConfig {
        ModelConfig {
            variant: Variant::FrqiPairs {
                pairing: PairingStrategy::CrossProduct,
            },
            memory_qubits: 2,
            deep_layers: 1,
            n: 1,
            num_classes: 3,
            head: HeadConfig {
                feature_mode: FeatureMode::BasisProbabilities,
                bias,
            },
        }
    }

    fn max_mismatch(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = (x - y).abs();
                if y.abs() < 1e-3 {
                    d / 1e-2 // absolute 1e-6 ↔ relative 1e-4
                } else {
                    d / y.abs()
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        assert!((cross_entropy(&[0.1; 10], 3).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&[0.5, 0.5], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() - 1e12f64.ln()).abs() < 1e-12);
        assert!(matches!(cross_entropy(&[0.5, 0.5], 2), Err(TrainError::LabelOutOfRange { .. })));
    }

    #[test]
    fn zero_head_bias_gradient_is_softmax_residual() {
        let model = Model::new(small_config(true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = model.init_params(5).0;
        params[model.param_count().pqc..].fill(0.0);
        let batch: Vec<Sample> = [0, 2, 2]
            .iter()
            .map(|&label| Sample {
                angles: random_angles(1, &mut rng),
                label,
            })
            .collect();
        let g = gradient(&model, &params, &batch, GradientMode::ParameterShift).unwrap();
        let bias = &g.values[model.num_params() - 3..];
        let expected = [1.0 / 3.0 - 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0 - 2.0 / 3.0];
        for (b, e) in bias.iter().zip(expected) {
            assert!((b - e).abs() < 1e-15, "{b} vs {e}");
        }
        // zero head weights: no signal reaches the circuit
        assert!(g.values[..model.param_count().pqc].iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn duplicated_batch_matches_single_sample() {
        let model = Model::new(small_config(false)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params: Vec<f64> = (0..model.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sample = Sample {
            angles: random_angles(1, &mut rng),
            label: 1,
        };
        let one = gradient(&model, &params, std::slice::from_ref(&sample), GradientMode::ParameterShift).unwrap();
        let two = gradient(&model, &params, &[sample.clone(), sample], GradientMode::ParameterShift).unwrap();
        assert!((one.loss - two.loss).abs() < 1e-15);
        for (a, b) in one.values.iter().zip(&two.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_input_errors() {
        let model = Model::new(small_config(false)).unwrap();
        let params = model.init_params(0).0;
        assert!(matches!(
            gradient(&model, &params, &[], GradientMode::ParameterShift),
            Err(TrainError::EmptyBatch)
        ));
        let bad = Sample {
            angles: AngleImage::new(2, vec![0.0; 16]).unwrap(),
            label: 0,
        };
        assert!(matches!(
            gradient(&model, &params, &[bad], GradientMode::ParameterShift),
            Err(TrainError::Model(ModelError::ImageSize { .. }))
        ));
        let bad = Sample {
            angles: AngleImage::new(1, vec![0.0; 4]).unwrap(),
            label: 7,
        };
        assert!(gradient(&model, &params, &[bad], GradientMode::ParameterShift).is_err());
        assert!(gradient(&model, &params[1..], &[], GradientMode::ParameterShift).is_err());
    }

    #[test]
    fn single_sample_shift_matches_finite_difference() {
        let model = Model::new(small_config(true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params: Vec<f64> = (0..model.num_params()).map(|_| rng.gen_range(-PI..PI)).collect();
        let batch = [Sample {
            angles: random_angles(1, &mut rng),
            label: 2,
        }];
        let ps = gradient(&model, &params, &batch, GradientMode::ParameterShift).unwrap();
        let fd = gradient(&model, &params, &batch, GradientMode::FiniteDifference { h: 1e-4 }).unwrap();
        assert!((ps.loss - fd.loss).abs() < 1e-12);
        let err = max_mismatch(&ps.values, &fd.values);
        assert!(err < 1e-4, "max relative mismatch {err}");
    }

    /// Adds an RY on the color qubit to every layer, so the FRQI register is no longer control-only.
    #[derive(Debug)]
    struct ColorTwist;

    impl crate::model::CellTemplate for ColorTwist {
        fn name(&self) -> &'static str {
            "color-twist"
        }
        fn params_per_layer(&self, memory: usize, inputs: usize) -> usize {
            crate::model::CouplingRingCell.params_per_layer(memory, inputs) + 1
        }
        fn emit_layer(&self, memory: &[usize], inputs: &[usize], first: usize, ops: &mut Vec<ParametricOp>, labels: &mut Vec<String>) {
            ops.push(ParametricOp::trainable(crate::qsim::GateOp::ry(inputs[0], 0.0), first));
            labels.push("ry(color)".into());
            crate::model::CouplingRingCell.emit_layer(memory, inputs, first + 1, ops, labels);
        }
    }

    #[test]
    fn dense_fallback_gradient_matches_finite_difference() {
        let model = Model::with_template(small_config(true), Arc::new(ColorTwist)).unwrap();
        assert!(!model.frqi_register_is_control_only());
        assert!(model.transfer_matrix(&model.init_params(0).0).unwrap().is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params: Vec<f64> = (0..model.num_params()).map(|_| rng.gen_range(-PI..PI)).collect();
        let batch: Vec<Sample> = (0..3)
            .map(|i| Sample {
                angles: random_angles(1, &mut rng),
                label: i,
            })
            .collect();
        let ps = gradient(&model, &params, &batch, GradientMode::ParameterShift).unwrap();
        let fd = gradient(&model, &params, &batch, GradientMode::FiniteDifference { h: 1e-4 }).unwrap();
        assert!(max_mismatch(&ps.values, &fd.values) < 1e-4);
        let eval = evaluate(&model, &params, &batch).unwrap();
        assert!((eval.loss - ps.loss).abs() < 1e-12);
    }

    #[test]
    fn evaluate_examples() {
        let model = Model::new(small_config(false)).unwrap();
        let zero = vec![0.0; model.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples: Vec<Sample> = (0..10)
            .map(|i| Sample {
                angles: random_angles(1, &mut rng),
                label: i % 2,
            })
            .collect();
        // uniform output: every prediction ties and goes to class 0
        let eval = evaluate(&model, &zero, &samples).unwrap();
        assert_eq!(eval.accuracy, 0.5);
        assert_eq!(eval.confusion.get(0, 0), 5);
        assert_eq!(eval.confusion.get(1, 0), 5);
        assert_eq!(eval.confusion.row_sum(1), 5);
        assert!((eval.loss - 3f64.ln()).abs() < 1e-12);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn perfect_confusion_is_diagonal() {
        let mut m = ConfusionMatrix::new(10);
        for c in 0..10 {
            m.record(c, c);
        }
        assert_eq!(m.accuracy(), 1.0);
        assert_eq!(m.trace(), 10);
        assert!(m.to_csv().starts_with("true\\pred,0,1,2,3,4,5,6,7,8,9\n0,1,0,"));
    }

    fn two_image_task() -> Vec<Sample> {
        // Two orthogonal FRQI states: all-black vs all-white 2×2.
        vec![
            Sample {
                angles: AngleImage::new(1, vec![0.0; 4]).unwrap(),
                label: 0,
            },
            Sample {
                angles: AngleImage::new(1, vec![FRAC_PI_2; 4]).unwrap(),
                label: 1,
            },
        ]
    }

    #[test]
    fn toy_task_is_learned() {
        let config = ModelConfig {
            num_classes: 2,
            memory_qubits: 2,
            n: 1,
            ..ModelConfig::default()
        };
        let model = Model::new(config).unwrap();
        let data = two_image_task();
        let mut params = model.init_params(1).0;
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1), params.len());
        for _ in 0..50 {
            let g = gradient(&model, &params, &data, GradientMode::ParameterShift).unwrap();
            opt.step(&mut params, &g.values);
        }
        for s in &data {
            let p = model.forward(&params, &s.angles).unwrap();
            assert!(p[s.label] > 0.9, "{p:?}");
        }
    }

    #[test]
    fn fit_is_deterministic_and_consistent() {
        let config = ModelConfig {
            num_classes: 2,
            memory_qubits: 2,
            n: 1,
            ..ModelConfig::default()
        };
        let model = Model::new(config).unwrap();
        let data: Vec<Sample> = two_image_task().into_iter().cycle().take(8).collect();
        let tc = TrainConfig {
            optimizer: OptimizerConfig::adam(0.05),
            batch_size: 3,
            epochs: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = fit(&model, &data, &data, &tc).unwrap();
        let b = fit(&model, &data, &data, &tc).unwrap();
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.metrics.to_csv_untimed(), b.metrics.to_csv_untimed());
        let best = a.metrics.best().unwrap();
        assert_eq!(a.metrics.confusion.as_ref().unwrap().accuracy(), best.test_accuracy);
        let replay = evaluate(&model, a.best_params.as_slice(), &data).unwrap();
        assert_eq!(replay.accuracy, best.test_accuracy);
        let last = a.metrics.last().unwrap();
        assert_eq!(a.metrics.final_confusion.as_ref().unwrap().accuracy(), last.test_accuracy);
        assert_eq!(a.metrics.to_csv().lines().count(), 5);
        assert!(a.metrics.to_csv().starts_with(RunMetrics::CSV_HEADER));
    }

    #[test]
    fn fit_rejects_bad_configs() {
        let model = Model::new(small_config(false)).unwrap();
        let data = two_image_task();
        let mut tc = TrainConfig::default();
        tc.batch_size = 0;
        assert!(matches!(fit(&model, &data, &data, &tc), Err(TrainError::InvalidConfig(_))));
        let tc = TrainConfig {
            optimizer: OptimizerConfig::Sgd { lr: 0.0 },
            ..TrainConfig::default()
        };
        assert!(fit(&model, &data, &data, &tc).is_err());
        assert!(matches!(
            fit(&model, &[], &data, &TrainConfig::default()),
            Err(TrainError::EmptySplit("train"))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let model = Model::new(small_config(false)).unwrap();
        let data = two_image_task();
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let mut init = model.init_params(0);
        init.0[0] = f64::NAN;
        match fit_from(&model, init, &data, &data, &tc) {
            Err(TrainError::Divergence { epoch, batch, partial }) => {
                assert_eq!((epoch, batch), (1, 0));
                assert!(partial.epochs.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.01), 2);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.99).abs() < 1e-9 && (p[1] + 0.99).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn small_sgd_step_does_not_increase_loss(seed in any::<u64>()) {
            let model = Model::new(small_config(true)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut params: Vec<f64> = (0..model.num_params()).map(|_| rng.gen_range(-PI..PI)).collect();
            let sample = Sample { angles: random_angles(1, &mut rng), label: rng.gen_range(0..3) };
            let batch = [&sample];
            let g = batch_gradient(&model, &params, &batch, GradientMode::ParameterShift).unwrap();
            let before = batch_loss(&model, &params, &batch).unwrap();
            Optimizer::new(OptimizerConfig::Sgd { lr: 1e-4 }, params.len()).step(&mut params, &g.values);
            let after = batch_loss(&model, &params, &batch).unwrap();
            prop_assert!(after <= before + 1e-9, "{before} -> {after}");
        }

        #[test]
        fn loss_is_nonnegative(probs in prop::collection::vec(0.0..1.0f64, 2..10), pick in any::<prop::sample::Index>()) {
            let total: f64 = probs.iter().sum();
            prop_assume!(total > 0.0);
            let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
            let label = pick.index(probs.len());
            let l = cross_entropy(&probs, label).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, probs[label] >= 1.0);
        }
    }
}
