//! QRNN classifiers over an FRQI input register.
//!
//! The joint register places the `2n + 1` FRQI qubits at indices `0..2n+1`
//! (see [`crate::frqi`] for their map) and the memory qubits directly above
//! them. A model is a sequence of cells; each cell couples a subset of FRQI
//! qubits into the memory register. Memory read-out feeds an affine softmax head.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frqi::{self, AngleImage};
use crate::qsim::{GateOp, QsimError, StateVector, MAX_QUBITS};

/// Parameter counts the FRQI-Pairs champion configuration is reported with.
pub const REFERENCE_PQC_PARAMS: usize = 636;
pub const REFERENCE_HEAD_PARAMS: usize = 80;
pub const REFERENCE_CELLS: usize = 6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("parameter vector has {got} entries, model expects {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("image side exponent {got} does not match the model's n = {expected}")]
    ImageSize { expected: u32, got: u32 },
    #[error("checkpoint layout tag {found:?} is not {expected:?}")]
    LayoutVersion { found: String, expected: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingStrategy {
    /// Every ordered `(x_i, y_j)` pair: `n²` cells.
    CrossProduct,
    /// Unordered pairs `i ≤ j`: `n(n+1)/2` cells.
    TriangularUnordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    SingleCell,
    Naive { repetitions: usize },
    FrqiPairs { pairing: PairingStrategy },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Full memory-register distribution, `2^memory_qubits` features.
    BasisProbabilities,
    /// `⟨Z⟩` per memory qubit.
    PerQubitZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub feature_mode: FeatureMode,
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub memory_qubits: usize,
    pub deep_layers: usize,
    /// Image side exponent: images are `2^n × 2^n`.
    pub n: u32,
    pub num_classes: usize,
    pub head: HeadConfig,
}

impl Default for ModelConfig {
    /// FRQI-Pairs, cross-product pairing, 4 memory qubits, one layer, 8×8 input, 10 classes.
    fn default() -> Self {
        Self {
            variant: Variant::FrqiPairs {
                pairing: PairingStrategy::CrossProduct,
            },
            memory_qubits: 4,
            deep_layers: 1,
            n: 3,
            num_classes: 10,
            head: HeadConfig {
                feature_mode: FeatureMode::BasisProbabilities,
                bias: false,
            },
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.memory_qubits < 1 {
            return bad("memory_qubits must be at least 1".into());
        }
        if self.deep_layers < 1 {
            return bad("deep_layers must be at least 1".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        if self.n < 1 || self.n > frqi::MAX_SIDE_EXPONENT {
            return bad(format!("side exponent n = {} outside 1..={}", self.n, frqi::MAX_SIDE_EXPONENT));
        }
        if let Variant::Naive { repetitions: 0 } = self.variant {
            return bad("naive variant needs at least one repetition".into());
        }
        if self.total_qubits() > MAX_QUBITS {
            return bad(format!(
                "{} qubits exceed the simulator limit of {MAX_QUBITS}",
                self.total_qubits()
            ));
        }
        Ok(())
    }

    pub fn frqi_qubits(&self) -> usize {
        2 * self.n as usize + 1
    }

    pub fn total_qubits(&self) -> usize {
        self.frqi_qubits() + self.memory_qubits
    }

    pub fn memory_qubit_indices(&self) -> Vec<usize> {
        (self.frqi_qubits()..self.total_qubits()).collect()
    }

    pub fn feature_dim(&self) -> usize {
        match self.head.feature_mode {
            FeatureMode::BasisProbabilities => 1 << self.memory_qubits,
            FeatureMode::PerQubitZ => self.memory_qubits,
        }
    }

    pub fn head_params(&self) -> usize {
        self.num_classes * (self.feature_dim() + usize::from(self.head.bias))
    }
}

/// FRQI-register input qubits for each cell, in application order.
pub fn build_cell_schedule(config: &ModelConfig) -> Vec<Vec<usize>> {
    let n = config.n as usize;
    let all: Vec<usize> = (0..config.frqi_qubits()).collect();
    match config.variant {
        Variant::SingleCell => vec![all],
        Variant::Naive { repetitions } => vec![all; repetitions],
        Variant::FrqiPairs { pairing } => {
            let color = 0;
            let x_bit = |i: usize| 1 + i;
            let y_bit = |j: usize| 1 + n + j;
            let mut cells = Vec::new();
            for i in 0..n {
                let first_j = match pairing {
                    PairingStrategy::CrossProduct => 0,
                    PairingStrategy::TriangularUnordered => i,
                };
                for j in first_j..n {
                    cells.push(vec![color, x_bit(i), y_bit(j)]);
                }
            }
            cells
        }
    }
}

/// Where a trainable parameter sits in the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ParamRole {
    Cell {
        cell: usize,
        layer: usize,
        gate: String,
    },
    HeadWeight {
        class: usize,
        feature: usize,
    },
    HeadBias {
        class: usize,
    },
}

/// A gate whose angle is either fixed or read from the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricOp {
    pub op: GateOp,
    pub param: Option<usize>,
}

impl ParametricOp {
    pub fn fixed(op: GateOp) -> Self {
        Self { op, param: None }
    }

    pub fn trainable(op: GateOp, param: usize) -> Self {
        Self {
            op,
            param: Some(param),
        }
    }

    /// Applies the bound gate (angle `params[i] + shift`) without allocating or validating.
    pub(crate) fn apply(&self, state: &mut StateVector, params: &[f64], shift: f64) {
        let gate = match self.param {
            Some(i) => self.op.gate.with_angle(params[i] + shift),
            None => self.op.gate,
        };
        state.apply_raw(gate, self.op.target, self.op.control_mask());
    }

    /// The gate with its parameter (if any) substituted, plus `shift`.
    pub fn bind(&self, params: &[f64], shift: f64) -> GateOp {
        match self.param {
            Some(i) => GateOp {
                gate: self.op.gate.with_angle(params[i] + shift),
                target: self.op.target,
                controls: self.op.controls.clone(),
            },
            None => self.op.clone(),
        }
    }
}

/// Sub-circuit emitted for one cell layer.
pub trait CellTemplate: Send + Sync + fmt::Debug {
    /// Stable identifier recorded in checkpoints.
    fn name(&self) -> &'static str;

    fn params_per_layer(&self, memory: usize, inputs: usize) -> usize;

    /// Appends one layer. Parameters are numbered from `first_param` and must use
    /// exactly `params_per_layer` consecutive indices; `labels` receives one entry per parameter.
    fn emit_layer(
        &self,
        memory: &[usize],
        inputs: &[usize],
        first_param: usize,
        ops: &mut Vec<ParametricOp>,
        labels: &mut Vec<String>,
    );
}

/// Default cell: input-controlled RY couplings onto every memory qubit, then
/// RY and RZ on each memory qubit and a CNOT ring over the memory register.
#[derive(Debug, Clone, Copy, Default)]
pub struct CouplingRingCell;

impl CellTemplate for CouplingRingCell {
    fn name(&self) -> &'static str {
        "coupling-ring"
    }

    fn params_per_layer(&self, memory: usize, inputs: usize) -> usize {
        inputs * memory + 2 * memory
    }

    fn emit_layer(
        &self,
        memory: &[usize],
        inputs: &[usize],
        first_param: usize,
        ops: &mut Vec<ParametricOp>,
        labels: &mut Vec<String>,
    ) {
        let mut next = first_param;
        for &input in inputs {
            for &m in memory {
                ops.push(ParametricOp::trainable(GateOp::cry(vec![input], m, 0.0), next));
                labels.push(format!("cry(q{input}->q{m})"));
                next += 1;
            }
        }
        for &m in memory {
            ops.push(ParametricOp::trainable(GateOp::ry(m, 0.0), next));
            labels.push(format!("ry(q{m})"));
            ops.push(ParametricOp::trainable(GateOp::rz(m, 0.0), next + 1));
            labels.push(format!("rz(q{m})"));
            next += 2;
        }
        if memory.len() > 1 {
            for k in 0..memory.len() {
                let (c, t) = (memory[k], memory[(k + 1) % memory.len()]);
                ops.push(ParametricOp::fixed(GateOp::cnot(c, t)));
            }
        }
    }
}

/// Parameter totals for a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub cells: usize,
    pub pqc: usize,
    pub head: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.pqc + self.head
    }
}

/// PQC and head parameter counts under the default cell template.
pub fn count_parameters(config: &ModelConfig) -> ParamCount {
    count_parameters_with(config, &CouplingRingCell)
}

pub fn count_parameters_with(config: &ModelConfig, template: &dyn CellTemplate) -> ParamCount {
    let schedule = build_cell_schedule(config);
    let pqc = schedule
        .iter()
        .map(|inputs| config.deep_layers * template.params_per_layer(config.memory_qubits, inputs.len()))
        .sum();
    ParamCount {
        cells: schedule.len(),
        pqc,
        head: config.head_params(),
    }
}

/// Flat trainable parameter store; PQC parameters first, then head weights
/// (class-major), then head biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Memory-register distribution as a linear function of the FRQI basis distribution.
///
/// Valid when every gate of the model targets a memory qubit, so the FRQI register
/// only ever acts as control: then each FRQI basis state `j` drives the memory
/// through its own unitary `U_j`, and the memory distribution of an image with
/// FRQI basis probabilities `p` is `Σ_j p_j |U_j|0⟩|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    frqi_dim: usize,
    memory_dim: usize,
    /// Row `k` (memory outcome) holds `|⟨k|U_j|0⟩|²` for every FRQI basis index `j`.
    rows: Vec<f64>,
}

impl TransferMatrix {
    pub(crate) fn from_state(state: &StateVector, frqi_dim: usize) -> Self {
        let amps = state.amplitudes();
        Self {
            frqi_dim,
            memory_dim: amps.len() / frqi_dim,
            rows: amps.iter().map(|a| a.norm_sqr()).collect(),
        }
    }

    pub fn memory_distribution(&self, frqi_probs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(frqi_probs.len(), self.frqi_dim);
        self.rows
            .chunks_exact(self.frqi_dim)
            .map(|row| row.iter().zip(frqi_probs).map(|(q, p)| q * p).sum())
            .collect()
    }

    pub fn get(&self, memory_outcome: usize, frqi_index: usize) -> f64 {
        self.rows[memory_outcome * self.frqi_dim + frqi_index]
    }
}

/// A configured model: schedule, compiled circuit, and parameter layout.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    template: Arc<dyn CellTemplate>,
    schedule: Vec<Vec<usize>>,
    circuit: Vec<ParametricOp>,
    layout: Vec<ParamRole>,
    pqc_params: usize,
    control_only: bool,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        Self::with_template(config, Arc::new(CouplingRingCell))
    }

    pub fn with_template(config: ModelConfig, template: Arc<dyn CellTemplate>) -> Result<Self> {
        config.validate()?;
        let schedule = build_cell_schedule(&config);
        let memory = config.memory_qubit_indices();
        let mut circuit = Vec::new();
        let mut layout = Vec::new();
        let mut next = 0;
        for (cell, inputs) in schedule.iter().enumerate() {
            for layer in 0..config.deep_layers {
                let expected = template.params_per_layer(memory.len(), inputs.len());
                let mut labels = Vec::with_capacity(expected);
                template.emit_layer(&memory, inputs, next, &mut circuit, &mut labels);
                if labels.len() != expected {
                    return Err(ModelError::InvalidConfig(format!(
                        "template {} labelled {} parameters, declared {expected}",
                        template.name(),
                        labels.len()
                    )));
                }
                layout.extend(labels.into_iter().map(|gate| ParamRole::Cell { cell, layer, gate }));
                next += expected;
            }
        }
        let pqc_params = next;
        let total = config.total_qubits();
        for p in &circuit {
            // Validated once here so simulation can skip per-gate checks.
            p.op.validate(total)?;
            if p.param.is_some_and(|i| i >= pqc_params) {
                return Err(ModelError::InvalidConfig(format!(
                    "template {} referenced parameter outside its range",
                    template.name()
                )));
            }
        }
        let frqi_qubits = config.frqi_qubits();
        let control_only = circuit.iter().all(|p| p.op.target >= frqi_qubits);
        for class in 0..config.num_classes {
            for feature in 0..config.feature_dim() {
                layout.push(ParamRole::HeadWeight { class, feature });
            }
        }
        if config.head.bias {
            layout.extend((0..config.num_classes).map(|class| ParamRole::HeadBias { class }));
        }
        Ok(Self {
            config,
            template,
            schedule,
            circuit,
            layout,
            pqc_params,
            control_only,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn template_name(&self) -> &'static str {
        self.template.name()
    }

    pub fn layout_version(&self) -> String {
        format!("frqi-qrnn-params/v1/{}", self.template.name())
    }

    pub fn schedule(&self) -> &[Vec<usize>] {
        &self.schedule
    }

    pub fn circuit(&self) -> &[ParametricOp] {
        &self.circuit
    }

    pub fn layout(&self) -> &[ParamRole] {
        &self.layout
    }

    pub fn param_count(&self) -> ParamCount {
        ParamCount {
            cells: self.schedule.len(),
            pqc: self.pqc_params,
            head: self.config.head_params(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    /// Whether the FRQI register only ever acts as control (enables [`TransferMatrix`]).
    pub fn frqi_register_is_control_only(&self) -> bool {
        self.control_only
    }

    /// Rotation parameters i.i.d. uniform on `[−π/10, π/10]`, head zeroed.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = PI / 10.0;
        let mut values: Vec<f64> = (0..self.pqc_params).map(|_| rng.gen_range(-bound..=bound)).collect();
        values.resize(self.num_params(), 0.0);
        ParamVector(values)
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(ModelError::ParamCount {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn check_image(&self, angles: &AngleImage) -> Result<()> {
        if angles.n() != self.config.n {
            return Err(ModelError::ImageSize {
                expected: self.config.n,
                got: angles.n(),
            });
        }
        Ok(())
    }

    pub fn bind(&self, params: &[f64]) -> Vec<GateOp> {
        self.circuit.iter().map(|p| p.bind(params, 0.0)).collect()
    }

    /// `|0…0⟩_memory ⊗ |I(θ)⟩` before any cell.
    pub fn initial_state(&self, angles: &AngleImage) -> StateVector {
        frqi::encode_direct(angles)
            .with_zero_qubits_above(self.config.memory_qubits)
            .expect("validated qubit total")
    }

    /// Joint state after all cells.
    pub fn final_state(&self, params: &[f64], angles: &AngleImage) -> Result<StateVector> {
        self.check_params(params)?;
        self.check_image(angles)?;
        let mut state = self.initial_state(angles);
        for p in &self.circuit {
            p.apply(&mut state, params, 0.0);
        }
        Ok(state)
    }

    /// Head features read analytically from the full statevector.
    pub fn features(&self, params: &[f64], angles: &AngleImage) -> Result<Vec<f64>> {
        let state = self.final_state(params, angles)?;
        let memory = self.config.memory_qubit_indices();
        Ok(match self.config.head.feature_mode {
            FeatureMode::BasisProbabilities => state.probabilities(&memory)?,
            FeatureMode::PerQubitZ => memory
                .iter()
                .map(|&q| state.expectation_z(q))
                .collect::<Result<_, _>>()?,
        })
    }

    /// Class probabilities: statevector simulation, analytic read-out, affine head, softmax.
    pub fn forward(&self, params: &[f64], angles: &AngleImage) -> Result<Vec<f64>> {
        let features = self.features(params, angles)?;
        Ok(softmax(&self.logits(params, &features)))
    }

    /// Class probabilities from `shots` sampled measurements of the memory register.
    pub fn forward_shots(&self, params: &[f64], angles: &AngleImage, shots: u64, seed: u64) -> Result<Vec<f64>> {
        let state = self.final_state(params, angles)?;
        let counts = state.sample(&self.config.memory_qubit_indices(), shots, seed)?;
        let mut dist = vec![0.0; 1 << self.config.memory_qubits];
        for (outcome, c) in counts.iter() {
            dist[outcome] = c as f64 / shots as f64;
        }
        let features = self.readout(&dist);
        Ok(softmax(&self.logits(params, &features)))
    }

    /// Features from a memory-register distribution.
    pub fn readout(&self, memory_dist: &[f64]) -> Vec<f64> {
        match self.config.head.feature_mode {
            FeatureMode::BasisProbabilities => memory_dist.to_vec(),
            FeatureMode::PerQubitZ => (0..self.config.memory_qubits)
                .map(|q| {
                    memory_dist
                        .iter()
                        .enumerate()
                        .map(|(k, p)| if (k >> q) & 1 == 0 { *p } else { -*p })
                        .sum()
                })
                .collect(),
        }
    }

    /// Pulls a feature-space gradient back onto the memory distribution.
    pub fn readout_adjoint(&self, feature_grad: &[f64]) -> Vec<f64> {
        match self.config.head.feature_mode {
            FeatureMode::BasisProbabilities => feature_grad.to_vec(),
            FeatureMode::PerQubitZ => (0..1usize << self.config.memory_qubits)
                .map(|k| {
                    feature_grad
                        .iter()
                        .enumerate()
                        .map(|(q, g)| if (k >> q) & 1 == 0 { *g } else { -*g })
                        .sum()
                })
                .collect(),
        }
    }

    /// Head weights as `num_classes` rows of `feature_dim`.
    pub fn head_weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        let len = self.config.num_classes * self.config.feature_dim();
        &params[self.pqc_params..self.pqc_params + len]
    }

    pub fn head_bias<'a>(&self, params: &'a [f64]) -> Option<&'a [f64]> {
        self.config.head.bias.then(|| {
            let start = self.pqc_params + self.config.num_classes * self.config.feature_dim();
            &params[start..start + self.config.num_classes]
        })
    }

    pub fn logits(&self, params: &[f64], features: &[f64]) -> Vec<f64> {
        let weights = self.head_weights(params);
        let bias = self.head_bias(params);
        weights
            .chunks_exact(self.config.feature_dim())
            .enumerate()
            .map(|(c, row)| {
                let z: f64 = row.iter().zip(features).map(|(w, f)| w * f).sum();
                z + bias.map_or(0.0, |b| b[c])
            })
            .collect()
    }

    /// Unnormalized start state `|0…0⟩_memory ⊗ Σ_j |j⟩` (unit amplitude on every FRQI basis state).
    pub(crate) fn transfer_seed_state(&self) -> StateVector {
        let frqi_dim = 1 << self.config.frqi_qubits();
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << self.config.total_qubits()];
        amps[..frqi_dim].fill(Complex64::new(1.0, 0.0));
        StateVector::from_amplitudes(amps).expect("validated qubit total")
    }

    /// Transfer matrix at `params`; `None` when some gate targets an FRQI qubit.
    pub fn transfer_matrix(&self, params: &[f64]) -> Result<Option<TransferMatrix>> {
        self.check_params(params)?;
        if !self.control_only {
            return Ok(None);
        }
        let mut state = self.transfer_seed_state();
        for p in &self.circuit {
            p.apply(&mut state, params, 0.0);
        }
        Ok(Some(TransferMatrix::from_state(&state, 1 << self.config.frqi_qubits())))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Serialized model: configuration, layout tag, flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layout_version: String,
    pub config: ModelConfig,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn new(model: &Model, params: ParamVector) -> Self {
        Self {
            layout_version: model.layout_version(),
            config: model.config().clone(),
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rebuilds the model with the default cell template and checks the tag and parameter count.
    pub fn into_model(self) -> Result<(Model, ParamVector)> {
        let model = Model::new(self.config)?;
        let expected = model.layout_version();
        if self.layout_version != expected {
            return Err(ModelError::LayoutVersion {
                found: self.layout_version,
                expected,
            });
        }
        model.check_params(self.params.as_slice())?;
        Ok((model, self.params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn pairs(pairing: PairingStrategy, n: u32) -> ModelConfig {
        ModelConfig {
            variant: Variant::FrqiPairs { pairing },
            n,
            ..ModelConfig::default()
        }
    }

    fn random_angles(n: u32, rng: &mut ChaCha8Rng) -> AngleImage {
        AngleImage::new(n, (0..1 << (2 * n)).map(|_| rng.gen_range(0.0..=FRAC_PI_2)).collect()).unwrap()
    }

    fn random_params(model: &Model, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..model.num_params()).map(|_| rng.gen_range(-PI..PI)).collect()
    }

    #[test]
    fn schedule_examples() {
        use PairingStrategy::*;
        assert_eq!(build_cell_schedule(&pairs(CrossProduct, 2)).len(), 4);
        assert_eq!(build_cell_schedule(&pairs(CrossProduct, 3)).len(), 9);
        assert_eq!(build_cell_schedule(&pairs(TriangularUnordered, 3)).len(), 6);
        assert_eq!(
            build_cell_schedule(&pairs(CrossProduct, 2)),
            vec![vec![0, 1, 3], vec![0, 1, 4], vec![0, 2, 3], vec![0, 2, 4]]
        );
        assert_eq!(
            build_cell_schedule(&pairs(TriangularUnordered, 2)),
            vec![vec![0, 1, 3], vec![0, 1, 4], vec![0, 2, 4]]
        );
        let single = ModelConfig {
            variant: Variant::SingleCell,
            ..ModelConfig::default()
        };
        assert_eq!(build_cell_schedule(&single), vec![(0..7).collect::<Vec<_>>()]);
        let naive = ModelConfig {
            variant: Variant::Naive { repetitions: 2 },
            ..ModelConfig::default()
        };
        assert_eq!(build_cell_schedule(&naive).len(), 2);
    }

    #[test]
    fn schedule_cardinality_and_saving() {
        use PairingStrategy::*;
        for n in 1..=5u32 {
            let cross = build_cell_schedule(&pairs(CrossProduct, n)).len();
            let tri = build_cell_schedule(&pairs(TriangularUnordered, n)).len();
            let nn = n as usize;
            assert_eq!(cross, nn * nn);
            assert_eq!(tri, nn * (nn + 1) / 2);
            assert!(cross < 1 << (2 * n));
        }
    }

    #[test]
    fn head_counts() {
        let mut c = ModelConfig::default();
        c.head = HeadConfig {
            feature_mode: FeatureMode::PerQubitZ,
            bias: true,
        };
        assert_eq!(count_parameters(&c).head, 50);
        c.head = HeadConfig {
            feature_mode: FeatureMode::BasisProbabilities,
            bias: false,
        };
        assert_eq!(count_parameters(&c).head, 160);
    }

    #[test]
    fn template_counts() {
        let champion = pairs(PairingStrategy::TriangularUnordered, 3);
        let count = count_parameters(&champion);
        assert_eq!(count.cells, 6);
        assert_eq!(CouplingRingCell.params_per_layer(4, 3), 20);
        assert_eq!(count.pqc, 120);
        assert_ne!(count.pqc, REFERENCE_PQC_PARAMS);
        let model = Model::new(champion).unwrap();
        assert_eq!(model.param_count(), count);
        assert_eq!(model.num_params(), 120 + 160);
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        c.memory_qubits = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.num_classes = 1;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.deep_layers = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.n = 8;
        c.memory_qubits = 8;
        assert!(Model::new(c).is_err());
        assert_eq!(ModelConfig::default().total_qubits(), 11);
    }

    #[test]
    fn layout_is_stable() {
        let model = Model::new(pairs(PairingStrategy::CrossProduct, 2)).unwrap();
        let again = Model::new(pairs(PairingStrategy::CrossProduct, 2)).unwrap();
        assert_eq!(model.layout(), again.layout());
        assert_eq!(
            model.layout()[0],
            ParamRole::Cell {
                cell: 0,
                layer: 0,
                gate: "cry(q0->q5)".into()
            }
        );
        assert_eq!(
            model.layout()[model.param_count().pqc],
            ParamRole::HeadWeight { class: 0, feature: 0 }
        );
        let params = model.init_params(3);
        assert_eq!(params, model.init_params(3));
        assert!(params.as_slice()[..model.param_count().pqc]
            .iter()
            .all(|p| p.abs() <= PI / 10.0));
        assert!(params.as_slice()[model.param_count().pqc..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn zero_params_give_identity_cells() {
        let model = Model::new(pairs(PairingStrategy::CrossProduct, 2)).unwrap();
        let params = vec![0.0; model.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let angles = random_angles(2, &mut rng);
        let state = model.final_state(&params, &angles).unwrap();
        let initial = model.initial_state(&angles);
        for (a, b) in state.amplitudes().iter().zip(initial.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
        let probs = model.forward(&params, &angles).unwrap();
        assert!(probs.iter().all(|&p| (p - 0.1).abs() < 1e-15));
    }

    #[test]
    fn single_coupling_flips_memory() {
        // 1 memory qubit, 1 input qubit, w = π: 4×4 oracle CRY(π)|input=1, mem=0⟩ = |1,1⟩.
        let memory = [1usize];
        let inputs = [0usize];
        let mut ops = Vec::new();
        let mut labels = Vec::new();
        CouplingRingCell.emit_layer(&memory, &inputs, 0, &mut ops, &mut labels);
        assert_eq!(labels.len(), 3);
        let params = [PI, 0.0, 0.0];
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&GateOp::x(0)).unwrap();
        for p in &ops {
            state.apply(&p.bind(&params, 0.0)).unwrap();
        }
        let (s, c) = (PI / 2.0).sin_cos();
        let oracle = [0.0, c, 0.0, s];
        for (a, e) in state.amplitudes().iter().zip(oracle) {
            assert!((a.re - e).abs() < 1e-15 && a.im.abs() < 1e-15);
        }
        assert!((state.probabilities(&[1]).unwrap()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transfer_matrix_matches_dense_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (variant, mode) in [
            (Variant::FrqiPairs { pairing: PairingStrategy::CrossProduct }, FeatureMode::BasisProbabilities),
            (Variant::SingleCell, FeatureMode::PerQubitZ),
            (Variant::Naive { repetitions: 2 }, FeatureMode::BasisProbabilities),
        ] {
            let config = ModelConfig {
                variant,
                memory_qubits: 3,
                n: 2,
                head: HeadConfig { feature_mode: mode, bias: true },
                ..ModelConfig::default()
            };
            let model = Model::new(config).unwrap();
            assert!(model.frqi_register_is_control_only());
            let params = random_params(&model, &mut rng);
            let q = model.transfer_matrix(&params).unwrap().unwrap();
            for _ in 0..5 {
                let angles = random_angles(2, &mut rng);
                let dense = model.features(&params, &angles).unwrap();
                let fast = model.readout(&q.memory_distribution(&angles.basis_probabilities()));
                for (a, b) in dense.iter().zip(&fast) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cell_order_matters() {
        let config = pairs(PairingStrategy::CrossProduct, 2);
        let model = Model::new(config.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let angles = random_angles(2, &mut rng);
        let per_cell = model.param_count().pqc / model.schedule().len();
        let cell_ops = model.circuit().len() / model.schedule().len();
        let mut differs = false;
        for _ in 0..10 {
            let params = random_params(&model, &mut rng);
            let forward = model.features(&params, &angles).unwrap();
            // Reverse cell order by simulating the compiled per-cell blocks backwards.
            let mut state = model.initial_state(&angles);
            for block in model.circuit().chunks(cell_ops).rev() {
                for p in block {
                    state.apply(&p.bind(&params, 0.0)).unwrap();
                }
            }
            let reversed = state.probabilities(&config.memory_qubit_indices()).unwrap();
            let delta = forward.iter().zip(&reversed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            differs |= delta > 1e-6;
        }
        assert!(differs);
        assert_eq!(per_cell, 20);
    }

    #[test]
    fn checkpoint_round_trip_and_tag_check() {
        let model = Model::new(pairs(PairingStrategy::TriangularUnordered, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = ParamVector(random_params(&model, &mut rng).iter().map(|p| p * 1.000_000_1).collect());
        let cp = Checkpoint::new(&model, params.clone());
        let back = Checkpoint::from_json(&cp.to_json()).unwrap();
        assert_eq!(back, cp);
        assert!(back.params.as_slice().iter().zip(params.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let (m2, p2) = back.into_model().unwrap();
        assert_eq!(m2.config(), model.config());
        assert_eq!(p2, params);

        let mut tampered = cp.clone();
        tampered.layout_version = "frqi-qrnn-params/v0/other".into();
        assert!(matches!(tampered.into_model(), Err(ModelError::LayoutVersion { .. })));
        let mut short = cp;
        short.params.0.pop();
        assert!(matches!(short.into_model(), Err(ModelError::ParamCount { .. })));
    }

    #[test]
    fn forward_rejects_mismatches() {
        let model = Model::new(pairs(PairingStrategy::CrossProduct, 2)).unwrap();
        let angles = AngleImage::new(1, vec![0.0; 4]).unwrap();
        let params = vec![0.0; model.num_params()];
        assert!(matches!(model.forward(&params, &angles), Err(ModelError::ImageSize { .. })));
        let angles = AngleImage::new(2, vec![0.0; 16]).unwrap();
        assert!(matches!(model.forward(&params[1..], &angles), Err(ModelError::ParamCount { .. })));
    }

    #[test]
    fn shot_inference_approaches_analytic() {
        let model = Model::new(pairs(PairingStrategy::CrossProduct, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = random_params(&model, &mut rng);
        let angles = random_angles(2, &mut rng);
        let exact = model.forward(&params, &angles).unwrap();
        let shots = model.forward_shots(&params, &angles, 200_000, 1).unwrap();
        for (a, b) in exact.iter().zip(&shots) {
            assert!((a - b).abs() < 0.05);
        }
        assert_eq!(shots, model.forward_shots(&params, &angles, 200_000, 1).unwrap());
    }

    fn arb_config() -> impl Strategy<Value = ModelConfig> {
        (0..4u8, 1..=3usize, 1..=2usize, 1..=2u32, 2..=5usize, any::<bool>(), any::<bool>()).prop_map(
            |(v, memory_qubits, deep_layers, n, num_classes, z, bias)| ModelConfig {
                variant: match v {
                    0 => Variant::SingleCell,
                    1 => Variant::Naive { repetitions: 2 },
                    2 => Variant::FrqiPairs { pairing: PairingStrategy::CrossProduct },
                    _ => Variant::FrqiPairs { pairing: PairingStrategy::TriangularUnordered },
                },
                memory_qubits,
                deep_layers,
                n,
                num_classes,
                head: HeadConfig {
                    feature_mode: if z { FeatureMode::PerQubitZ } else { FeatureMode::BasisProbabilities },
                    bias,
                },
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn forward_is_a_distribution(config in arb_config(), seed in any::<u64>()) {
            let model = Model::new(config.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params: Vec<f64> = (0..model.num_params()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let angles = random_angles(config.n, &mut rng);
            let state = model.final_state(&params, &angles).unwrap();
            prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
            let probs = model.forward(&params, &angles).unwrap();
            prop_assert_eq!(probs.len(), config.num_classes);
            prop_assert!(probs.iter().all(|&p| p >= 0.0));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
