//! Dense statevector simulator.
//!
//! Qubit `k` is bit `k` of the basis-state index (little-endian): the state
//! `|q_{n-1} ... q_1 q_0⟩` lives at index `Σ q_k 2^k`. Every other module in
//! the crate relies on this convention.
//!
//! Rotation conventions:
//!
//! ```text
//! RY(θ) = [[cos θ/2, −sin θ/2],
//!          [sin θ/2,  cos θ/2]]
//! RZ(θ) = diag(e^{−iθ/2}, e^{iθ/2})
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("qubit count {0} outside 1..={MAX_QUBITS}")]
    QubitCountOutOfRange(usize),
    #[error("qubit index {index} out of range for a {num_qubits}-qubit state")]
    IndexOutOfRange { index: usize, num_qubits: usize },
    #[error("target qubit {0} also appears among the controls")]
    TargetInControls(usize),
    #[error("qubit {0} listed more than once")]
    DuplicateQubit(usize),
    #[error("non-finite rotation angle {0}")]
    NonFiniteAngle(f64),
    #[error("measurement subset is empty")]
    EmptySubset,
    #[error("shot count must be at least 1")]
    ZeroShots,
    #[error("amplitude vector length {0} is not a power of two")]
    BadLength(usize),
    #[error("malformed shot-count CSV at line {line}: {reason}")]
    MalformedCounts { line: usize, reason: String },
}

pub type Result<T, E = QsimError> = std::result::Result<T, E>;

/// Single-qubit gate kinds. Controls are attached by [`GateOp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Ry(f64),
    Rz(f64),
    H,
    X,
}

impl Gate {
    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Ry(t) | Gate::Rz(t) => Some(t),
            Gate::H | Gate::X => None,
        }
    }

    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Ry(t) => Gate::Ry(-t),
            Gate::Rz(t) => Gate::Rz(-t),
            g => g,
        }
    }

    /// Same gate kind with a different rotation angle; non-rotations are returned unchanged.
    pub fn with_angle(&self, angle: f64) -> Gate {
        match *self {
            Gate::Ry(_) => Gate::Ry(angle),
            Gate::Rz(_) => Gate::Rz(angle),
            g => g,
        }
    }
}

/// A gate on `target`, fired only on basis states whose `controls` bits are all 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub gate: Gate,
    pub target: usize,
    pub controls: Vec<usize>,
}

impl GateOp {
    pub fn new(gate: Gate, target: usize) -> Self {
        Self {
            gate,
            target,
            controls: Vec::new(),
        }
    }

    pub fn controlled(gate: Gate, controls: Vec<usize>, target: usize) -> Self {
        Self {
            gate,
            target,
            controls,
        }
    }

    pub fn ry(target: usize, theta: f64) -> Self {
        Self::new(Gate::Ry(theta), target)
    }

    pub fn rz(target: usize, theta: f64) -> Self {
        Self::new(Gate::Rz(theta), target)
    }

    pub fn h(target: usize) -> Self {
        Self::new(Gate::H, target)
    }

    pub fn x(target: usize) -> Self {
        Self::new(Gate::X, target)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::controlled(Gate::X, vec![control], target)
    }

    pub fn cry(controls: Vec<usize>, target: usize, theta: f64) -> Self {
        Self::controlled(Gate::Ry(theta), controls, target)
    }

    pub fn inverse(&self) -> Self {
        Self {
            gate: self.gate.inverse(),
            target: self.target,
            controls: self.controls.clone(),
        }
    }

    pub(crate) fn validate(&self, num_qubits: usize) -> Result<()> {
        if let Some(t) = self.gate.angle() {
            if !t.is_finite() {
                return Err(QsimError::NonFiniteAngle(t));
            }
        }
        check_index(self.target, num_qubits)?;
        let mut seen = 0usize;
        for &c in &self.controls {
            check_index(c, num_qubits)?;
            if c == self.target {
                return Err(QsimError::TargetInControls(c));
            }
            if seen & (1 << c) != 0 {
                return Err(QsimError::DuplicateQubit(c));
            }
            seen |= 1 << c;
        }
        Ok(())
    }

    pub(crate) fn control_mask(&self) -> usize {
        self.controls.iter().fold(0, |m, &c| m | (1 << c))
    }
}

fn check_index(index: usize, num_qubits: usize) -> Result<()> {
    if index >= num_qubits {
        Err(QsimError::IndexOutOfRange { index, num_qubits })
    } else {
        Ok(())
    }
}

fn check_subset(qubits: &[usize], num_qubits: usize) -> Result<()> {
    let mut seen = 0usize;
    for &q in qubits {
        check_index(q, num_qubits)?;
        if seen & (1 << q) != 0 {
            return Err(QsimError::DuplicateQubit(q));
        }
        seen |= 1 << q;
    }
    Ok(())
}

/// Gathers the bits of `index` at positions `qubits` into a compact outcome index
/// (bit `k` of the result is qubit `qubits[k]`).
#[inline]
fn gather_bits(index: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .enumerate()
        .fold(0, |acc, (k, &q)| acc | (((index >> q) & 1) << k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` over `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(QsimError::QubitCountOutOfRange(num_qubits));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The caller is responsible for normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QsimError::BadLength(len));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(QsimError::QubitCountOutOfRange(num_qubits));
        }
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Appends `extra` qubits in `|0⟩` above the existing ones, i.e. returns
    /// `|0…0⟩_extra ⊗ |self⟩` with the new qubits at the high indices.
    pub fn with_zero_qubits_above(mut self, extra: usize) -> Result<Self> {
        let total = self.num_qubits + extra;
        if total > MAX_QUBITS {
            return Err(QsimError::QubitCountOutOfRange(total));
        }
        self.amplitudes.resize(1 << total, Complex64::new(0.0, 0.0));
        self.num_qubits = total;
        Ok(self)
    }

    pub fn apply(&mut self, op: &GateOp) -> Result<()> {
        op.validate(self.num_qubits)?;
        self.apply_unchecked(op);
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, ops: impl IntoIterator<Item = &'a GateOp>) -> Result<()> {
        for op in ops {
            self.apply(op)?;
        }
        Ok(())
    }

    /// Gate application without index validation. Callers must have validated `op`
    /// against this register size (see [`GateOp`] invariants).
    pub(crate) fn apply_unchecked(&mut self, op: &GateOp) {
        self.apply_raw(op.gate, op.target, op.control_mask());
    }

    /// Kernel entry point: `gate` on `target`, conditioned on all bits of `cmask`.
    pub(crate) fn apply_raw(&mut self, gate: Gate, target: usize, cmask: usize) {
        let tbit = 1usize << target;
        let amps = &mut self.amplitudes;
        let dim = amps.len();
        match gate {
            Gate::Ry(theta) => {
                let (s, c) = (0.5 * theta).sin_cos();
                for_each_pair(dim, tbit, cmask, |i, j| {
                    let (a, b) = (amps[i], amps[j]);
                    amps[i] = a * c - b * s;
                    amps[j] = a * s + b * c;
                });
            }
            Gate::Rz(theta) => {
                let (s, c) = (0.5 * theta).sin_cos();
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                for_each_pair(dim, tbit, cmask, |i, j| {
                    amps[i] *= lo;
                    amps[j] *= hi;
                });
            }
            Gate::H => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                for_each_pair(dim, tbit, cmask, |i, j| {
                    let (a, b) = (amps[i], amps[j]);
                    amps[i] = (a + b) * r;
                    amps[j] = (a - b) * r;
                });
            }
            Gate::X => {
                for_each_pair(dim, tbit, cmask, |i, j| amps.swap(i, j));
            }
        }
    }

    /// Marginal Born-rule distribution over `qubits`; outcome bit `k` is `qubits[k]`.
    pub fn probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        if qubits.is_empty() {
            return Err(QsimError::EmptySubset);
        }
        check_subset(qubits, self.num_qubits)?;
        let mut probs = vec![0.0; 1 << qubits.len()];
        // Contiguous low block: a plain fold over the high bits.
        if qubits.iter().enumerate().all(|(k, &q)| k == q) {
            let block = probs.len();
            for chunk in self.amplitudes.chunks_exact(block) {
                for (p, a) in probs.iter_mut().zip(chunk) {
                    *p += a.norm_sqr();
                }
            }
        } else if qubits
            .iter()
            .enumerate()
            .all(|(k, &q)| q == self.num_qubits - qubits.len() + k)
        {
            // Contiguous high block: each outcome owns one contiguous chunk.
            let chunk = self.amplitudes.len() / probs.len();
            for (p, c) in probs.iter_mut().zip(self.amplitudes.chunks_exact(chunk)) {
                *p = c.iter().map(|a| a.norm_sqr()).sum();
            }
        } else {
            for (i, a) in self.amplitudes.iter().enumerate() {
                probs[gather_bits(i, qubits)] += a.norm_sqr();
            }
        }
        Ok(probs)
    }

    /// `P(0) − P(1)` for `qubit`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        check_index(qubit, self.num_qubits)?;
        let bit = 1 << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// Draws `shots` i.i.d. measurement outcomes of `qubits` from a ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, qubits: &[usize], shots: u64, seed: u64) -> Result<ShotCounts> {
        if shots == 0 {
            return Err(QsimError::ZeroShots);
        }
        let probs = self.probabilities(qubits)?;
        let mut counts = BTreeMap::new();
        let dist = WeightedIndex::new(&probs).expect("probabilities of a normalized state");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..shots {
            *counts.entry(dist.sample(&mut rng)).or_insert(0u64) += 1;
        }
        Ok(ShotCounts {
            qubits: qubits.to_vec(),
            counts,
            total_shots: shots,
        })
    }

    /// Debug dump: header then one `index,real,imag` row per amplitude.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "index,real,imag")?;
        for (i, a) in self.amplitudes.iter().enumerate() {
            writeln!(out, "{i},{},{}", a.re, a.im)?;
        }
        Ok(())
    }
}

/// Visits every `(i, i | tbit)` pair with the target bit clear in `i` and all control bits set.
#[inline]
fn for_each_pair(dim: usize, tbit: usize, cmask: usize, mut f: impl FnMut(usize, usize)) {
    let mut base = 0;
    while base < dim {
        for i in base..base + tbit {
            if i & cmask == cmask {
                f(i, i | tbit);
            }
        }
        base += tbit << 1;
    }
}

/// Measurement outcome histogram over an ordered qubit subset.
///
/// Outcomes are stored as compact indices (bit `k` = `qubits[k]`) and rendered
/// as bitstrings with `qubits[0]` as the rightmost character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotCounts {
    qubits: Vec<usize>,
    counts: BTreeMap<usize, u64>,
    total_shots: u64,
}

impl ShotCounts {
    pub fn from_counts(qubits: Vec<usize>, counts: BTreeMap<usize, u64>) -> Self {
        let total_shots = counts.values().sum();
        Self {
            qubits,
            counts,
            total_shots,
        }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn total_shots(&self) -> u64 {
        self.total_shots
    }

    pub fn get(&self, outcome: usize) -> u64 {
        self.counts.get(&outcome).copied().unwrap_or(0)
    }

    /// Nonzero outcomes in ascending outcome order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn bitstring(&self, outcome: usize) -> String {
        (0..self.qubits.len())
            .rev()
            .map(|k| if (outcome >> k) & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// `bitstring,count` rows, nonzero outcomes only, ascending outcome index.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bitstring,count\n");
        for (k, v) in self.iter() {
            let _ = writeln!(s, "{},{v}", self.bitstring(k));
        }
        s
    }

    /// Parses the [`ShotCounts::to_csv`] format. Bitstring width fixes the subset size;
    /// the subset is taken to be qubits `0..width` unless `qubits` is given.
    pub fn from_csv<R: BufRead>(reader: R, qubits: Option<Vec<usize>>) -> Result<Self> {
        let mut counts = BTreeMap::new();
        let mut width = None;
        for (line_no, line) in reader.lines().enumerate() {
            let bad = |reason: &str| QsimError::MalformedCounts {
                line: line_no + 1,
                reason: reason.to_string(),
            };
            let line = line.map_err(|e| bad(&e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || (line_no == 0 && line.starts_with("bitstring")) {
                continue;
            }
            let (bits, count) = line.split_once(',').ok_or_else(|| bad("expected two fields"))?;
            if bits.is_empty() || !bits.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(bad("bitstring must be 0/1 characters"));
            }
            match width {
                None => width = Some(bits.len()),
                Some(w) if w != bits.len() => return Err(bad("inconsistent bitstring width")),
                _ => {}
            }
            let outcome = usize::from_str_radix(bits, 2).map_err(|e| bad(&e.to_string()))?;
            let count: u64 = count.trim().parse().map_err(|_| bad("count is not an integer"))?;
            *counts.entry(outcome).or_insert(0) += count;
        }
        let width = width.unwrap_or(0);
        let qubits = qubits.unwrap_or_else(|| (0..width).collect());
        if qubits.len() != width && width != 0 {
            return Err(QsimError::MalformedCounts {
                line: 0,
                reason: format!("bitstrings have {width} bits but {} qubits given", qubits.len()),
            });
        }
        Ok(Self::from_counts(qubits, counts))
    }
}
