//! FRQI image codec: intensity scaling, state preparation, and retrieval.
//!
//! A `2^n × 2^n` image maps onto `2n + 1` qubits. Register map:
//!
//! * qubit 0: color qubit,
//! * qubits `1..=n`: X (column) bits, little-endian,
//! * qubits `n+1..=2n`: Y (row) bits, little-endian.
//!
//! Position `x = row · 2^n + col`, so the basis index of `(color, x)` is `(x << 1) | color`.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use num_complex::Complex64;
use thiserror::Error;

use crate::qsim::{GateOp, QsimError, ShotCounts, StateVector};

/// Largest supported side exponent (`2^8 = 256` pixels per side, 17 qubits).
pub const MAX_SIDE_EXPONENT: u32 = 8;

#[derive(Debug, Error)]
pub enum FrqiError {
    #[error("side exponent must be at least 1, got {0}")]
    SideExponentTooSmall(u32),
    #[error("side exponent {0} exceeds the supported maximum {MAX_SIDE_EXPONENT}")]
    SideExponentTooLarge(u32),
    #[error("image is {width}×{height}; FRQI needs a square power-of-two envelope")]
    NotSquareEnvelope { width: usize, height: usize },
    #[error("pixel buffer has {got} entries, expected {expected}")]
    PixelCount { expected: usize, got: usize },
    #[error("angle vector has {got} entries, expected {expected}")]
    AngleCount { expected: usize, got: usize },
    #[error("angle {value} at position {position} is outside [0, π/2]")]
    AngleOutOfRange { position: usize, value: f64 },
    #[error("state has {got} qubits, an FRQI state for n = {n} needs {expected}")]
    QubitMismatch { n: u32, expected: usize, got: usize },
    #[error("both color amplitudes vanish at position {0}; not an FRQI state")]
    EmptyPosition(usize),
    #[error("shot counts contain no shots")]
    NoShots,
    #[error("shot counts must cover qubits 0..{expected} in order")]
    ShotQubits { expected: usize },
    #[error("PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FrqiError> = std::result::Result<T, E>;

/// Raw 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl PixelImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(FrqiError::PixelCount {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// `Some(n)` when the image is a `2^n × 2^n` square with `n ≥ 1`.
    pub fn side_exponent(&self) -> Option<u32> {
        (self.width == self.height && self.width >= 2 && self.width.is_power_of_two())
            .then(|| self.width.trailing_zeros())
    }

    /// Zero-pads to the smallest enclosing `2^n` square, centering the content
    /// (extra odd pixel goes to the bottom/right).
    pub fn pad_to_envelope(&self) -> PixelImage {
        let side = self.width.max(self.height).max(2).next_power_of_two();
        self.pad_to(side)
    }

    pub(crate) fn pad_to(&self, side: usize) -> PixelImage {
        if self.width == side && self.height == side {
            return self.clone();
        }
        let top = (side - self.height) / 2;
        let left = (side - self.width) / 2;
        let mut pixels = vec![0u8; side * side];
        for r in 0..self.height {
            let dst = (top + r) * side + left;
            pixels[dst..dst + self.width]
                .copy_from_slice(&self.pixels[r * self.width..(r + 1) * self.width]);
        }
        PixelImage {
            width: side,
            height: side,
            pixels,
        }
    }

    /// Reads an 8-bit PGM (`P2` or `P5`). Other maxvals are rescaled to 0..255.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_pgm_from(BufReader::new(file))
    }

    pub fn read_pgm_from<R: BufRead + std::io::Seek>(reader: R) -> Result<Self> {
        let img = image::ImageReader::with_format(reader, ImageFormat::Pnm)
            .decode()
            .map_err(|e| FrqiError::Pgm(e.to_string()))?;
        if img.color().channel_count() != 1 {
            return Err(FrqiError::Pgm("expected a single-channel (grayscale) image".into()));
        }
        let gray = img.into_luma8();
        let (w, h) = gray.dimensions();
        Self::new(w as usize, h as usize, gray.into_raw())
    }

    /// Writes binary `P5` with maxval 255.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_pgm_to(std::io::BufWriter::new(file), false)
    }

    /// Writes `P5`, or `P2` when `ascii` is set.
    pub fn write_pgm_to<W: Write>(&self, out: W, ascii: bool) -> Result<()> {
        let encoding = if ascii {
            SampleEncoding::Ascii
        } else {
            SampleEncoding::Binary
        };
        PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Graymap(encoding))
            .write_image(
                &self.pixels,
                self.width as u32,
                self.height as u32,
                ExtendedColorType::L8,
            )
            .map_err(|e| FrqiError::Pgm(e.to_string()))
    }
}

/// Per-pixel FRQI angles θ_x ∈ [0, π/2] for a `2^n × 2^n` image, indexed by `x = row·2^n + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleImage {
    n: u32,
    angles: Vec<f64>,
}

impl AngleImage {
    pub fn new(n: u32, angles: Vec<f64>) -> Result<Self> {
        check_side_exponent(n)?;
        let expected = 1usize << (2 * n);
        if angles.len() != expected {
            return Err(FrqiError::AngleCount {
                expected,
                got: angles.len(),
            });
        }
        if let Some((position, &value)) = angles
            .iter()
            .enumerate()
            .find(|(_, a)| !(0.0..=FRAC_PI_2).contains(*a))
        {
            return Err(FrqiError::AngleOutOfRange { position, value });
        }
        Ok(Self { n, angles })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn side(&self) -> usize {
        1 << self.n
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Inverse of [`scale_to_angles`], rounding to the nearest intensity level.
    pub fn to_pixels(&self) -> PixelImage {
        let pixels = self
            .angles
            .iter()
            .map(|&t| (t / FRAC_PI_2 * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        PixelImage {
            width: self.side(),
            height: self.side(),
            pixels,
        }
    }

    /// `row,col,theta` rows.
    pub fn to_csv(&self) -> String {
        let side = self.side();
        let mut s = String::from("row,col,theta\n");
        for (x, t) in self.angles.iter().enumerate() {
            let _ = writeln!(s, "{},{},{t}", x / side, x % side);
        }
        s
    }

    /// Born probability of each FRQI basis index `(x << 1) | color`.
    pub fn basis_probabilities(&self) -> Vec<f64> {
        let norm = 1.0 / (1u64 << (2 * self.n)) as f64;
        let mut probs = Vec::with_capacity(2 * self.angles.len());
        for &t in &self.angles {
            let (s, c) = t.sin_cos();
            probs.push(c * c * norm);
            probs.push(s * s * norm);
        }
        probs
    }
}

fn check_side_exponent(n: u32) -> Result<()> {
    if n < 1 {
        Err(FrqiError::SideExponentTooSmall(n))
    } else if n > MAX_SIDE_EXPONENT {
        Err(FrqiError::SideExponentTooLarge(n))
    } else {
        Ok(())
    }
}

/// Number of qubits for a `2^n × 2^n` image: `2n + 1`.
pub fn qubit_budget(n: u32) -> Result<usize> {
    if n < 1 {
        return Err(FrqiError::SideExponentTooSmall(n));
    }
    Ok(2 * n as usize + 1)
}

/// Maps intensity `v` to `(v / 255) · π/2`.
pub fn intensity_to_angle(v: u8) -> f64 {
    f64::from(v) / 255.0 * FRAC_PI_2
}

pub fn scale_to_angles(img: &PixelImage) -> Result<AngleImage> {
    let n = img.side_exponent().ok_or(FrqiError::NotSquareEnvelope {
        width: img.width,
        height: img.height,
    })?;
    AngleImage::new(n, img.pixels.iter().map(|&v| intensity_to_angle(v)).collect())
}

/// Writes the FRQI amplitudes `cos θ_x / 2^n` and `sin θ_x / 2^n` directly.
pub fn encode_direct(angles: &AngleImage) -> StateVector {
    let prefactor = 1.0 / (1u64 << angles.n) as f64;
    let mut amps = Vec::with_capacity(2 * angles.angles.len());
    for &t in &angles.angles {
        let (s, c) = t.sin_cos();
        amps.push(Complex64::new(c * prefactor, 0.0));
        amps.push(Complex64::new(s * prefactor, 0.0));
    }
    StateVector::from_amplitudes(amps).expect("2^(2n+1) amplitudes")
}

/// Gate sequence preparing the FRQI state from `|0…0⟩`: Hadamards on the
/// position register, then one `RY(2θ_x)` on the color qubit per position,
/// controlled on the position register holding `x`. Zero-valued control bits
/// are handled by X conjugation; consecutive positions share their X layers.
pub fn preparation_circuit(angles: &AngleImage) -> Vec<GateOp> {
    let n = angles.n as usize;
    let position_qubits: Vec<usize> = (1..=2 * n).collect();
    let all_ones = (1usize << (2 * n)) - 1;
    let mut ops: Vec<GateOp> = position_qubits.iter().map(|&q| GateOp::h(q)).collect();
    // Qubits currently X-flipped, as a mask over position bits.
    let mut flipped = 0usize;
    for (x, &theta) in angles.angles.iter().enumerate() {
        let want = !x & all_ones;
        let toggle = want ^ flipped;
        for bit in 0..2 * n {
            if toggle & (1 << bit) != 0 {
                ops.push(GateOp::x(bit + 1));
            }
        }
        flipped = want;
        ops.push(GateOp::cry(position_qubits.clone(), 0, 2.0 * theta));
    }
    for bit in 0..2 * n {
        if flipped & (1 << bit) != 0 {
            ops.push(GateOp::x(bit + 1));
        }
    }
    ops
}

/// Prepares the FRQI state by simulating [`preparation_circuit`].
pub fn encode_circuit(angles: &AngleImage) -> StateVector {
    let num_qubits = 2 * angles.n as usize + 1;
    let mut state = StateVector::zero(num_qubits).expect("validated side exponent");
    state
        .apply_all(&preparation_circuit(angles))
        .expect("circuit indices are within the register");
    state
}

fn check_frqi_state(state: &StateVector, n: u32) -> Result<()> {
    check_side_exponent(n)?;
    let expected = qubit_budget(n)?;
    if state.num_qubits() != expected {
        return Err(FrqiError::QubitMismatch {
            n,
            expected,
            got: state.num_qubits(),
        });
    }
    Ok(())
}

/// θ̂_x = atan2(|amp(c=1, x)|, |amp(c=0, x)|).
pub fn retrieve_analytic(state: &StateVector, n: u32) -> Result<AngleImage> {
    check_frqi_state(state, n)?;
    let angles = state
        .amplitudes()
        .chunks_exact(2)
        .enumerate()
        .map(|(x, pair)| {
            let (c0, c1) = (pair[0].norm(), pair[1].norm());
            if c0 == 0.0 && c1 == 0.0 {
                Err(FrqiError::EmptyPosition(x))
            } else {
                Ok(c1.atan2(c0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    AngleImage::new(n, angles)
}

/// Shot-based reconstruction and its per-position support.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRetrieval {
    pub angles: AngleImage,
    /// Total shots observed at each position (both color outcomes).
    pub support: Vec<u64>,
}

impl ShotRetrieval {
    /// Positions that received no shots; their angle defaults to 0.
    pub fn unobserved_positions(&self) -> Vec<usize> {
        self.support
            .iter()
            .enumerate()
            .filter_map(|(x, &s)| (s == 0).then_some(x))
            .collect()
    }
}

/// θ̂_x = atan2(√count(c=1, x), √count(c=0, x)) from counts over all `2n + 1` qubits.
pub fn retrieve_from_shots(counts: &ShotCounts, n: u32) -> Result<ShotRetrieval> {
    let num_qubits = qubit_budget(n)?;
    check_side_exponent(n)?;
    if counts.total_shots() == 0 {
        return Err(FrqiError::NoShots);
    }
    if counts.qubits().len() != num_qubits || counts.qubits().iter().enumerate().any(|(k, &q)| k != q) {
        return Err(FrqiError::ShotQubits {
            expected: num_qubits,
        });
    }
    let positions = 1usize << (2 * n);
    let mut zeros = vec![0u64; positions];
    let mut ones = vec![0u64; positions];
    for (outcome, count) in counts.iter() {
        let x = outcome >> 1;
        if outcome & 1 == 0 {
            zeros[x] += count;
        } else {
            ones[x] += count;
        }
    }
    let angles = zeros
        .iter()
        .zip(&ones)
        .map(|(&z, &o)| (o as f64).sqrt().atan2((z as f64).sqrt()))
        .collect();
    let support = zeros.iter().zip(&ones).map(|(z, o)| z + o).collect();
    Ok(ShotRetrieval {
        angles: AngleImage::new(n, angles)?,
        support,
    })
}

/// Mean absolute per-position angle difference.
pub fn mean_abs_angle_error(a: &AngleImage, b: &AngleImage) -> f64 {
    assert_eq!(a.angles.len(), b.angles.len(), "angle images differ in size");
    a.angles
        .iter()
        .zip(&b.angles)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.angles.len() as f64
}

/// Reads whole input into memory, for callers holding a non-seekable reader.
pub fn read_pgm_bytes<R: Read>(mut reader: R) -> Result<PixelImage> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    PixelImage::read_pgm_from(std::io::Cursor::new(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn angle_image(n: u32, angles: &[f64]) -> AngleImage {
        AngleImage::new(n, angles.to_vec()).unwrap()
    }

    fn assert_state(state: &StateVector, expected: &[f64], tol: f64) {
        for (i, (a, e)) in state.amplitudes().iter().zip(expected).enumerate() {
            assert!((a.re - e).abs() <= tol && a.im.abs() <= tol, "index {i}: {a} vs {e}");
        }
    }

    #[test]
    fn scaling_endpoints_and_midpoint() {
        assert_eq!(intensity_to_angle(0), 0.0);
        assert_eq!(intensity_to_angle(255), FRAC_PI_2);
        assert!((intensity_to_angle(128) - 0.788_478_156_195_085_3).abs() < 1e-15);
        // every level survives the round trip
        let img = PixelImage::new(16, 16, (0..=255).collect()).unwrap();
        assert_eq!(scale_to_angles(&img).unwrap().to_pixels(), img);
    }

    #[test]
    fn qubit_budget_examples() {
        assert_eq!(qubit_budget(3).unwrap(), 7);
        assert_eq!(qubit_budget(2).unwrap(), 5);
        assert_eq!(qubit_budget(5).unwrap(), 11);
        assert!(matches!(qubit_budget(0), Err(FrqiError::SideExponentTooSmall(0))));
    }

    #[test]
    fn angle_image_invariants() {
        assert!(matches!(
            AngleImage::new(1, vec![0.0; 3]),
            Err(FrqiError::AngleCount { expected: 4, got: 3 })
        ));
        assert!(matches!(
            AngleImage::new(1, vec![0.0, 2.0, 0.0, 0.0]),
            Err(FrqiError::AngleOutOfRange { position: 1, .. })
        ));
        assert!(AngleImage::new(1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn scale_rejects_non_envelope() {
        let img = PixelImage::filled(28, 28, 3);
        assert!(matches!(scale_to_angles(&img), Err(FrqiError::NotSquareEnvelope { .. })));
        let padded = img.pad_to_envelope();
        assert_eq!((padded.width(), padded.height()), (32, 32));
        assert_eq!(padded.get(1, 1), 0);
        assert_eq!(padded.get(2, 2), 3);
        assert_eq!(padded.get(29, 29), 3);
        assert_eq!(padded.get(30, 30), 0);
        assert_eq!(scale_to_angles(&padded).unwrap().n(), 5);
    }

    #[test]
    fn encode_direct_examples() {
        let zero = encode_direct(&angle_image(1, &[0.0; 4]));
        assert_state(&zero, &[0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0], 0.0);
        let white = encode_direct(&angle_image(1, &[FRAC_PI_2; 4]));
        assert_state(&white, &[0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5], 1e-16);
        let one = encode_direct(&angle_image(1, &[FRAC_PI_4, 0.0, 0.0, 0.0]));
        let r = SQRT_2 / 4.0;
        assert_state(&one, &[r, r, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0], 1e-15);
    }

    #[test]
    fn register_map_places_rows_high() {
        // Single lit pixel at (row 1, col 0) in a 2×2 image → x = 2.
        let img = PixelImage::new(2, 2, vec![0, 0, 255, 0]).unwrap();
        let state = encode_direct(&scale_to_angles(&img).unwrap());
        // (x = 2, color = 1) → index 0b101: qubit 0 = color, qubit 1 = col bit, qubit 2 = row bit.
        assert!((state.amplitudes()[0b101].re - 0.5).abs() < 1e-15);
        assert!(state.amplitudes()[0b100].re.abs() < 1e-15);
        let col_bit = state.probabilities(&[1]).unwrap();
        let row_bit = state.probabilities(&[2]).unwrap();
        assert!((col_bit[0] - 0.5).abs() < 1e-15 && (row_bit[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn all_zero_image_color_marginal() {
        let s = encode_direct(&angle_image(1, &[0.0; 4]));
        assert_eq!(s.probabilities(&[0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn circuit_on_zero_image_matches_direct() {
        for n in 1..=3 {
            let a = AngleImage::new(n, vec![0.0; 1 << (2 * n)]).unwrap();
            let direct = encode_direct(&a);
            let circuit = encode_circuit(&a);
            // H products may round the 1/2^n prefactor by an ulp.
            for (x, y) in direct.amplitudes().iter().zip(circuit.amplitudes()) {
                assert!((x - y).norm() <= 4.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn retrieval_examples() {
        let zero = angle_image(2, &[0.0; 16]);
        let back = retrieve_analytic(&encode_direct(&zero), 2).unwrap();
        assert!(back.angles().iter().all(|&t| t == 0.0));

        let bad = StateVector::zero(3).unwrap();
        assert!(matches!(retrieve_analytic(&bad, 1), Err(FrqiError::EmptyPosition(1))));
        assert!(matches!(
            retrieve_analytic(&StateVector::zero(4).unwrap(), 1),
            Err(FrqiError::QubitMismatch { .. })
        ));
    }

    #[test]
    fn shot_retrieval_of_black_image() {
        let zero = angle_image(2, &[0.0; 16]);
        let counts = encode_direct(&zero).sample(&(0..5).collect::<Vec<_>>(), 10_000, 3).unwrap();
        let r = retrieve_from_shots(&counts, 2).unwrap();
        assert!(r.angles.angles().iter().all(|&t| t == 0.0));
        assert_eq!(r.support.iter().sum::<u64>(), 10_000);
    }

    #[test]
    fn shot_retrieval_of_mid_gray() {
        let gray = angle_image(1, &[FRAC_PI_4; 4]);
        let counts = encode_direct(&gray).sample(&[0, 1, 2], 10_000, 11).unwrap();
        let r = retrieve_from_shots(&counts, 1).unwrap();
        for &t in r.angles.angles() {
            assert!((t - FRAC_PI_4).abs() < 0.1, "{t}");
        }
    }

    #[test]
    fn shot_retrieval_flags_unobserved_positions() {
        let mut counts = std::collections::BTreeMap::new();
        counts.insert(0b001, 5u64); // x = 0, color 1
        let shots = ShotCounts::from_counts(vec![0, 1, 2], counts);
        let r = retrieve_from_shots(&shots, 1).unwrap();
        assert_eq!(r.angles.angles()[0], FRAC_PI_2);
        assert_eq!(r.unobserved_positions(), vec![1, 2, 3]);
        assert!(r.angles.angles()[1..].iter().all(|&t| t == 0.0));
    }

    #[test]
    fn shot_retrieval_errors() {
        let empty = ShotCounts::from_counts(vec![0, 1, 2], Default::default());
        assert!(matches!(retrieve_from_shots(&empty, 1), Err(FrqiError::NoShots)));
        let mut counts = std::collections::BTreeMap::new();
        counts.insert(0, 1u64);
        let wrong = ShotCounts::from_counts(vec![0, 1], counts);
        assert!(matches!(retrieve_from_shots(&wrong, 1), Err(FrqiError::ShotQubits { .. })));
    }

    #[test]
    fn pgm_round_trip_both_encodings() {
        let img = PixelImage::new(3, 2, vec![0, 17, 255, 128, 3, 99]).unwrap();
        for ascii in [false, true] {
            let mut buf = Vec::new();
            img.write_pgm_to(&mut buf, ascii).unwrap();
            assert_eq!(&buf[..2], if ascii { b"P2" } else { b"P5" });
            assert_eq!(read_pgm_bytes(buf.as_slice()).unwrap(), img);
        }
    }

    #[test]
    fn angle_csv_layout() {
        let csv = angle_image(1, &[0.0, 0.5, 1.0, 1.5]).to_csv();
        assert_eq!(csv, "row,col,theta\n0,0,0\n0,1,0.5\n1,0,1\n1,1,1.5\n");
    }

    fn arb_angles() -> impl Strategy<Value = AngleImage> {
        (1..=3u32).prop_flat_map(|n| {
            prop::collection::vec(0.0..=FRAC_PI_2, 1 << (2 * n))
                .prop_map(move |a| AngleImage::new(n, a).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn encoded_states_are_normalized(a in arb_angles()) {
            prop_assert!((encode_direct(&a).norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn circuit_preparation_matches_direct(a in arb_angles()) {
            let d = encode_direct(&a);
            let c = encode_circuit(&a);
            for (x, y) in d.amplitudes().iter().zip(c.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-10);
            }
        }

        #[test]
        fn analytic_round_trip(a in arb_angles()) {
            let back = retrieve_analytic(&encode_direct(&a), a.n()).unwrap();
            for (x, y) in a.angles().iter().zip(back.angles()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn scaling_is_monotone(a in any::<u8>(), b in any::<u8>()) {
            let (ta, tb) = (intensity_to_angle(a), intensity_to_angle(b));
            prop_assert_eq!(a.cmp(&b), ta.partial_cmp(&tb).unwrap());
        }
    }
}
