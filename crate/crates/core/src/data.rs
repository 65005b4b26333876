//! MNIST ingestion: IDX parsing, resizing to `2^n` squares, balanced subsets,
//! and a binary cache of preprocessed angle images.
//!
//! # Cache format
//!
//! All integers and floats little-endian:
//!
//! | bytes              | content                                   |
//! |--------------------|-------------------------------------------|
//! | 4                  | magic `FQP1`                              |
//! | 4                  | `u32` sample count `N`                    |
//! | 4                  | `u32` side exponent `n`                   |
//! | `8 · N · 4^n`      | `f64` angles, sample-major, row-major     |
//! | `N`                | `u8` labels                               |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frqi::{scale_to_angles, AngleImage, FrqiError, PixelImage};
use crate::train::Sample;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const CACHE_MAGIC: &[u8; 4] = b"FQP1";
pub const NUM_DIGITS: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: truncated at byte offset {offset}, needed {needed} bytes")]
    Truncated { path: PathBuf, offset: usize, needed: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is not a digit class")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("unsupported resize target {0}; expected 8, 16 or 32")]
    UnsupportedTarget(usize),
    #[error("class {class} has {available} samples, {requested} requested")]
    InsufficientSamples { class: u8, available: usize, requested: usize },
    #[error("cache: {0}")]
    Cache(String),
    #[error("no MNIST {split} files found in {dir}")]
    MissingFiles { dir: PathBuf, split: Split },
    #[error(transparent)]
    Frqi(#[from] FrqiError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// File-name prefix used by the canonical distribution.
    pub fn file_prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    images: Vec<PixelImage>,
    labels: Vec<u8>,
    split: Split,
}

impl Dataset {
    pub fn new(images: Vec<PixelImage>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| usize::from(l) >= NUM_DIGITS) {
            return Err(DataError::LabelOutOfRange { index, label });
        }
        Ok(Self { images, labels, split })
    }

    pub fn images(&self) -> &[PixelImage] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_DIGITS] {
        let mut counts = [0; NUM_DIGITS];
        for &l in &self.labels {
            counts[usize::from(l)] += 1;
        }
        counts
    }

    fn select(&self, indices: impl IntoIterator<Item = usize>) -> Dataset {
        let (images, labels) = indices
            .into_iter()
            .map(|i| (self.images[i].clone(), self.labels[i]))
            .unzip();
        Dataset {
            images,
            labels,
            split: self.split,
        }
    }

    /// Keeps only samples whose label is in `classes`, preserving order.
    pub fn filter_classes(&self, classes: &[u8]) -> Dataset {
        self.select((0..self.len()).filter(|&i| classes.contains(&self.labels[i])))
    }
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct IdxReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
}

impl IdxReader<'_> {
    fn take(&self, offset: usize, len: usize) -> Result<&[u8]> {
        self.bytes.get(offset..offset + len).ok_or_else(|| DataError::Truncated {
            path: self.path.to_path_buf(),
            offset: self.bytes.len(),
            needed: offset + len,
        })
    }

    fn u32_at(&self, offset: usize) -> Result<u32> {
        let b = self.take(offset, 4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn check_magic(&self, expected: u32) -> Result<()> {
        let found = self.u32_at(0)?;
        if found != expected {
            return Err(DataError::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

/// Parses an IDX3 image file (plain or gzip).
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Vec<PixelImage>> {
    let path = path.as_ref();
    let bytes = read_maybe_gzip(path)?;
    let r = IdxReader { path, bytes: &bytes };
    r.check_magic(IMAGES_MAGIC)?;
    let count = r.u32_at(4)? as usize;
    let rows = r.u32_at(8)? as usize;
    let cols = r.u32_at(12)? as usize;
    let body = r.take(16, count * rows * cols)?;
    if rows * cols == 0 {
        return Ok(Vec::new());
    }
    body.chunks_exact(rows * cols)
        .map(|px| PixelImage::new(cols, rows, px.to_vec()).map_err(DataError::from))
        .collect()
}

/// Parses an IDX1 label file (plain or gzip).
pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_maybe_gzip(path)?;
    let r = IdxReader { path, bytes: &bytes };
    r.check_magic(LABELS_MAGIC)?;
    let count = r.u32_at(4)? as usize;
    Ok(r.take(8, count)?.to_vec())
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let images = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    Dataset::new(images, labels, split)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        enc.write_all(bytes)
            .and_then(|_| enc.finish())
            .and_then(|mut w| w.flush())
            .map_err(io_err(path))
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(bytes).and_then(|_| w.flush()).map_err(io_err(path))
    }
}

/// Writes IDX files; a `.gz` extension selects gzip compression.
pub fn write_idx(dataset: &Dataset, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    let (rows, cols) = dataset
        .images
        .first()
        .map_or((28, 28), |im| (im.height(), im.width()));
    let mut out = Vec::with_capacity(16 + dataset.len() * rows * cols);
    for v in [IMAGES_MAGIC, dataset.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for im in &dataset.images {
        assert_eq!((im.height(), im.width()), (rows, cols), "IDX images share one shape");
        out.extend_from_slice(im.pixels());
    }
    write_bytes(images.as_ref(), &out)?;

    let mut out = Vec::with_capacity(8 + dataset.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    out.extend_from_slice(&dataset.labels);
    write_bytes(labels.as_ref(), &out)
}

/// Locates `{prefix}-images-idx3-ubyte[.gz]` and the matching labels file in `dir`.
pub fn find_mnist_files(dir: impl AsRef<Path>, split: Split) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let prefix = split.file_prefix();
    let find = |kind: &str| {
        [
            format!("{prefix}-{kind}-ubyte"),
            format!("{prefix}-{kind}-ubyte.gz"),
            format!("{prefix}-{}.{}-ubyte", &kind[..kind.len() - 5], &kind[kind.len() - 4..]),
        ]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
    };
    match (find("images-idx3"), find("labels-idx1")) {
        (Some(i), Some(l)) => Ok((i, l)),
        _ => Err(DataError::MissingFiles {
            dir: dir.to_path_buf(),
            split,
        }),
    }
}

pub fn load_mnist(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let (images, labels) = find_mnist_files(dir, split)?;
    load_idx(images, labels, split)
}

/// The `MNIST_DIR` environment variable, if set and non-empty.
pub fn mnist_dir_from_env() -> Option<PathBuf> {
    std::env::var_os("MNIST_DIR")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeFilter {
    /// Triangle kernel widened by the downscale factor (antialiased bilinear).
    #[default]
    Bilinear,
    /// Exact area averaging over the covered source pixels.
    Area,
}

/// Per-output-pixel `(first source index, weights)` along one axis; weights sum to 1.
fn axis_weights(src: usize, dst: usize, filter: ResizeFilter) -> Vec<(usize, Vec<f64>)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| match filter {
            ResizeFilter::Bilinear => {
                let support = scale.max(1.0);
                let center = (i as f64 + 0.5) * scale;
                let lo = (center - support).floor().max(0.0) as usize;
                let hi = ((center + support).ceil() as usize).min(src);
                let mut w: Vec<f64> = (lo..hi)
                    .map(|j| (1.0 - ((j as f64 + 0.5 - center) / support).abs()).max(0.0))
                    .collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= total);
                (lo, w)
            }
            ResizeFilter::Area => {
                let start = i as f64 * scale;
                let end = start + scale;
                let lo = start.floor() as usize;
                let hi = (end.ceil() as usize).min(src);
                let w = (lo..hi)
                    .map(|j| ((j + 1) as f64).min(end) - (j as f64).max(start))
                    .map(|overlap| overlap / scale)
                    .collect();
                (lo, w)
            }
        })
        .collect()
}

fn downscale(img: &PixelImage, side: usize, filter: ResizeFilter) -> PixelImage {
    let (w, h) = (img.width(), img.height());
    let xw = axis_weights(w, side, filter);
    let yw = axis_weights(h, side, filter);
    // Horizontal pass into floats, then vertical, rounding once at the end.
    let mut tmp = vec![0.0; h * side];
    for r in 0..h {
        let row = &img.pixels()[r * w..(r + 1) * w];
        for (c, (lo, ws)) in xw.iter().enumerate() {
            tmp[r * side + c] = ws.iter().zip(&row[*lo..]).map(|(k, &p)| k * f64::from(p)).sum();
        }
    }
    let mut out = vec![0u8; side * side];
    for (r, (lo, ws)) in yw.iter().enumerate() {
        for c in 0..side {
            let v: f64 = ws.iter().enumerate().map(|(k, wt)| wt * tmp[(lo + k) * side + c]).sum();
            out[r * side + c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    PixelImage::new(side, side, out).expect("sized buffer")
}

/// Resizes to a `target × target` square: downscaling uses `filter`, larger
/// targets zero-pad the centered image (28 → 32 adds a 2-pixel border).
pub fn resize(img: &PixelImage, target: usize, filter: ResizeFilter) -> Result<PixelImage> {
    if ![8, 16, 32].contains(&target) {
        return Err(DataError::UnsupportedTarget(target));
    }
    if img.width() == target && img.height() == target {
        return Ok(img.clone());
    }
    if img.width() <= target && img.height() <= target {
        return Ok(img.pad_to(target));
    }
    if img.width() != img.height() {
        return Err(FrqiError::NotSquareEnvelope {
            width: img.width(),
            height: img.height(),
        }
        .into());
    }
    Ok(downscale(img, target, filter))
}

/// Class-balanced random subset; the chosen samples keep their original order.
pub fn subset(dataset: &Dataset, per_class: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(per_class * NUM_DIGITS);
    for class in 0..NUM_DIGITS as u8 {
        let members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < per_class {
            return Err(DataError::InsufficientSamples {
                class,
                available: members.len(),
                requested: per_class,
            });
        }
        chosen.extend(rand::seq::index::sample(&mut rng, members.len(), per_class).into_iter().map(|k| members[k]));
    }
    chosen.sort_unstable();
    Ok(dataset.select(chosen))
}

/// Resizes every image to `2^n` and converts it to FRQI angles. Labels are
/// remapped to their position in `classes` when given (e.g. `[3, 8]` → 0, 1).
pub fn to_samples(dataset: &Dataset, n: u32, filter: ResizeFilter, classes: Option<&[u8]>) -> Result<Vec<Sample>> {
    let side = 1usize << n;
    dataset
        .images
        .iter()
        .zip(&dataset.labels)
        .filter_map(|(im, &label)| {
            let label = match classes {
                Some(cs) => cs.iter().position(|&c| c == label)?,
                None => usize::from(label),
            };
            Some(
                resize(im, side, filter)
                    .and_then(|px| Ok(scale_to_angles(&px)?))
                    .map(|angles| Sample { angles, label }),
            )
        })
        .collect()
}

pub fn write_cache(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let n = samples.first().map_or(0, |s| s.angles.n());
    if samples.iter().any(|s| s.angles.n() != n) {
        return Err(DataError::Cache("samples have mixed image sizes".into()));
    }
    let labels = samples
        .iter()
        .map(|s| u8::try_from(s.label).map_err(|_| DataError::Cache(format!("label {} does not fit a byte", s.label))))
        .collect::<Result<Vec<u8>>>()?;
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut write = || -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(samples.len() as u32).to_le_bytes())?;
        w.write_all(&n.to_le_bytes())?;
        for s in samples {
            for a in s.angles.angles() {
                w.write_all(&a.to_le_bytes())?;
            }
        }
        w.write_all(&labels)?;
        w.flush()
    };
    write().map_err(io_err(path))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let truncated = |needed: usize| DataError::Truncated {
        path: path.to_path_buf(),
        offset: bytes.len(),
        needed,
    };
    if bytes.len() < 12 {
        return Err(truncated(12));
    }
    if &bytes[..4] != CACHE_MAGIC {
        return Err(DataError::Cache(format!("bad magic {:?}", &bytes[..4])));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let pixels = 1usize << (2 * n.min(16));
    let needed = 12 + count * (8 * pixels + 1);
    if bytes.len() < needed {
        return Err(truncated(needed));
    }
    if bytes.len() > needed {
        return Err(DataError::Cache(format!("{} trailing bytes", bytes.len() - needed)));
    }
    let (angles, labels) = bytes[12..].split_at(count * 8 * pixels);
    angles
        .chunks_exact(8 * pixels)
        .zip(labels)
        .map(|(chunk, &label)| {
            let values = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Ok(Sample {
                angles: AngleImage::new(n, values)?,
                label: usize::from(label),
            })
        })
        .collect()
}
