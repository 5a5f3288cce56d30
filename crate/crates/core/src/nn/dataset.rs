//! Labeled datasets: IDX (MNIST) and CSV readers plus small synthetic tasks.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Idx,
    Csv,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// `[n, item dims...]`
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Vec<usize>, splits: Vec<Split>, num_classes: usize) -> Result<Self> {
        if samples.batch_len() != labels.len() || labels.len() != splits.len() {
            return Err(Error::InvalidDataset(format!(
                "{} samples, {} labels, {} split tags",
                samples.batch_len(),
                labels.len(),
                splits.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidDataset(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self {
            samples,
            labels,
            splits,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn item_dims(&self) -> &[usize] {
        &self.samples.shape()[1..]
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.splits.contains(&split)
    }

    /// Samples of one split, in their original order.
    pub fn subset(&self, split: Split) -> Dataset {
        self.select(&self.indices_of(split))
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            splits: indices.iter().map(|&i| self.splits[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// First `n` samples of a split (keeps other splits intact).
    pub fn truncate_split(&self, split: Split, n: usize) -> Dataset {
        let mut seen = 0;
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                if self.splits[i] != split {
                    return true;
                }
                seen += 1;
                seen <= n
            })
            .collect();
        self.select(&keep)
    }

    /// Re-tags the last `n` training samples as validation.
    pub fn with_validation_tail(mut self, n: usize) -> Result<Dataset> {
        let train = self.indices_of(Split::Train);
        if n >= train.len() {
            return Err(Error::InvalidDataset(format!(
                "cannot carve {n} validation samples out of {} training samples",
                train.len()
            )));
        }
        for &i in &train[train.len() - n..] {
            self.splits[i] = Split::Validation;
        }
        Ok(self)
    }

    pub fn concat(mut self, other: Dataset) -> Result<Dataset> {
        if self.item_dims() != other.item_dims() {
            return Err(Error::InvalidDataset("cannot concatenate datasets with different item shapes".into()));
        }
        let mut shape = self.samples.shape().to_vec();
        shape[0] += other.len();
        let mut data = self.samples.into_data();
        data.extend_from_slice(other.samples.data());
        self.labels.extend(other.labels);
        self.splits.extend(other.splits);
        let num_classes = self.num_classes.max(other.num_classes);
        Dataset::new(Tensor::from_parts(shape, data), self.labels, self.splits, num_classes)
    }
}

/// Loads a dataset.
///
/// For [`DatasetFormat::Idx`], `path` is either a directory holding the four standard MNIST
/// files (`train-images-idx3-ubyte`, ...) or a single image file whose labels live next to it
/// under the matching `labels-idx1` name. Pixel bytes are scaled to `[0, 1]`.
///
/// For [`DatasetFormat::Csv`], each row is `label,feature,feature,...`; all rows are tagged
/// as training data.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    match format {
        DatasetFormat::Csv => read_csv(path),
        DatasetFormat::Idx if path.is_dir() => {
            let train = read_idx_pair(&path.join("train-images-idx3-ubyte"), &path.join("train-labels-idx1-ubyte"), Split::Train)?;
            let test_images = path.join("t10k-images-idx3-ubyte");
            if test_images.exists() {
                let test = read_idx_pair(&test_images, &path.join("t10k-labels-idx1-ubyte"), Split::Test)?;
                train.concat(test)
            } else {
                Ok(train)
            }
        }
        DatasetFormat::Idx => {
            let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
            let labels = path.with_file_name(name.replace("images-idx3", "labels-idx1"));
            let split = if name.starts_with("t10k") { Split::Test } else { Split::Train };
            read_idx_pair(path, &labels, split)
        }
    }
}

fn read_idx_pair(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.first() != lab.dims.first() {
        return Err(Error::InvalidDataset(format!(
            "{} has {:?} images but {} has {:?} labels",
            images.display(),
            img.dims.first(),
            labels.display(),
            lab.dims.first()
        )));
    }
    let n = img.dims[0];
    let labels: Vec<usize> = lab.values.iter().map(|&v| v as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    let mut shape = img.dims.clone();
    if shape.len() == 3 {
        // [n, rows, cols] -> [n, rows * cols]
        shape = vec![n, shape[1] * shape[2]];
    }
    let scale = if img.type_code == 0x08 { 1.0 / 255.0 } else { 1.0 };
    let data = img.values.into_iter().map(|v| v * scale).collect();
    Dataset::new(Tensor::new(shape, data)?, labels, vec![split; n], num_classes)
}

/// Raw contents of an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub type_code: u8,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

/// Reads an IDX file: magic `0x0000TTDD` (T = element type, D = rank), big-endian
/// `u32` dimensions, then big-endian elements.
pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(Error::file(path))?;
    parse_idx(path, &bytes)
}

pub fn parse_idx(path: &Path, bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: 4,
            actual: bytes.len() as u64,
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::parse(path, "byte 0", format!("bad magic {:02x}{:02x}, expected 0000", bytes[0], bytes[1])));
    }
    let type_code = bytes[2];
    let width = match type_code {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        other => return Err(Error::parse(path, "byte 2", format!("unknown element type 0x{other:02x}"))),
    };
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(Error::parse(path, "byte 3", "rank must be at least 1"));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Truncated {
            path: path.into(),
            expected: header as u64,
            actual: bytes.len() as u64,
        });
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let expected = header + count * width;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    let payload = &bytes[header..];
    let values = payload
        .chunks_exact(width)
        .map(|c| match type_code {
            0x08 => f64::from(c[0]),
            0x09 => f64::from(c[0] as i8),
            0x0B => f64::from(i16::from_be_bytes([c[0], c[1]])),
            0x0C => f64::from(i32::from_be_bytes(c.try_into().unwrap())),
            0x0D => f64::from(f32::from_be_bytes(c.try_into().unwrap())),
            _ => f64::from_be_bytes(c.try_into().unwrap()),
        })
        .collect();
    Ok(IdxArray { type_code, dims, values })
}

/// Serializes unsigned bytes as an IDX file (type 0x08).
pub fn encode_idx_u8(dims: &[usize], values: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(values);
    out
}

fn read_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(Error::file(path))?;
    parse_csv(path, &text)
}

pub fn parse_csv(path: &Path, text: &str) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("line {}", lineno + 1);
        let mut fields = line.split(',').map(str::trim);
        let label_text = fields.next().unwrap_or_default();
        let label: usize = label_text
            .parse()
            .map_err(|_| Error::parse(path, loc(), format!("label `{label_text}` is not a class id")))?;
        let start = data.len();
        for (col, f) in fields.enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, loc(), format!("column {}: `{f}` is not a number", col + 2)))?;
            if !v.is_finite() {
                return Err(Error::parse(path, loc(), format!("column {}: non-finite value", col + 2)));
            }
            data.push(v);
        }
        let n = data.len() - start;
        match width {
            None if n == 0 => return Err(Error::parse(path, loc(), "row has no features")),
            None => width = Some(n),
            Some(w) if w != n => return Err(Error::parse(path, loc(), format!("expected {w} features, found {n}"))),
            _ => {}
        }
        labels.push(label);
    }
    let width = width.ok_or_else(|| Error::parse(path, "line 1", "no rows"))?;
    let n = labels.len();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Tensor::from_parts(vec![n, width], data), labels, vec![Split::Train; n], num_classes)
}

/// The four-row XOR truth table, all tagged as training data.
pub fn xor() -> Dataset {
    let samples = Tensor::from_parts(vec![4, 2], vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    Dataset::new(samples, vec![0, 1, 1, 0], vec![Split::Train; 4], 2).unwrap()
}

/// A CIFAR-like 10-class task of `3 x 8 x 8` colour images.
///
/// Each class is a prototype built from a base colour, an oriented stripe pattern and a
/// blob position. Samples perturb the prototype with a random shift, per-channel gain,
/// contrast jitter and pixel noise, so neighbouring classes overlap and the task has a
/// non-zero Bayes error.
pub fn cifar_like(train: usize, validation: usize, test: usize, seed: u64) -> Dataset {
    const SIDE: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<[f64; 3 * SIDE * SIDE]> = (0..10).map(|c| cifar_prototype(c, SIDE)).collect();
    let total = train + validation + test;
    let mut data = Vec::with_capacity(total * 3 * SIDE * SIDE);
    let mut labels = Vec::with_capacity(total);
    for _ in 0..total {
        let class = rng.gen_range(0..10);
        let proto = &prototypes[class];
        let dy: isize = rng.gen_range(-1..=1);
        let dx: isize = rng.gen_range(-1..=1);
        let contrast = rng.gen_range(0.6..1.3);
        let gains: [f64; 3] = [rng.gen_range(0.7..1.3), rng.gen_range(0.7..1.3), rng.gen_range(0.7..1.3)];
        for (c, gain) in gains.iter().enumerate() {
            for y in 0..SIDE {
                for x in 0..SIDE {
                    let sy = (y as isize + dy).clamp(0, SIDE as isize - 1) as usize;
                    let sx = (x as isize + dx).clamp(0, SIDE as isize - 1) as usize;
                    let base = proto[(c * SIDE + sy) * SIDE + sx];
                    let noise: f64 = rng.gen_range(-0.35..0.35);
                    data.push(((base - 0.5) * contrast * gain + 0.5 + noise).clamp(0.0, 1.0));
                }
            }
        }
        labels.push(class);
    }
    let mut splits = vec![Split::Train; train];
    splits.extend(vec![Split::Validation; validation]);
    splits.extend(vec![Split::Test; test]);
    let samples = Tensor::from_parts(vec![total, 3, SIDE, SIDE], data);
    Dataset::new(samples, labels, splits, 10).unwrap()
}

fn cifar_prototype(class: usize, side: usize) -> [f64; 3 * 8 * 8] {
    const COLOURS: [[f64; 3]; 10] = [
        [0.8, 0.3, 0.3],
        [0.3, 0.8, 0.3],
        [0.3, 0.3, 0.8],
        [0.7, 0.7, 0.3],
        [0.7, 0.3, 0.7],
        [0.3, 0.7, 0.7],
        [0.6, 0.5, 0.4],
        [0.4, 0.5, 0.6],
        [0.5, 0.6, 0.4],
        [0.5, 0.5, 0.5],
    ];
    let mut img = [0.0; 3 * 8 * 8];
    let angle = class as f64 * std::f64::consts::PI / 5.0;
    let (s, c) = angle.sin_cos();
    let freq = 1.0 + (class % 3) as f64 * 0.6;
    let (by, bx) = ((class * 3) % side, (class * 5 + 2) % side);
    for ch in 0..3 {
        for y in 0..side {
            for x in 0..side {
                let t = (x as f64 * c + y as f64 * s) * freq * 0.8;
                let stripe = 0.5 + 0.35 * t.sin();
                let d2 = (y as f64 - by as f64).powi(2) + (x as f64 - bx as f64).powi(2);
                let blob = 0.4 * (-d2 / 4.0).exp();
                img[(ch * side + y) * side + x] = (COLOURS[class][ch] * stripe + blob).clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// Shuffled index order for one epoch.
pub(crate) fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Locates the MNIST directory used by tests, examples and the default configs.
pub fn default_mnist_dir() -> PathBuf {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    here.join("../../data/mnist")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_magic_0803_is_an_image_batch() {
        let bytes = encode_idx_u8(&[2, 2, 3], &[0, 255, 0, 0, 0, 0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        let arr = parse_idx(Path::new("x"), &bytes).unwrap();
        assert_eq!(arr.dims, vec![2, 2, 3]);
        assert_eq!(arr.values[1], 255.0);
    }

    #[test]
    fn truncated_idx_reports_byte_counts() {
        let mut bytes = encode_idx_u8(&[2, 2, 2], &[0; 8]);
        bytes.truncate(bytes.len() - 3);
        match parse_idx(Path::new("imgs"), &bytes) {
            Err(Error::Truncated { expected, actual, .. }) => {
                assert_eq!(expected, 24);
                assert_eq!(actual, 21);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_names_offset() {
        let err = parse_idx(Path::new("f"), &[1, 0, 8, 1, 0, 0, 0, 0]).unwrap_err();
        assert!(err.to_string().contains("byte 0"), "{err}");
    }

    #[test]
    fn csv_row_is_label_then_features() {
        let ds = parse_csv(Path::new("a.csv"), "1,0.5,0.25\n").unwrap();
        assert_eq!(ds.labels, vec![1]);
        assert_eq!(ds.samples.data(), &[0.5, 0.25]);
        assert_eq!(ds.splits, vec![Split::Train]);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = parse_csv(Path::new("a.csv"), "1,0.5\n0,abc\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_csv(Path::new("a.csv"), "1,0.5\n0,1,2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn idx_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let imgs: Vec<u8> = (0..2 * 4).map(|i| i as u8 * 30).collect();
        fs::write(dir.path().join("train-images-idx3-ubyte"), encode_idx_u8(&[2, 2, 2], &imgs)).unwrap();
        fs::write(dir.path().join("train-labels-idx1-ubyte"), encode_idx_u8(&[2], &[3, 7])).unwrap();
        let ds = load_dataset(dir.path(), DatasetFormat::Idx).unwrap();
        assert_eq!(ds.samples.shape(), &[2, 4]);
        assert_eq!(ds.labels, vec![3, 7]);
        assert!((ds.samples.data()[1] - 30.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn validation_tail_retags() {
        let ds = xor().with_validation_tail(1).unwrap();
        assert_eq!(ds.indices_of(Split::Validation), vec![3]);
        assert!(xor().with_validation_tail(4).is_err());
    }

    #[test]
    fn cifar_like_is_deterministic() {
        let a = cifar_like(20, 5, 5, 3);
        let b = cifar_like(20, 5, 5, 3);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.item_dims(), &[3, 8, 8]);
        assert_eq!(a.subset(Split::Validation).len(), 5);
    }
}
