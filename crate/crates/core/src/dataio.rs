//! Datasets: MNIST from IDX files, Gaussian blobs, and seeded mini-batches.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, RngState, Scalar};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub x: Matrix<T>,
    pub y: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Matrix<T>, y: Vec<usize>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        let d = Self {
            x,
            y,
            num_classes,
            name: name.into(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.y.len() {
            return Err(Error::arg(format!(
                "{} rows but {} labels",
                self.x.rows(),
                self.y.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::arg("dataset needs at least 2 classes"));
        }
        let counts = self.class_counts()?;
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::arg(format!("class {c} has no samples")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.y {
            if y >= self.num_classes {
                return Err(Error::Label {
                    label: y,
                    classes: self.num_classes,
                });
            }
            counts[y] += 1;
        }
        Ok(counts)
    }

    /// First `n` samples in insertion order.
    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        Self::new(
            self.x.select_rows(&idx),
            self.y[..n].to_vec(),
            self.num_classes,
            format!("{}[:{n}]", self.name),
        )
    }

    /// SHA-256 over shape, input bits (as f64) and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.x.rows() as u64).to_le_bytes());
        h.update((self.x.cols() as u64).to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        for v in self.x.as_slice() {
            h.update(v.as_f64().to_bits().to_le_bytes());
        }
        for &y in &self.y {
            h.update((y as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn read_u32(bytes: &[u8], at: usize, name: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            source_name: name.to_string(),
            message: format!("truncated header at byte {at}"),
        })
}

fn parse_err(name: &str, message: String) -> Error {
    Error::Parse {
        source_name: name.to_string(),
        message,
    }
}

/// Parses an IDX3 image file into `(count, rows·cols, raw bytes)`.
pub fn parse_idx_images(bytes: &[u8], name: &str) -> Result<(usize, usize, Vec<u8>)> {
    let magic = read_u32(bytes, 0, name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(parse_err(name, format!("bad image magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4, name)? as usize;
    let rows = read_u32(bytes, 8, name)? as usize;
    let cols = read_u32(bytes, 12, name)? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(parse_err(
            name,
            format!("expected {need} pixel bytes, found {}", body.len()),
        ));
    }
    Ok((n, rows * cols, body.to_vec()))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8], name: &str) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(parse_err(name, format!("bad label magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4, name)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(parse_err(
            name,
            format!("expected {n} label bytes, found {}", body.len()),
        ));
    }
    Ok(body.to_vec())
}

/// Loads an image/label IDX pair; pixels are divided by 255 into [0, 1].
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let img_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n, dim, pixels) = parse_idx_images(&img_bytes, &images_path.display().to_string())?;
    let labels = parse_idx_labels(&lbl_bytes, &labels_path.display().to_string())?;
    if labels.len() != n {
        return Err(parse_err(
            &labels_path.display().to_string(),
            format!("{} labels for {n} images", labels.len()),
        ));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let scale = T::lit(1.0 / 255.0);
    let data = pixels.into_iter().map(|p| T::lit(p as f64) * scale).collect();
    let x = Matrix::from_vec(n, dim, data)?;
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(x, labels.into_iter().map(usize::from).collect(), num_classes, name)
}

/// Standard MNIST training-set file names inside `dir`.
pub fn mnist_train_paths(dir: &Path) -> (PathBuf, PathBuf) {
    let pick = |a: &str, b: &str| {
        let p = dir.join(a);
        if p.exists() {
            p
        } else {
            dir.join(b)
        }
    };
    (
        pick("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
        pick("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobsSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for BlobsSpec {
    fn default() -> Self {
        Self {
            num_classes: 3,
            per_class: 100,
            dim: 10,
            separation: 4.0,
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

impl BlobsSpec {
    /// Three noisy classes hard enough that cross-entropy alone does not collapse.
    pub fn desk_fixture() -> Self {
        Self {
            noise_sigma: 1.0,
            ..Self::default()
        }
    }

    pub fn generate<T: Scalar>(&self) -> Result<Dataset<T>> {
        make_blobs(
            &mut RngState::new(self.seed),
            self.num_classes,
            self.per_class,
            self.dim,
            self.separation,
            self.noise_sigma,
        )
    }
}

/// Isotropic Gaussian classes centred at `separation·e_c`.
/// Sample `i` belongs to class `i mod K`.
pub fn make_blobs<T: Scalar>(
    rng: &mut RngState,
    num_classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    noise_sigma: f64,
) -> Result<Dataset<T>> {
    if num_classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::arg("blobs need K >= 2 and positive per_class, dim"));
    }
    if dim < num_classes {
        return Err(Error::arg(format!("blobs need dim >= K (dim={dim}, K={num_classes})")));
    }
    if noise_sigma.is_nan() || noise_sigma < 0.0 {
        return Err(Error::arg("noise_sigma must be >= 0"));
    }
    let n = num_classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        for (j, z) in rng.gaussian(dim).into_iter().enumerate() {
            let mean = if j == c { separation } else { 0.0 };
            data.push(T::lit(mean + noise_sigma * z));
        }
        y.push(c);
    }
    Dataset::new(
        Matrix::from_vec(n, dim, data)?,
        y,
        num_classes,
        format!("blobs-k{num_classes}-d{dim}-n{n}"),
    )
}

/// Seeded per-epoch mini-batch plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    /// Permutation of `0..n` for `epoch`, drawn from stream `epoch` of the run seed.
    pub fn order(&self, n: usize, epoch: usize) -> Vec<usize> {
        RngState::for_stream(self.seed, epoch as u64).permutation(n)
    }

    /// Index batches covering every sample once; the last may be short.
    pub fn batches(&self, n: usize, epoch: usize) -> Vec<Vec<usize>> {
        let bs = self.batch_size.clamp(1, n.max(1));
        self.order(n, epoch).chunks(bs).map(<[usize]>::to_vec).collect()
    }
}

/// Materialised `(X_b, y_b)` batches for one epoch.
pub fn batches<T: Scalar>(data: &Dataset<T>, plan: &BatchPlan, epoch: usize) -> Vec<(Matrix<T>, Vec<usize>)> {
    plan.batches(data.len(), epoch)
        .into_iter()
        .map(|idx| {
            let y = idx.iter().map(|&i| data.y[i]).collect();
            (data.x.select_rows(&idx), y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn magic_numbers() {
        assert_eq!(IDX_IMAGES_MAGIC, 2051);
        assert_eq!(IDX_LABELS_MAGIC, 2049);
    }

    #[test]
    fn parses_tiny_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        fs::write(&ip, idx_images(2, 2, 2, &[0, 255, 51, 0, 255, 255, 0, 0])).unwrap();
        fs::write(&lp, idx_labels(&[1, 0])).unwrap();
        let d: Dataset<f64> = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.x.shape(), (2, 4));
        assert_eq!(d.y, vec![1, 0]);
        assert_eq!(d.x.row(0), &[0.0, 1.0, 0.2, 0.0]);
        // idempotent
        let again: Dataset<f64> = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.content_hash(), again.content_hash());
    }

    #[test]
    fn truncated_and_wrong_magic_rejected() {
        let full = idx_images(2, 2, 2, &[0; 8]);
        assert!(parse_idx_images(&full[..full.len() - 1], "t").is_err());
        assert!(parse_idx_images(&full[..10], "t").is_err());
        assert!(parse_idx_images(&idx_labels(&[0, 1]), "t").is_err());
        assert!(parse_idx_labels(&full, "t").is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        fs::write(&ip, idx_images(2, 1, 1, &[0, 1])).unwrap();
        fs::write(&lp, idx_labels(&[0, 1, 1])).unwrap();
        assert!(load_idx::<f64>(&ip, &lp).is_err());
    }

    #[test]
    fn blobs_are_balanced_and_reproducible() {
        let spec = BlobsSpec {
            per_class: 100,
            ..BlobsSpec::default()
        };
        let a: Dataset<f64> = spec.generate().unwrap();
        assert_eq!(a.len(), 300);
        assert_eq!(a.class_counts().unwrap(), vec![100, 100, 100]);
        let b: Dataset<f64> = spec.generate().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blobs_need_dim_at_least_k() {
        assert!(make_blobs::<f64>(&mut RngState::new(0), 5, 2, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn noiseless_blobs_are_points() {
        let d: Dataset<f64> = make_blobs(&mut RngState::new(0), 3, 4, 5, 2.0, 0.0).unwrap();
        for (row, &y) in d.x.row_iter().zip(&d.y) {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if j == y { 2.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn nearest_true_mean_classifies_separated_blobs() {
        // Pairwise error Φ(−sep/√2 / σ) ≈ 0.0023 per competitor at sep=4, σ=1.
        let d: Dataset<f64> = make_blobs(&mut RngState::new(12), 3, 1000, 10, 4.0, 1.0).unwrap();
        let correct = d
            .x
            .row_iter()
            .zip(&d.y)
            .filter(|(row, &y)| {
                let dist = |c: usize| {
                    row.iter()
                        .enumerate()
                        .map(|(j, &v)| (v - if j == c { 4.0 } else { 0.0 }).powi(2))
                        .sum::<f64>()
                };
                (0..3).all(|c| c == y || dist(y) < dist(c))
            })
            .count();
        assert!(correct as f64 / d.len() as f64 > 0.99);
    }

    #[test]
    fn batch_sizes_and_coverage() {
        let plan = BatchPlan { batch_size: 4, seed: 1 };
        let b = plan.batches(10, 1);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn epoch_orders_are_pinned() {
        let plan = BatchPlan { batch_size: 4, seed: 1 };
        assert_eq!(plan.order(10, 3), plan.order(10, 3));
        let orders: Vec<Vec<usize>> = (1..=5).map(|e| plan.order(10, e)).collect();
        for i in 0..orders.len() {
            for j in i + 1..orders.len() {
                assert_ne!(orders[i], orders[j]);
            }
        }
    }
}
