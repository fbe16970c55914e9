//! Synthetic datasets, balanced batch sampling, whitening, and an IDX
//! reader for small digit subsets.

use std::io::Read;
use std::path::Path;

use crate::graph::Batch;
use crate::numkit::{Mat, Rng};

/// Errors from dataset construction and file ingestion.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { path: String, expected: u32, found: u32 },
    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated { path: String, expected: usize, found: usize },
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{0}")]
    InvalidParam(String),
    #[error("class {class} has only {available} samples, batch needs {needed}")]
    InsufficientClass { class: usize, available: usize, needed: usize },
    #[error(transparent)]
    Num(#[from] crate::numkit::NumError),
}

pub type DataResult<T> = std::result::Result<T, DataError>;

/// A dataset of sample rows with (possibly missing) class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat,
    /// One entry per row; `None` marks an unlabeled sample.
    pub y: Vec<Option<usize>>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Indices of rows carrying each class label.
    pub fn class_pools(&self) -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); self.classes];
        for (i, y) in self.y.iter().enumerate() {
            if let Some(c) = y {
                pools[*c].push(i);
            }
        }
        pools
    }
}

/// Two concentric circles: inner circle is class 0, outer is class 1.
/// Points are uniformly spaced in angle with Gaussian radial noise.
pub fn two_circles(
    n_per_circle: usize,
    r_inner: f64,
    r_outer: f64,
    noise_sd: f64,
    rng: &mut Rng,
) -> DataResult<Dataset> {
    if !(r_outer > r_inner && r_inner > 0.0) {
        return Err(DataError::InvalidParam(format!(
            "need r_outer > r_inner > 0, got {} and {}",
            r_outer, r_inner
        )));
    }
    if n_per_circle == 0 {
        return Err(DataError::InvalidParam("n_per_circle must be positive".into()));
    }
    let mut rows = Vec::with_capacity(2 * n_per_circle);
    let mut labels = Vec::with_capacity(2 * n_per_circle);
    for (class, radius) in [(0usize, r_inner), (1, r_outer)] {
        for i in 0..n_per_circle {
            let theta = std::f64::consts::TAU * i as f64 / n_per_circle as f64;
            let r = radius + noise_sd * rng.normal();
            rows.push(vec![r * theta.cos(), r * theta.sin()]);
            labels.push(Some(class));
        }
    }
    Ok(Dataset { x: Mat::from_rows(&rows)?, y: labels, classes: 2 })
}

/// Two interleaved half-circles with isotropic Gaussian noise:
/// moon 0 is `(cos t, sin t)`, moon 1 is `(1 - cos t, 1/2 - sin t)`,
/// both for `t` evenly spaced over `[0, pi]`.
pub fn two_moons(n_per_moon: usize, noise_sd: f64, rng: &mut Rng) -> DataResult<Dataset> {
    if n_per_moon < 2 {
        return Err(DataError::InvalidParam("need at least 2 points per moon".into()));
    }
    let mut rows = Vec::with_capacity(2 * n_per_moon);
    let mut labels = Vec::with_capacity(2 * n_per_moon);
    for class in 0..2usize {
        for i in 0..n_per_moon {
            let t = std::f64::consts::PI * i as f64 / (n_per_moon - 1) as f64;
            let (cx, cy) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            rows.push(vec![cx + noise_sd * rng.normal(), cy + noise_sd * rng.normal()]);
            labels.push(Some(class));
        }
    }
    Ok(Dataset { x: Mat::from_rows(&rows)?, y: labels, classes: 2 })
}

/// Splits a fully labeled dataset into a labeled part with
/// `per_class` samples of every class (chosen at random) and an
/// unlabeled remainder with the labels removed.
pub fn split_labeled(ds: &Dataset, per_class: usize, rng: &mut Rng) -> DataResult<(Dataset, Dataset)> {
    let pools = ds.class_pools();
    let mut labeled_idx = Vec::new();
    for (class, pool) in pools.iter().enumerate() {
        if pool.len() < per_class {
            return Err(DataError::InsufficientClass {
                class,
                available: pool.len(),
                needed: per_class,
            });
        }
        labeled_idx.extend(rng.sample_without_replacement(pool, per_class));
    }
    let take = |indices: &[usize], keep_labels: bool| -> DataResult<Dataset> {
        let rows: Vec<Vec<f64>> = indices.iter().map(|i| ds.x.row(*i).to_vec()).collect();
        let y = indices
            .iter()
            .map(|i| if keep_labels { ds.y[*i] } else { None })
            .collect();
        Ok(Dataset { x: Mat::from_rows(&rows)?, y, classes: ds.classes })
    };
    let labeled = take(&labeled_idx, true)?;
    let rest: Vec<usize> = (0..ds.len()).filter(|i| !labeled_idx.contains(i)).collect();
    let unlabeled = take(&rest, false)?;
    Ok((labeled, unlabeled))
}

/// Which structured 2D arrangement a free-embedding experiment starts
/// from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyLayout {
    /// Two concentric circles, one labeled point per circle at angle 0.
    Circles,
    /// Two interleaved moons, one labeled point per moon at its far end
    /// (the `t = pi` tip).
    Moons,
}

/// Builds the free-embedding starting batch for a toy layout: all points
/// of the layout with one labeled sample per class, labeled rows first.
/// Also returns each row's true class, for scoring final states.
pub fn toy_batch(layout: ToyLayout, rng: &mut Rng) -> DataResult<(Batch, Vec<usize>)> {
    let (ds, labeled_idx) = match layout {
        ToyLayout::Circles => {
            let ds = two_circles(40, 1.0, 2.0, 0.02, rng)?;
            let idx = vec![0usize, 60];
            (ds, idx)
        }
        ToyLayout::Moons => {
            let ds = two_moons(60, 0.05, rng)?;
            let idx = vec![59usize, 119];
            (ds, idx)
        }
    };
    let mut order = labeled_idx.clone();
    order.extend((0..ds.len()).filter(|i| !labeled_idx.contains(i)));
    let rows: Vec<Vec<f64>> = order.iter().map(|i| ds.x.row(*i).to_vec()).collect();
    let truth: Vec<usize> = order.iter().map(|i| ds.y[*i].expect("toy data is labeled")).collect();
    let mut y = Mat::zeros(labeled_idx.len(), ds.classes);
    for (row, i) in labeled_idx.iter().enumerate() {
        y.set(row, ds.y[*i].expect("labeled"), 1.0);
    }
    let n_labeled = labeled_idx.len();
    let n_unlabeled = ds.len() - n_labeled;
    Ok((Batch::new(Mat::from_rows(&rows)?, y, n_labeled, n_unlabeled)?, truth))
}

/// Stateful batch sampler: draws class-balanced labeled batches and
/// uniform unlabeled batches, without replacement within each batch.
#[derive(Debug)]
pub struct SamplerState {
    rng: Rng,
    class_pools: Vec<Vec<usize>>,
    unlabeled_pool: Vec<usize>,
}

impl SamplerState {
    pub fn new(labeled: &Dataset, unlabeled: &Dataset, rng: Rng) -> SamplerState {
        SamplerState {
            rng,
            class_pools: labeled.class_pools(),
            unlabeled_pool: (0..unlabeled.len()).collect(),
        }
    }
}

/// Draws one joined batch: exactly `n_l / C` labeled samples per class
/// (so `C` must divide `n_l`), then `n_u` unlabeled samples, labeled
/// rows first.
pub fn sample_batch(
    labeled: &Dataset,
    unlabeled: &Dataset,
    n_l: usize,
    n_u: usize,
    state: &mut SamplerState,
) -> DataResult<Batch> {
    let classes = labeled.classes;
    if n_l == 0 || n_l % classes != 0 {
        return Err(DataError::InvalidParam(format!(
            "labeled batch size {} is not a positive multiple of {} classes",
            n_l, classes
        )));
    }
    let per_class = n_l / classes;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_l + n_u);
    let mut y = Mat::zeros(n_l, classes);
    for (class, pool) in state.class_pools.iter().enumerate() {
        if pool.len() < per_class {
            return Err(DataError::InsufficientClass {
                class,
                available: pool.len(),
                needed: per_class,
            });
        }
        for idx in state.rng.sample_without_replacement(pool, per_class) {
            y.set(rows.len(), class, 1.0);
            rows.push(labeled.x.row(idx).to_vec());
        }
    }
    if state.unlabeled_pool.len() < n_u {
        return Err(DataError::InvalidParam(format!(
            "unlabeled batch of {} from a pool of {}",
            n_u,
            state.unlabeled_pool.len()
        )));
    }
    for idx in state.rng.sample_without_replacement(&state.unlabeled_pool, n_u) {
        rows.push(unlabeled.x.row(idx).to_vec());
    }
    Ok(Batch::new(Mat::from_rows(&rows)?, y, n_l, n_u)?)
}

/// Per-feature standardization. Returns the standardized matrix plus the
/// per-feature means and standard deviations; features with standard
/// deviation below 1e-12 are centered but not scaled.
pub fn whiten(x: &Mat) -> DataResult<(Mat, Vec<f64>, Vec<f64>)> {
    if x.rows() < 2 {
        return Err(DataError::InvalidParam("whitening needs at least 2 samples".into()));
    }
    let n = x.rows() as f64;
    let mut means = vec![0.0; x.cols()];
    let mut sds = vec![0.0; x.cols()];
    for j in 0..x.cols() {
        let mut sum = 0.0;
        for i in 0..x.rows() {
            sum += x.get(i, j);
        }
        means[j] = sum / n;
        let mut sq = 0.0;
        for i in 0..x.rows() {
            let d = x.get(i, j) - means[j];
            sq += d * d;
        }
        sds[j] = (sq / n).sqrt();
    }
    let out = apply_whitening(x, &means, &sds)?;
    Ok((out, means, sds))
}

/// Applies previously computed whitening statistics (e.g. to a holdout
/// set, using the training set's statistics).
pub fn apply_whitening(x: &Mat, means: &[f64], sds: &[f64]) -> DataResult<Mat> {
    if means.len() != x.cols() || sds.len() != x.cols() {
        return Err(DataError::InvalidParam(format!(
            "stats for {} features, data has {}",
            means.len(),
            x.cols()
        )));
    }
    let mut out = Mat::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let centered = x.get(i, j) - means[j];
            out.set(i, j, if sds[j] < 1e-12 { centered } else { centered / sds[j] });
        }
    }
    Ok(out.check_finite("apply_whitening")?)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> DataResult<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> DataResult<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.display().to_string(),
            expected: offset + 4,
            found: bytes.len(),
        })
}

/// Reads an IDX image/label file pair (the classic digit-dataset
/// container: big-endian magic, big-endian dimension sizes, raw payload).
/// Pixel bytes are scaled to `[0, 1]`; the class count is inferred from
/// the largest label.
pub fn read_idx(images_path: &Path, labels_path: &Path) -> DataResult<Dataset> {
    let img_bytes = read_file(images_path)?;
    let magic = be_u32(&img_bytes, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: images_path.display().to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = be_u32(&img_bytes, 12, images_path)? as usize;
    let pixels = n * rows * cols;
    let payload = img_bytes.get(16..16 + pixels).ok_or_else(|| DataError::Truncated {
        path: images_path.display().to_string(),
        expected: 16 + pixels,
        found: img_bytes.len(),
    })?;

    let lbl_bytes = read_file(labels_path)?;
    let magic = be_u32(&lbl_bytes, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: labels_path.display().to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_labels = be_u32(&lbl_bytes, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(DataError::CountMismatch { images: n, labels: n_labels });
    }
    let labels = lbl_bytes.get(8..8 + n).ok_or_else(|| DataError::Truncated {
        path: labels_path.display().to_string(),
        expected: 8 + n,
        found: lbl_bytes.len(),
    })?;

    let data: Vec<f64> = payload.iter().map(|b| *b as f64 / 255.0).collect();
    let x = Mat::from_vec(n, rows * cols, data)?;
    let y: Vec<Option<usize>> = labels.iter().map(|b| Some(*b as usize)).collect();
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    Ok(Dataset { x, y, classes })
}
