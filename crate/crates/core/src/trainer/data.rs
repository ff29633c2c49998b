//! Labelled datasets: built-in synthetic cluster tasks and IDX ingestion.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MimeError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let d = Dataset { inputs, labels, classes };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(MimeError::EmptyDataset);
        }
        if self.inputs.len() != self.labels.len() {
            return Err(MimeError::InvalidArgument(format!(
                "{} inputs but {} labels",
                self.inputs.len(),
                self.labels.len()
            )));
        }
        let shape = self.inputs[0].shape();
        if let Some(x) = self.inputs.iter().find(|x| x.shape() != shape) {
            return Err(MimeError::InvalidArgument(format!(
                "mixed input shapes {:?} and {:?}",
                shape,
                x.shape()
            )));
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(MimeError::LabelOutOfRange { label, classes: self.classes });
        }
        Ok(())
    }
}

/// Built-in tasks over 1x8x8 inputs drawn from four Gaussian clusters.
///
/// The parent classifies all four clusters. The children see shifted
/// clusters and relabel them: `ChildBinary` merges {0,1} and {2,3},
/// `ChildTernary` drops cluster 0 and keeps 1, 2, 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTask {
    Parent,
    ChildBinary,
    ChildTernary,
}

pub const SYNTHETIC_SHAPE: [usize; 3] = [1, 8, 8];
const N_CLUSTERS: usize = 4;
const PROTOTYPE_SCALE: f64 = 0.01;
const SHIFT_SCALE: f64 = 0.005;
const NOISE: f64 = 0.02;

impl SyntheticTask {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticTask::Parent => "parent",
            SyntheticTask::ChildBinary => "child_binary",
            SyntheticTask::ChildTernary => "child_ternary",
        }
    }

    pub fn classes(self) -> usize {
        match self {
            SyntheticTask::Parent => 4,
            SyntheticTask::ChildBinary => 2,
            SyntheticTask::ChildTernary => 3,
        }
    }

    fn clusters(self) -> &'static [usize] {
        match self {
            SyntheticTask::Parent | SyntheticTask::ChildBinary => &[0, 1, 2, 3],
            SyntheticTask::ChildTernary => &[1, 2, 3],
        }
    }

    fn label_of(self, cluster: usize) -> usize {
        match self {
            SyntheticTask::Parent => cluster,
            SyntheticTask::ChildBinary => cluster / 2,
            SyntheticTask::ChildTernary => cluster - 1,
        }
    }

    fn stream(self) -> u64 {
        match self {
            SyntheticTask::Parent => 1,
            SyntheticTask::ChildBinary => 2,
            SyntheticTask::ChildTernary => 3,
        }
    }
}

fn gaussian_field(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Cluster centres shared by every task generated from `seed`.
fn prototypes(seed: u64, task: SyntheticTask) -> Vec<Vec<f64>> {
    let n: usize = SYNTHETIC_SHAPE.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut protos: Vec<Vec<f64>> =
        (0..N_CLUSTERS).map(|_| gaussian_field(&mut rng, n, PROTOTYPE_SCALE)).collect();
    if task != SyntheticTask::Parent {
        let mut shift_rng = ChaCha8Rng::seed_from_u64(seed);
        shift_rng.set_stream(100 + task.stream());
        for p in &mut protos {
            for (v, s) in p.iter_mut().zip(gaussian_field(&mut shift_rng, n, SHIFT_SCALE)) {
                *v += s;
            }
        }
    }
    protos
}

/// `n` samples of `task`. `split` selects an independent sample stream so
/// train and test sets never share draws.
pub fn synthetic(task: SyntheticTask, n: usize, seed: u64, split: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(MimeError::EmptyDataset);
    }
    let protos = prototypes(seed, task);
    let clusters = task.clusters();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task.stream() * 16 + split + 1);
    let size: usize = SYNTHETIC_SHAPE.iter().product();
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = clusters[rng.random_range(0..clusters.len())];
        let data = protos[c]
            .iter()
            .zip(gaussian_field(&mut rng, size, NOISE))
            .map(|(p, e)| p + e)
            .collect();
        inputs.push(Tensor::new(SYNTHETIC_SHAPE.to_vec(), data).expect("synthetic shape"));
        labels.push(task.label_of(c));
    }
    Dataset::new(inputs, labels, task.classes())
}

/// Train and test sets drawn from independent streams.
pub fn synthetic_split(
    task: SyntheticTask,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    Ok((synthetic(task, n_train, seed, 0)?, synthetic(task, n_test, seed, 1)?))
}

/// Seeded permutation of `0..n`.
pub fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| MimeError::Parse(format!("IDX header truncated at byte {at}")))
}

/// Parses an unsigned-byte IDX image file (magic 0x00000803).
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(MimeError::Parse(format!("IDX images magic {magic:#010x}, expected 0x00000803")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(MimeError::Parse("IDX images with zero rows or columns".into()));
    }
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| MimeError::Parse("IDX image dimensions overflow".into()))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(MimeError::Parse(format!(
            "IDX images body has {} bytes, header implies {expected}",
            body.len()
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

/// Parses an unsigned-byte IDX label file (magic 0x00000801).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(MimeError::Parse(format!("IDX labels magic {magic:#010x}, expected 0x00000801")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(MimeError::Parse(format!(
            "IDX labels body has {} bytes, header says {count}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Images scaled to [0, 1] as `[1, rows, cols]` tensors.
pub fn idx_dataset(images: &[u8], labels: &[u8], classes: usize) -> Result<Dataset> {
    let img = parse_idx_images(images)?;
    let lab = parse_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(MimeError::Parse(format!(
            "{} IDX images but {} labels",
            img.count,
            lab.len()
        )));
    }
    let per = img.rows * img.cols;
    let inputs = img
        .pixels
        .chunks_exact(per)
        .map(|px| {
            Tensor::new(vec![1, img.rows, img.cols], px.iter().map(|&p| p as f64 / 255.0).collect())
                .expect("IDX geometry")
        })
        .collect();
    Dataset::new(inputs, lab.into_iter().map(usize::from).collect(), classes)
}
