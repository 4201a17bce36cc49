//! MNIST as an (image, one-hot label) pair of modalities.

use std::path::Path;

use super::idx::{read_idx_file, IdxTensor};
use super::{MultimodalDataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE: &str = "image";
pub const LABEL: &str = "label";
pub const CLASSES: usize = 10;

pub fn pair_from_idx(
    images: &IdxTensor,
    labels: &IdxTensor,
    limit: Option<usize>,
    split: Split,
) -> Result<MultimodalDataset> {
    if images.dims.len() != 3 {
        return Err(Error::Mismatch(format!(
            "image file has {} dims, expected 3",
            images.dims.len()
        )));
    }
    if labels.dims.len() != 1 {
        return Err(Error::Mismatch(format!(
            "label file has {} dims, expected 1",
            labels.dims.len()
        )));
    }
    if images.count() != labels.count() {
        return Err(Error::Mismatch(format!(
            "{} images but {} labels",
            images.count(),
            labels.count()
        )));
    }
    let n = limit.map_or(images.count(), |l| l.min(images.count()));
    let w = images.item_len();
    let pixels: Vec<f64> = images.payload[..n * w]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let mut onehot = vec![0.0; n * CLASSES];
    let mut classes = Vec::with_capacity(n);
    for (i, &l) in labels.payload[..n].iter().enumerate() {
        if l as usize >= CLASSES {
            return Err(Error::Parse {
                offset: 8 + i,
                detail: format!("label {l} out of range"),
            });
        }
        onehot[i * CLASSES + l as usize] = 1.0;
        classes.push(f64::from(l));
    }
    MultimodalDataset::new(
        vec![IMAGE.into(), LABEL.into()],
        vec![
            Tensor::new(vec![n, w], pixels)?,
            Tensor::new(vec![n, CLASSES], onehot)?,
        ],
        split,
        Some(classes),
    )
}

/// Load aligned image and label IDX files (optionally gzipped).
pub fn load_mnist_pair(
    image_path: &Path,
    label_path: &Path,
    limit: Option<usize>,
    split: Split,
) -> Result<MultimodalDataset> {
    let images = read_idx_file(image_path)?;
    let labels = read_idx_file(label_path)?;
    pair_from_idx(&images, &labels, limit, split)
}

/// Standard file names inside an MNIST directory.
pub fn split_paths(dir: &Path, split: Split) -> (std::path::PathBuf, std::path::PathBuf) {
    let stem = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let pick = |base: String| {
        let gz = dir.join(format!("{base}.gz"));
        if gz.exists() {
            gz
        } else {
            dir.join(base)
        }
    };
    (
        pick(format!("{stem}-images-idx3-ubyte")),
        pick(format!("{stem}-labels-idx1-ubyte")),
    )
}
