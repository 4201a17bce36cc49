//! Multimodal datasets: MNIST image/label pairs and a synthetic bar set.

pub mod bars;
pub mod idx;
pub mod mnist;

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Aligned per-modality `[N, d_m]` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalDataset {
    pub names: Vec<String>,
    pub modalities: Vec<Tensor>,
    pub split: Split,
    /// Generating factor per sample when known: the bar angle, or the digit class.
    pub factors: Option<Vec<f64>>,
}

impl MultimodalDataset {
    pub fn new(
        names: Vec<String>,
        modalities: Vec<Tensor>,
        split: Split,
        factors: Option<Vec<f64>>,
    ) -> Result<Self> {
        if names.len() != modalities.len() || names.is_empty() {
            return Err(Error::contract("one name per modality tensor required"));
        }
        let n = modalities[0].rows();
        for (name, t) in names.iter().zip(&modalities) {
            if t.rank() != 2 || t.rows() != n {
                return Err(Error::contract(format!(
                    "modality `{name}` has shape {:?}, expected [{n}, d]",
                    t.shape()
                )));
            }
        }
        if factors.as_ref().is_some_and(|f| f.len() != n) {
            return Err(Error::contract("factor count differs from sample count"));
        }
        Ok(Self {
            names,
            modalities,
            split,
            factors,
        })
    }

    pub fn len(&self) -> usize {
        self.modalities[0].rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_modalities(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|t| t.shape()[1]).collect()
    }

    /// Rows `idx` of every modality.
    pub fn gather(&self, idx: &[usize]) -> Result<Vec<Tensor>> {
        self.modalities.iter().map(|t| t.gather_rows(idx)).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            names: self.names.clone(),
            modalities: self.gather(idx)?,
            split: self.split,
            factors: self
                .factors
                .as_ref()
                .map(|f| idx.iter().map(|&i| f[i]).collect()),
        })
    }

    pub fn take(&self, limit: usize) -> Result<Self> {
        let n = limit.min(self.len());
        self.subset(&(0..n).collect::<Vec<_>>())
    }
}

/// Index batches covering `0..n`: shuffled by `shuffle_seed` when given,
/// with the final short batch kept.
pub fn batch_indices(
    n: usize,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::contract("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        SplitRng::new(seed).shuffle(&mut order);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Batches of per-modality tensors.
pub fn batch_iter(
    data: &MultimodalDataset,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<impl Iterator<Item = Vec<Tensor>> + '_> {
    let batches = batch_indices(data.len(), batch_size, shuffle_seed)?;
    Ok(batches
        .into_iter()
        .map(move |idx| data.gather(&idx).expect("indices in range")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_by_three() {
        let b = batch_indices(10, 3, None).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert!(batch_indices(3, 0, None).is_err());
    }

    #[test]
    fn shuffle_is_reproducible_and_complete() {
        let a = batch_indices(20, 6, Some(4)).unwrap();
        assert_eq!(a, batch_indices(20, 6, Some(4)).unwrap());
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }
}
