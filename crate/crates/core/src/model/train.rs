//! Minibatch Adam training.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::loss::build_loss;
use super::MuseModel;
use crate::data::{batch_indices, MultimodalDataset};
use crate::error::{Error, Result};
use crate::params::AdamConfig;
use crate::rng::{fnv1a, SplitRng};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            shuffle: true,
        }
    }
}

/// Long-format per-epoch term means. Epoch 0 is the untrained model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<(usize, String, f64)>,
    pub clamp_events: usize,
    pub steps: usize,
}

impl TrainLog {
    pub fn value(&self, epoch: usize, term: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|(e, t, _)| *e == epoch && t == term)
            .map(|(_, _, v)| *v)
    }

    pub fn total(&self, epoch: usize) -> Option<f64> {
        self.value(epoch, "total")
    }

    pub fn last_epoch(&self) -> usize {
        self.rows.iter().map(|(e, _, _)| *e).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,term,value\n");
        for (e, t, v) in &self.rows {
            let _ = writeln!(out, "{e},{t},{v}");
        }
        out
    }
}

fn noise_seed(seed: u64, stream: u64) -> u64 {
    SplitRng::derive(seed ^ fnv1a(b"loss-noise"), stream).next_seed()
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    SplitRng::derive(seed ^ fnv1a(b"shuffle"), epoch as u64).next_seed()
}

/// Check that `data` carries the model's modalities, in order.
pub fn check_dataset(model: &MuseModel, data: &MultimodalDataset) -> Result<()> {
    let spec = &model.spec;
    if data.names != spec.names() {
        return Err(Error::Mismatch(format!(
            "dataset modalities {:?} differ from model modalities {:?}",
            data.names,
            spec.names()
        )));
    }
    for (m, d) in data.dims().into_iter().enumerate() {
        if d != spec.modalities[m].data_dim {
            return Err(Error::Mismatch(format!(
                "modality `{}` has dimension {d} in the data, {} in the model",
                spec.modalities[m].name, spec.modalities[m].data_dim
            )));
        }
    }
    Ok(())
}

struct EpochStats {
    sums: BTreeMap<String, f64>,
    order: Vec<String>,
    count: usize,
}

impl EpochStats {
    fn new() -> Self {
        Self {
            sums: BTreeMap::new(),
            order: Vec::new(),
            count: 0,
        }
    }

    fn add(&mut self, name: &str, value: f64, rows: usize) {
        if !self.sums.contains_key(name) {
            self.order.push(name.to_string());
        }
        *self.sums.entry(name.to_string()).or_insert(0.0) += value * rows as f64;
    }

    fn flush(self, epoch: usize, log: &mut TrainLog) {
        for name in self.order {
            let v = self.sums[&name] / self.count as f64;
            log.rows.push((epoch, name, v));
        }
    }
}

/// Minimize the variant's loss with Adam. On a non-finite loss or gradient
/// the update is skipped, the model keeps its last finite parameters, and
/// `Error::Diverged` is returned.
pub fn fit(model: &mut MuseModel, data: &MultimodalDataset, cfg: &TrainConfig) -> Result<TrainLog> {
    check_dataset(model, data)?;
    if cfg.batch_size == 0 {
        return Err(Error::config("train.batch_size", "must be positive"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::config("train.learning_rate", "must be positive"));
    }
    let adam = AdamConfig::with_lr(cfg.learning_rate);
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok(log);
    }

    // epoch 0: the untrained model on the same batching, no updates
    let mut stats = EpochStats::new();
    for (i, idx) in batch_indices(data.len(), cfg.batch_size, None)?
        .iter()
        .enumerate()
    {
        let batch = data.gather(idx)?;
        let lg = build_loss(model, &batch, noise_seed(cfg.seed ^ 0xE0, i as u64))?;
        let bd = lg.breakdown();
        for (k, v) in &bd.terms {
            stats.add(k, *v, idx.len());
        }
        stats.add("total", bd.total, idx.len());
        stats.count += idx.len();
    }
    stats.flush(0, &mut log);

    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let shuffle = cfg.shuffle.then(|| shuffle_seed(cfg.seed, epoch));
        let mut stats = EpochStats::new();
        for idx in batch_indices(data.len(), cfg.batch_size, shuffle)? {
            let batch = data.gather(&idx)?;
            let at = format!("epoch {epoch}, step {step}");
            let lg =
                build_loss(model, &batch, noise_seed(cfg.seed, step)).map_err(|e| match e {
                    Error::NonFinite { node } => Error::Diverged {
                        at: at.clone(),
                        detail: format!("non-finite value in {node}"),
                    },
                    other => other,
                })?;
            let grads = lg.graph.backward(lg.total)?;
            if grads.params().any(|(_, g)| !g.is_finite()) {
                return Err(Error::Diverged {
                    at,
                    detail: "non-finite gradient".into(),
                });
            }
            model.params.adam_step(grads.params(), &adam)?;
            let bd = lg.breakdown();
            for (k, v) in &bd.terms {
                stats.add(k, *v, idx.len());
            }
            stats.add("total", bd.total, idx.len());
            stats.count += idx.len();
            log.clamp_events += bd.clamp_events;
            step += 1;
        }
        stats.flush(epoch, &mut log);
    }
    log.steps = step as usize;
    Ok(log)
}
