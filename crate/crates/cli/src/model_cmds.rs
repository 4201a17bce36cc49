//! train-model, eval-likelihood and generate.

use std::path::{Path, PathBuf};

use muse_core::config::Config;
use muse_core::data::Split;
use muse_core::error::{Error, Result};
use muse_core::likelihood::{self, IwEstimate, CSV_HEADER};
use muse_core::model::train::check_dataset;
use muse_core::model::{
    checkpoint, fit, LatentMode, Likelihood, ModelSpec, MuseModel, TrainConfig, Variant,
};
use muse_core::raster::to_pgm;
use muse_core::tensor::Tensor;

use crate::data::{load_checkpoint, norm_path, DataSource};
use crate::run::{write, Job, Outcome};

pub const CHECKPOINT: &str = "model.bin";

struct TrainModel {
    source: DataSource,
    spec: ModelSpec,
    tc: TrainConfig,
}

pub fn train_model(cfg: &mut Config, seed: u64) -> Result<Box<dyn Job>> {
    let source = DataSource::from_config(cfg)?;
    let variant: String = cfg.get_or("model", "variant", Variant::Muse.to_string())?;
    let variant: Variant = variant
        .parse()
        .map_err(|_| Error::config("model.variant", format!("unknown variant `{variant}`")))?;
    let spec = ModelSpec::from_config(cfg, Some(&source.preset(variant)?))?;
    let d = source.train_defaults(seed);
    let s = "train";
    let tc = TrainConfig {
        epochs: cfg.get_or(s, "epochs", d.epochs)?,
        batch_size: cfg.get_or(s, "batch_size", d.batch_size)?,
        learning_rate: cfg.get_or(s, "learning_rate", d.learning_rate)?,
        seed,
        shuffle: cfg.get_or(s, "shuffle", d.shuffle)?,
    };
    if tc.batch_size == 0 {
        return Err(Error::config("train.batch_size", "must be positive"));
    }
    Ok(Box::new(TrainModel { source, spec, tc }))
}

impl Job for TrainModel {
    fn execute(self: Box<Self>, out: &Path) -> Result<Outcome> {
        let (data, norm) = self.source.load(Split::Train, self.tc.seed, None)?;
        let mut model = MuseModel::new(self.spec, self.tc.seed)?;
        let log = fit(&mut model, &data, &self.tc)?;
        let path = out.join(CHECKPOINT);
        checkpoint::save(&model, &path, self.tc.seed)?;
        if let Some(n) = norm {
            write(&norm_path(&path), n.to_text())?;
        }
        write(&out.join("train_log.csv"), log.to_csv())?;
        let (first, last) = (log.total(0), log.total(log.last_epoch()));
        if let (Some(a), Some(b)) = (first, last) {
            println!("loss {a:.4} -> {b:.4} over {} epochs", log.last_epoch());
        }
        Ok(Outcome::Success)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Metric {
    Marginal,
    Joint,
    Conditional,
}

struct EvalLikelihood {
    checkpoint: PathBuf,
    source: DataSource,
    samples: usize,
    count: usize,
    metrics: Vec<Metric>,
    seed: u64,
}

pub fn eval_likelihood(cfg: &mut Config, seed: u64) -> Result<Box<dyn Job>> {
    let s = "eval";
    let checkpoint: String = cfg.require(s, "checkpoint")?;
    let samples: usize = cfg.get_or(s, "samples", 1000)?;
    if samples == 0 {
        return Err(Error::config(
            "eval.samples",
            "needs at least one importance sample",
        ));
    }
    let count: usize = cfg.get_or(s, "count", 100)?;
    if count == 0 {
        return Err(Error::config("eval.count", "needs at least one test point"));
    }
    let names: Vec<String> = cfg.get_list_or(
        s,
        "metrics",
        vec!["marginal".into(), "joint".into(), "conditional".into()],
    )?;
    let metrics = names
        .iter()
        .map(|m| match m.as_str() {
            "marginal" => Ok(Metric::Marginal),
            "joint" => Ok(Metric::Joint),
            "conditional" => Ok(Metric::Conditional),
            other => Err(Error::config(
                "eval.metrics",
                format!("unknown metric `{other}` (marginal, joint, conditional)"),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    if metrics.is_empty() {
        return Err(Error::config("eval.metrics", "no metrics requested"));
    }
    Ok(Box::new(EvalLikelihood {
        checkpoint: checkpoint.into(),
        source: DataSource::from_config(cfg)?,
        samples,
        count,
        metrics,
        seed,
    }))
}

impl Job for EvalLikelihood {
    fn execute(self: Box<Self>, out: &Path) -> Result<Outcome> {
        let (model, ckpt_seed) = load_checkpoint(&self.checkpoint)?;
        let data = self.source.load_test_for(&self.checkpoint, ckpt_seed)?;
        let data = data.take(self.count.min(data.len()))?;
        check_dataset(&model, &data)?;
        let names = model.spec.names();
        let (n, seed) = (self.samples, self.seed);
        let mut csv = String::from(CSV_HEADER);
        let mut emit = |metric: &str, modality: String, est: IwEstimate| {
            println!(
                "{metric:<12} {modality:<16} {:.4} ± {:.4}",
                est.value, est.stderr
            );
            likelihood::csv_row(&mut csv, metric, &modality, &est, seed);
        };
        for metric in &self.metrics {
            match metric {
                Metric::Marginal => {
                    for (m, name) in names.iter().enumerate() {
                        // Single-level variants bound log p(x_m) through the
                        // shared latent, with x_m alone as the proposal.
                        let est = if likelihood::has_marginal(model.variant()) {
                            likelihood::iw_marginal(&model, m, &data, n, seed)?
                        } else {
                            likelihood::iw_conditional(&model, m, &[m], &data, n, seed)?
                        };
                        emit("marginal", name.clone(), est);
                    }
                }
                Metric::Joint => {
                    // Two-level variants score the codes, not the data.
                    let label = if model.variant().is_hierarchical() {
                        "joint_code"
                    } else {
                        "joint"
                    };
                    emit(
                        label,
                        names.join("+"),
                        likelihood::iw_joint(&model, &data, n, seed)?,
                    )
                }
                Metric::Conditional => {
                    for (t, name) in names.iter().enumerate() {
                        let sources: Vec<usize> = (0..names.len()).filter(|&m| m != t).collect();
                        if sources.is_empty() {
                            continue;
                        }
                        let given: Vec<&str> = sources.iter().map(|&m| names[m].as_str()).collect();
                        let est = likelihood::iw_conditional(&model, t, &sources, &data, n, seed)?;
                        emit("conditional", format!("{name}|{}", given.join("+")), est);
                    }
                }
            }
        }
        write(&out.join("metrics.csv"), csv)?;
        Ok(Outcome::Success)
    }
}

struct Generate {
    checkpoint: PathBuf,
    source: DataSource,
    sources: Vec<String>,
    target: String,
    count: usize,
    value: Option<usize>,
    seed: u64,
}

pub fn generate(cfg: &mut Config, seed: u64) -> Result<Box<dyn Job>> {
    let s = "generate";
    let checkpoint: String = cfg.require(s, "checkpoint")?;
    let sources: Vec<String> = cfg.require_list(s, "sources")?;
    if sources.is_empty() {
        return Err(Error::config(
            "generate.sources",
            "at least one source modality is required",
        ));
    }
    let target: String = cfg.require(s, "target")?;
    if sources.contains(&target) {
        return Err(Error::config("generate.target", "target is also a source"));
    }
    let count: usize = cfg.get_or(s, "count", 8)?;
    if count == 0 {
        return Err(Error::config("generate.count", "must be positive"));
    }
    let value: Option<usize> = cfg.get(s, "value")?;
    if value.is_some() && sources.len() != 1 {
        return Err(Error::config(
            "generate.value",
            "a fixed class needs exactly one source",
        ));
    }
    Ok(Box::new(Generate {
        checkpoint: checkpoint.into(),
        source: DataSource::from_config(cfg)?,
        sources,
        target,
        count,
        value,
        seed,
    }))
}

impl Job for Generate {
    fn execute(self: Box<Self>, out: &Path) -> Result<Outcome> {
        let (model, ckpt_seed) = load_checkpoint(&self.checkpoint)?;
        let index = |key: &str, name: &str| {
            model.spec.index_of(name).map_err(|_| {
                Error::config(
                    key,
                    format!(
                        "unknown modality `{name}` (model has {})",
                        model.spec.names().join(", ")
                    ),
                )
            })
        };
        let target = index("generate.target", &self.target)?;
        let sources: Vec<usize> = self
            .sources
            .iter()
            .map(|s| index("generate.sources", s))
            .collect::<Result<_>>()?;
        let mut inputs: Vec<Option<Tensor>> = vec![None; model.num_modalities()];
        if let Some(v) = self.value {
            let m = sources[0];
            let spec = &model.spec.modalities[m];
            if spec.likelihood != Likelihood::Categorical || v >= spec.data_dim {
                return Err(Error::config(
                    "generate.value",
                    format!(
                        "`{}` is not a categorical modality with a class {v}",
                        spec.name
                    ),
                ));
            }
            let mut row = vec![0.0; spec.data_dim];
            row[v] = 1.0;
            inputs[m] = Some(Tensor::from_rows(&vec![row; self.count])?);
        } else {
            let data = self.source.load_test_for(&self.checkpoint, ckpt_seed)?;
            check_dataset(&model, &data)?;
            let data = data.take(self.count.min(data.len()))?;
            for &m in &sources {
                inputs[m] = Some(data.modalities[m].clone());
            }
        }
        let refs: Vec<Option<&Tensor>> = inputs.iter().map(Option::as_ref).collect();
        let gen = model.cross_modal_generate(&refs, target, LatentMode::Sample(self.seed))?;
        let spec = &model.spec.modalities[target];
        let side = (spec.data_dim as f64).sqrt().round() as usize;
        let as_image = spec.likelihood == Likelihood::Bernoulli && side * side == spec.data_dim;
        for i in 0..gen.rows() {
            let row = gen.row(i);
            if as_image {
                write(
                    &out.join(format!("sample_{i}_{}.pgm", spec.name)),
                    to_pgm(row, side, side),
                )?;
            } else {
                let header: Vec<String> = (0..row.len()).map(|j| format!("d{j}")).collect();
                let values: Vec<String> = row.iter().map(f64::to_string).collect();
                write(
                    &out.join(format!("sample_{i}_{}.csv", spec.name)),
                    format!("{}\n{}\n", header.join(","), values.join(",")),
                )?;
            }
        }
        println!("wrote {} samples of `{}`", gen.rows(), spec.name);
        Ok(Outcome::Success)
    }
}
