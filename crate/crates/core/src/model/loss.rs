//! Training objectives, recorded as autodiff graphs.
//!
//! Every term is a batch mean with its weight already applied, so the total
//! is the plain sum of the reported terms. Terms are grouped into `bottom`
//! (modality-specific VAEs), `top` (multimodal level, or the whole ELBO for
//! single-level variants) and `alma` (subset alignment).

use super::outputs::nll_nodes;
use super::spec::Variant;
use super::MuseModel;
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::gaussian::{
    kl_to_standard_nodes, poe_nodes, reparam_nodes, symmetric_kl_nodes, GaussianNodes,
};
use crate::nn::Mlp;
use crate::rng::SplitRng;
use crate::tensor::Tensor;

pub struct LossGraph {
    pub graph: Graph,
    pub total: NodeId,
    pub bottom: Option<NodeId>,
    pub top: Option<NodeId>,
    pub alma: Option<NodeId>,
    pub terms: Vec<(String, NodeId)>,
    pub clamp_events: usize,
    /// Number of ELBO-style objectives summed (more than one for flat_mvae).
    pub elbo_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub terms: Vec<(String, f64)>,
    pub bottom: f64,
    pub top: f64,
    pub alma: f64,
    pub total: f64,
    pub clamp_events: usize,
}

impl LossGraph {
    pub fn breakdown(&self) -> LossBreakdown {
        let v = |n: Option<NodeId>| n.map_or(0.0, |n| self.graph.value(n).item());
        LossBreakdown {
            terms: self
                .terms
                .iter()
                .map(|(k, n)| (k.clone(), self.graph.value(*n).item()))
                .collect(),
            bottom: v(self.bottom),
            top: v(self.top),
            alma: v(self.alma),
            total: self.graph.value(self.total).item(),
            clamp_events: self.clamp_events,
        }
    }
}

impl LossBreakdown {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Non-empty strict subsets of `0..m` as index lists, ordered by bitmask.
pub fn strict_subsets(m: usize) -> Vec<Vec<usize>> {
    if m < 2 {
        return Vec::new();
    }
    let full = (1usize << m) - 1;
    (1..full)
        .map(|mask| (0..m).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

/// Standard-normal noise for the stream `label` of a step.
pub fn step_noise(seed: u64, label: &str, rows: usize, cols: usize) -> Tensor {
    let data = SplitRng::derive_labeled(seed, label).normals(rows * cols);
    Tensor::new(vec![rows, cols], data).expect("positive dims")
}

struct Builder<'a> {
    model: &'a MuseModel,
    g: Graph,
    terms: Vec<(String, NodeId)>,
    clamps: usize,
    batch: usize,
    seed: u64,
}

fn within_term(name: &str, e: Error) -> Error {
    match e {
        Error::NonFinite { node } => Error::NonFinite {
            node: format!("term `{name}` at {node}"),
        },
        other => other,
    }
}

impl<'a> Builder<'a> {
    fn gaussian_head(&mut self, net: &Mlp, input: NodeId) -> Result<GaussianNodes> {
        let out = net.forward(&mut self.g, &self.model.params, input)?;
        let d = net.output_dim() / 2;
        let mean = self.g.slice(out, 0, d)?;
        let logvar = self.g.slice(out, d, d)?;
        Ok(GaussianNodes { mean, logvar })
    }

    fn sample(&mut self, q: GaussianNodes, label: &str) -> Result<NodeId> {
        let d = self.g.value(q.mean).row_len();
        let noise = step_noise(self.seed, label, self.batch, d);
        reparam_nodes(&mut self.g, q, noise)
    }

    /// `weight · mean_B(per_row)`, recorded as a named term.
    fn term(&mut self, name: String, per_row: NodeId, weight: f64) -> Result<NodeId> {
        let m = self
            .g
            .mean(per_row, None)
            .map_err(|e| within_term(&name, e))?;
        let t = self.g.scale(m, weight).map_err(|e| within_term(&name, e))?;
        self.g.tag(t, name.clone());
        self.terms.push((name, t));
        Ok(t)
    }

    fn zero_term(&mut self, name: &str) -> NodeId {
        let t = self.g.scalar_constant(0.0);
        self.g.tag(t, name);
        self.terms.push((name.to_string(), t));
        t
    }

    fn sum(&mut self, nodes: &[NodeId]) -> Result<Option<NodeId>> {
        let mut acc: Option<NodeId> = None;
        for &n in nodes {
            acc = Some(match acc {
                None => n,
                Some(a) => self.g.add(a, n)?,
            });
        }
        Ok(acc)
    }

    fn poe(&mut self, experts: &[GaussianNodes]) -> Result<GaussianNodes> {
        let (q, c) = poe_nodes(
            &mut self.g,
            experts,
            true,
            self.batch,
            self.model.spec.top_latent_dim,
        )?;
        self.clamps += c;
        Ok(q)
    }

    fn alma(&mut self, full: GaussianNodes, experts: &[GaussianNodes]) -> Result<NodeId> {
        let delta = self.model.spec.delta;
        let subsets = strict_subsets(experts.len());
        if delta == 0.0 || subsets.is_empty() {
            return Ok(self.zero_term("alma"));
        }
        let mut per_row = Vec::with_capacity(subsets.len());
        for s in &subsets {
            let part: Vec<GaussianNodes> = s.iter().map(|&i| experts[i]).collect();
            let q = self.poe(&part)?;
            per_row.push(
                symmetric_kl_nodes(&mut self.g, full, q).map_err(|e| within_term("alma", e))?,
            );
        }
        let total = self.sum(&per_row)?.expect("non-empty");
        self.term("alma".into(), total, delta / subsets.len() as f64)
    }
}

/// Loss graph of one batch. `batch[m]` is modality `m` as `[B, d_m]`;
/// `seed` fixes every reparameterization sample of the step.
pub fn build_loss(model: &MuseModel, batch: &[Tensor], seed: u64) -> Result<LossGraph> {
    let spec = &model.spec;
    if batch.len() != spec.num_modalities() {
        return Err(Error::contract(format!(
            "batch has {} modalities, model has {}",
            batch.len(),
            spec.num_modalities()
        )));
    }
    let rows = batch[0].rows();
    for (m, x) in batch.iter().enumerate() {
        let s = &spec.modalities[m];
        if x.rank() != 2 || x.shape() != [rows, s.data_dim] {
            return Err(Error::shape(
                format!("batch modality `{}`", s.name),
                format!("expected [{rows}, {}], got {:?}", s.data_dim, x.shape()),
            ));
        }
    }
    let mut b = Builder {
        model,
        g: Graph::new(),
        terms: Vec::new(),
        clamps: 0,
        batch: rows,
        seed,
    };
    let xs: Vec<NodeId> = batch.iter().map(|x| b.g.constant(x.clone())).collect();
    let mut bottom_terms = Vec::new();
    let mut top_terms = Vec::new();
    let mut alma = None;
    let mut elbo_count = 1;

    match spec.variant {
        Variant::Muse | Variant::MuseA => {
            let mut codes = Vec::with_capacity(xs.len());
            for (m, &x) in xs.iter().enumerate() {
                let s = &spec.modalities[m];
                let q = b.gaussian_head(&spec.bottom_encoder(m), x)?;
                let z = b.sample(q, &format!("bottom/{}", s.name))?;
                let out = spec.bottom_decoder(m).forward(&mut b.g, &model.params, z)?;
                let name = format!("bottom/{}/recon", s.name);
                let nll =
                    nll_nodes(&mut b.g, s.likelihood, out, x).map_err(|e| within_term(&name, e))?;
                bottom_terms.push(b.term(name, nll, s.lambda)?);
                let name = format!("bottom/{}/kl", s.name);
                let kl = kl_to_standard_nodes(&mut b.g, q).map_err(|e| within_term(&name, e))?;
                bottom_terms.push(b.term(name, kl, s.alpha)?);
                codes.push(b.g.stop_gradient(z)?);
            }
            let experts: Vec<GaussianNodes> = codes
                .iter()
                .enumerate()
                .map(|(m, &c)| b.gaussian_head(&spec.expert(m), c))
                .collect::<Result<_>>()?;
            let full = b.poe(&experts)?;
            let z = b.sample(full, "top")?;
            for (m, &c) in codes.iter().enumerate() {
                let s = &spec.modalities[m];
                let name = format!("top/{}/recon", s.name);
                let chat = spec.top_decoder(m).forward(&mut b.g, &model.params, z)?;
                let d = b.g.sub(chat, c)?;
                let d2 = b.g.square(d)?;
                let sq = b.g.sum_last(d2)?;
                let half = b.g.scale(sq, 0.5).map_err(|e| within_term(&name, e))?;
                top_terms.push(b.term(name, half, s.gamma)?);
            }
            let kl = kl_to_standard_nodes(&mut b.g, full).map_err(|e| within_term("top/kl", e))?;
            top_terms.push(b.term("top/kl".into(), kl, spec.beta)?);
            alma = Some(b.alma(full, &experts)?);
        }
        Variant::MuseH => {
            let experts: Vec<GaussianNodes> = xs
                .iter()
                .enumerate()
                .map(|(m, &x)| b.gaussian_head(&spec.expert(m), x))
                .collect::<Result<_>>()?;
            let full = b.poe(&experts)?;
            let z = b.sample(full, "top")?;
            for (m, &x) in xs.iter().enumerate() {
                let s = &spec.modalities[m];
                let name = format!("top/{}/recon", s.name);
                let out = spec.top_decoder(m).forward(&mut b.g, &model.params, z)?;
                let nll =
                    nll_nodes(&mut b.g, s.likelihood, out, x).map_err(|e| within_term(&name, e))?;
                top_terms.push(b.term(name, nll, s.lambda)?);
            }
            let kl = kl_to_standard_nodes(&mut b.g, full).map_err(|e| within_term("top/kl", e))?;
            top_terms.push(b.term("top/kl".into(), kl, spec.beta)?);
            alma = Some(b.alma(full, &experts)?);
        }
        Variant::FlatMvae => {
            let experts: Vec<GaussianNodes> = xs
                .iter()
                .enumerate()
                .map(|(m, &x)| b.gaussian_head(&spec.expert(m), x))
                .collect::<Result<_>>()?;
            let full = b.poe(&experts)?;
            let z = b.sample(full, "joint")?;
            for (m, &x) in xs.iter().enumerate() {
                let s = &spec.modalities[m];
                let name = format!("joint/{}/recon", s.name);
                let out = spec.top_decoder(m).forward(&mut b.g, &model.params, z)?;
                let nll =
                    nll_nodes(&mut b.g, s.likelihood, out, x).map_err(|e| within_term(&name, e))?;
                top_terms.push(b.term(name, nll, s.lambda)?);
            }
            let kl =
                kl_to_standard_nodes(&mut b.g, full).map_err(|e| within_term("joint/kl", e))?;
            top_terms.push(b.term("joint/kl".into(), kl, spec.beta)?);
            if xs.len() > 1 {
                for (m, &x) in xs.iter().enumerate() {
                    let s = &spec.modalities[m];
                    let q = b.poe(&[experts[m]])?;
                    let zm = b.sample(q, &format!("single/{}", s.name))?;
                    let name = format!("single/{}/recon", s.name);
                    let out = spec.top_decoder(m).forward(&mut b.g, &model.params, zm)?;
                    let nll = nll_nodes(&mut b.g, s.likelihood, out, x)
                        .map_err(|e| within_term(&name, e))?;
                    top_terms.push(b.term(name, nll, s.lambda)?);
                    let name = format!("single/{}/kl", s.name);
                    let kl =
                        kl_to_standard_nodes(&mut b.g, q).map_err(|e| within_term(&name, e))?;
                    top_terms.push(b.term(name, kl, spec.beta)?);
                    elbo_count += 1;
                }
            }
        }
        Variant::FusionVae => {
            let cat = b.g.concat(&xs)?;
            let q = b.gaussian_head(&spec.fusion_encoder(), cat)?;
            let z = b.sample(q, "fusion")?;
            let out = spec.fusion_decoder().forward(&mut b.g, &model.params, z)?;
            for (m, &x) in xs.iter().enumerate() {
                let s = &spec.modalities[m];
                let name = format!("fusion/{}/recon", s.name);
                let part = b.g.slice(out, spec.data_offset(m), s.data_dim)?;
                let nll = nll_nodes(&mut b.g, s.likelihood, part, x)
                    .map_err(|e| within_term(&name, e))?;
                top_terms.push(b.term(name, nll, s.lambda)?);
            }
            let kl = kl_to_standard_nodes(&mut b.g, q).map_err(|e| within_term("fusion/kl", e))?;
            top_terms.push(b.term("fusion/kl".into(), kl, spec.beta)?);
        }
    }

    let bottom = b.sum(&bottom_terms)?;
    let top = b.sum(&top_terms)?;
    let groups: Vec<NodeId> = [bottom, top, alma].into_iter().flatten().collect();
    let total = b.sum(&groups)?.expect("at least one term");
    b.g.tag(total, "total");
    Ok(LossGraph {
        graph: b.g,
        total,
        bottom,
        top,
        alma,
        terms: b.terms,
        clamp_events: b.clamps,
        elbo_count,
    })
}
