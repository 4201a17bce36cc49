//! Diagonal Gaussians: closed-form KLs, densities, sampling, and the
//! product-of-experts rule, both on plain vectors and as graph nodes.

use std::f64::consts::PI;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

/// Log-variances are clamped to this range before inversion in the PoE.
pub const LOGVAR_CLAMP: f64 = 20.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::contract(format!("dimension mismatch: {a} vs {b}")))
    }
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, logvar: Vec<f64>) -> Result<Self> {
        check_dims(mean.len(), logvar.len())?;
        if logvar.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("Gaussian parameters must be finite"));
        }
        Ok(Self { mean, logvar })
    }

    pub fn from_variance(mean: Vec<f64>, var: &[f64]) -> Result<Self> {
        Self::new(mean, var.iter().map(|v| v.ln()).collect())
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            logvar: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn var(&self) -> Vec<f64> {
        self.logvar.iter().map(|v| v.exp()).collect()
    }

    pub fn precision(&self) -> Vec<f64> {
        self.logvar.iter().map(|v| (-v).exp()).collect()
    }

    pub fn kl_to_standard(&self) -> f64 {
        0.5 * self
            .mean
            .iter()
            .zip(&self.logvar)
            .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
            .sum::<f64>()
    }

    /// KL(self ‖ p).
    pub fn kl_between(&self, p: &DiagGaussian) -> Result<f64> {
        check_dims(self.dim(), p.dim())?;
        Ok(0.5
            * (0..self.dim())
                .map(|i| {
                    let d = self.mean[i] - p.mean[i];
                    p.logvar[i] - self.logvar[i]
                        + ((self.logvar[i] - p.logvar[i]).exp())
                        + d * d * (-p.logvar[i]).exp()
                        - 1.0
                })
                .sum::<f64>())
    }

    /// KL(a‖b) + KL(b‖a).
    pub fn symmetric_kl(&self, other: &DiagGaussian) -> Result<f64> {
        Ok(self.kl_between(other)? + other.kl_between(self)?)
    }

    /// `μ + σ ⊙ noise`.
    pub fn reparam_sample(&self, noise: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.dim(), noise.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.logvar)
            .zip(noise)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect())
    }

    pub fn sample(&self, rng: &mut SplitRng) -> Vec<f64> {
        let noise = rng.normals(self.dim());
        self.reparam_sample(&noise).expect("dims match")
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.dim(), x.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.logvar)
            .zip(x)
            .map(|((m, lv), xi)| -HALF_LN_2PI - 0.5 * lv - (xi - m) * (xi - m) * 0.5 * (-lv).exp())
            .sum())
    }
}

/// Product of Gaussian experts, optionally including a standard-normal
/// prior expert. Returns the product and the number of clamped log-variance
/// coordinates.
pub fn poe_combine_counted(
    experts: &[DiagGaussian],
    include_prior: bool,
) -> Result<(DiagGaussian, usize)> {
    let dim = match experts.first() {
        Some(e) => e.dim(),
        None if include_prior => {
            return Err(Error::contract(
                "an empty product needs its dimension; use poe_with_prior",
            ))
        }
        None => return Err(Error::contract("product of zero experts without a prior")),
    };
    let mut prec = vec![if include_prior { 1.0 } else { 0.0 }; dim];
    let mut weighted = vec![0.0; dim];
    let mut clamps = 0;
    for e in experts {
        check_dims(e.dim(), dim)?;
        for i in 0..dim {
            let lv = e.logvar[i];
            if !(-LOGVAR_CLAMP..=LOGVAR_CLAMP).contains(&lv) {
                clamps += 1;
            }
            let t = (-lv.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).exp();
            prec[i] += t;
            weighted[i] += e.mean[i] * t;
        }
    }
    let mean = weighted.iter().zip(&prec).map(|(w, p)| w / p).collect();
    let logvar = prec.iter().map(|p| -p.ln()).collect();
    Ok((DiagGaussian { mean, logvar }, clamps))
}

pub fn poe_combine(experts: &[DiagGaussian], include_prior: bool) -> Result<DiagGaussian> {
    poe_combine_counted(experts, include_prior).map(|(g, _)| g)
}

/// PoE over a possibly empty set of experts of known dimension, prior included.
pub fn poe_with_prior(experts: &[DiagGaussian], dim: usize) -> Result<DiagGaussian> {
    if experts.is_empty() {
        Ok(DiagGaussian::standard(dim))
    } else {
        poe_combine(experts, true)
    }
}

/// Log density of `N(0, I)` at `x`.
pub fn log_standard_normal(x: &[f64]) -> f64 {
    x.iter().map(|v| -HALF_LN_2PI - 0.5 * v * v).sum()
}

pub fn half_ln_2pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}

/// A batch of diagonal Gaussians stored as `[B, d]` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBatch {
    pub mean: Tensor,
    pub logvar: Tensor,
}

impl GaussianBatch {
    pub fn standard(batch: usize, dim: usize) -> Self {
        Self {
            mean: Tensor::zeros(&[batch, dim]),
            logvar: Tensor::zeros(&[batch, dim]),
        }
    }

    /// Split a `[B, 2d]` network output into mean (first half) and log-variance.
    pub fn from_head(out: &Tensor) -> Result<Self> {
        let w = out.row_len();
        if out.rank() != 2 || w % 2 != 0 {
            return Err(Error::contract(format!(
                "Gaussian head output {:?} is not [B, 2d]",
                out.shape()
            )));
        }
        let (b, d) = (out.rows(), w / 2);
        let mut mean = Vec::with_capacity(b * d);
        let mut logvar = Vec::with_capacity(b * d);
        for i in 0..b {
            mean.extend_from_slice(&out.row(i)[..d]);
            logvar.extend_from_slice(&out.row(i)[d..]);
        }
        Ok(Self {
            mean: Tensor::new(vec![b, d], mean)?,
            logvar: Tensor::new(vec![b, d], logvar)?,
        })
    }

    pub fn batch(&self) -> usize {
        self.mean.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.row_len()
    }

    pub fn row(&self, i: usize) -> DiagGaussian {
        DiagGaussian {
            mean: self.mean.row(i).to_vec(),
            logvar: self.logvar.row(i).to_vec(),
        }
    }

    pub fn rows(&self) -> Vec<DiagGaussian> {
        (0..self.batch()).map(|i| self.row(i)).collect()
    }

    pub fn from_rows(rows: &[DiagGaussian]) -> Result<Self> {
        let means: Vec<Vec<f64>> = rows.iter().map(|g| g.mean.clone()).collect();
        let lvs: Vec<Vec<f64>> = rows.iter().map(|g| g.logvar.clone()).collect();
        Ok(Self {
            mean: Tensor::from_rows(&means)?,
            logvar: Tensor::from_rows(&lvs)?,
        })
    }

    /// Row-wise product of experts with the standard prior. An empty expert
    /// list yields the prior. Returns the number of clamped entries too.
    pub fn poe(experts: &[&GaussianBatch], batch: usize, dim: usize) -> Result<(Self, usize)> {
        let mut out = Vec::with_capacity(batch);
        let mut clamps = 0;
        for i in 0..batch {
            let rows: Vec<DiagGaussian> = experts.iter().map(|e| e.row(i)).collect();
            if rows.is_empty() {
                out.push(DiagGaussian::standard(dim));
            } else {
                let (g, c) = poe_combine_counted(&rows, true)?;
                clamps += c;
                out.push(g);
            }
        }
        Ok((Self::from_rows(&out)?, clamps))
    }
}

// ---------------------------------------------------------------------------
// graph versions, batch as the leading axis

/// A batch of diagonal Gaussians as `[B, d]` mean and log-variance nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussianNodes {
    pub mean: NodeId,
    pub logvar: NodeId,
}

impl GaussianNodes {
    /// Row `i` as a plain Gaussian.
    pub fn row(&self, g: &Graph, i: usize) -> DiagGaussian {
        DiagGaussian {
            mean: g.value(self.mean).row(i).to_vec(),
            logvar: g.value(self.logvar).row(i).to_vec(),
        }
    }

    pub fn rows(&self, g: &Graph) -> Vec<DiagGaussian> {
        (0..g.value(self.mean).rows())
            .map(|i| self.row(g, i))
            .collect()
    }

    pub fn standard(g: &mut Graph, batch: usize, dim: usize) -> Self {
        let mean = g.constant(Tensor::zeros(&[batch, dim]));
        let logvar = g.constant(Tensor::zeros(&[batch, dim]));
        Self { mean, logvar }
    }

    pub fn detach(&self, g: &mut Graph) -> Result<Self> {
        Ok(Self {
            mean: g.stop_gradient(self.mean)?,
            logvar: g.stop_gradient(self.logvar)?,
        })
    }
}

/// Per-row `KL(q ‖ N(0, I))`, shape `[B]`.
pub fn kl_to_standard_nodes(g: &mut Graph, q: GaussianNodes) -> Result<NodeId> {
    let m2 = g.square(q.mean)?;
    let var = g.exp(q.logvar)?;
    let a = g.add(m2, var)?;
    let b = g.sub(a, q.logvar)?;
    let c = g.add_scalar(b, -1.0)?;
    let s = g.sum_last(c)?;
    g.scale(s, 0.5)
}

/// Per-row `KL(q ‖ p)`, shape `[B]`.
pub fn kl_between_nodes(g: &mut Graph, q: GaussianNodes, p: GaussianNodes) -> Result<NodeId> {
    let dlv = g.sub(q.logvar, p.logvar)?;
    let ratio = g.exp(dlv)?;
    let dm = g.sub(q.mean, p.mean)?;
    let dm2 = g.square(dm)?;
    let neg_plv = g.neg(p.logvar)?;
    let inv_pv = g.exp(neg_plv)?;
    let quad = g.mul(dm2, inv_pv)?;
    let a = g.add(ratio, quad)?;
    let b = g.sub(a, dlv)?;
    let c = g.add_scalar(b, -1.0)?;
    let s = g.sum_last(c)?;
    g.scale(s, 0.5)
}

pub fn symmetric_kl_nodes(g: &mut Graph, a: GaussianNodes, b: GaussianNodes) -> Result<NodeId> {
    let ab = kl_between_nodes(g, a, b)?;
    let ba = kl_between_nodes(g, b, a)?;
    g.add(ab, ba)
}

/// Product of experts (plus the standard prior when `include_prior`).
/// Returns the product and the number of clamped log-variance entries.
pub fn poe_nodes(
    g: &mut Graph,
    experts: &[GaussianNodes],
    include_prior: bool,
    batch: usize,
    dim: usize,
) -> Result<(GaussianNodes, usize)> {
    if experts.is_empty() {
        if include_prior {
            return Ok((GaussianNodes::standard(g, batch, dim), 0));
        }
        return Err(Error::contract("product of zero experts without a prior"));
    }
    let mut clamps = 0;
    let mut prec_sum = None;
    let mut weighted_sum = None;
    for e in experts {
        clamps += g
            .value(e.logvar)
            .data()
            .iter()
            .filter(|v| !(-LOGVAR_CLAMP..=LOGVAR_CLAMP).contains(*v))
            .count();
        let lv = g.clamp(e.logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP)?;
        let neg = g.neg(lv)?;
        let t = g.exp(neg)?;
        let mt = g.mul(e.mean, t)?;
        prec_sum = Some(match prec_sum {
            None => t,
            Some(acc) => g.add(acc, t)?,
        });
        weighted_sum = Some(match weighted_sum {
            None => mt,
            Some(acc) => g.add(acc, mt)?,
        });
    }
    let mut prec = prec_sum.expect("non-empty");
    if include_prior {
        prec = g.add_scalar(prec, 1.0)?;
    }
    let log_prec = g.log(prec)?;
    let logvar = g.neg(log_prec)?;
    let var = g.exp(logvar)?;
    let mean = g.mul(weighted_sum.expect("non-empty"), var)?;
    Ok((GaussianNodes { mean, logvar }, clamps))
}

/// `μ + exp(½ logvar) ⊙ noise` with `noise` recorded as a constant.
pub fn reparam_nodes(g: &mut Graph, q: GaussianNodes, noise: Tensor) -> Result<NodeId> {
    let eps = g.constant(noise);
    let half = g.scale(q.logvar, 0.5)?;
    let sd = g.exp(half)?;
    let s = g.mul(sd, eps)?;
    g.add(q.mean, s)
}

/// Per-row `log N(x; μ, σ²)`, shape `[B]`.
pub fn log_pdf_nodes(g: &mut Graph, q: GaussianNodes, x: NodeId) -> Result<NodeId> {
    let d = g.sub(x, q.mean)?;
    let d2 = g.square(d)?;
    let neg_lv = g.neg(q.logvar)?;
    let inv = g.exp(neg_lv)?;
    let quad = g.mul(d2, inv)?;
    let a = g.add(quad, q.logvar)?;
    let s = g.sum_last(a)?;
    let dim = *g.value(x).shape().last().expect("rank >= 1") as f64;
    let h = g.scale(s, -0.5)?;
    g.add_scalar(h, -HALF_LN_2PI * dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(m: f64, v: f64) -> DiagGaussian {
        DiagGaussian::from_variance(vec![m], &[v]).unwrap()
    }

    #[test]
    fn closed_form_kl_cases() {
        assert_eq!(DiagGaussian::standard(3).kl_to_standard(), 0.0);
        assert!((g1(1.0, 1.0).kl_to_standard() - 0.5).abs() < 1e-15);
        assert!((g1(0.0, 1.0).kl_between(&g1(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        assert!((g1(0.0, 1.0).symmetric_kl(&g1(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(g1(0.0, 1.0).kl_between(&DiagGaussian::standard(2)).is_err());
    }

    #[test]
    fn poe_small_cases() {
        let p = poe_with_prior(&[], 1).unwrap();
        assert_eq!(p, DiagGaussian::standard(1));
        let p = poe_combine(&[g1(2.0, 1.0)], true).unwrap();
        assert!((p.mean[0] - 1.0).abs() < 1e-15);
        assert!((p.var()[0] - 0.5).abs() < 1e-15);
        assert!(poe_combine(&[], false).is_err());
    }

    #[test]
    fn poe_counts_clamps() {
        let e = DiagGaussian::new(vec![0.0, 0.0], vec![-30.0, 0.0]).unwrap();
        let (p, clamps) = poe_combine_counted(&[e], false).unwrap();
        assert_eq!(clamps, 1);
        assert!((p.logvar[0] + 20.0).abs() < 1e-12);
    }

    #[test]
    fn reparam_and_log_pdf_by_hand() {
        let q = DiagGaussian::from_variance(vec![1.0, 2.0], &[0.25, 4.0]).unwrap();
        let z = q.reparam_sample(&[1.0, -1.0]).unwrap();
        assert!((z[0] - 1.5).abs() < 1e-15 && z[1].abs() < 1e-15);
        let s = DiagGaussian::standard(1);
        assert!((s.log_pdf(&[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        assert!((s.log_pdf(&[1.0]).unwrap() + 1.418_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn graph_versions_agree_with_plain() {
        let a = DiagGaussian::new(vec![0.3, -1.0], vec![0.2, -0.7]).unwrap();
        let b = DiagGaussian::new(vec![-0.4, 0.5], vec![-1.1, 0.9]).unwrap();
        let mut g = Graph::new();
        let node = |g: &mut Graph, d: &DiagGaussian| GaussianNodes {
            mean: g.constant(Tensor::new(vec![1, 2], d.mean.clone()).unwrap()),
            logvar: g.constant(Tensor::new(vec![1, 2], d.logvar.clone()).unwrap()),
        };
        let (na, nb) = (node(&mut g, &a), node(&mut g, &b));
        let kl = kl_between_nodes(&mut g, na, nb).unwrap();
        assert!((g.value(kl).item() - a.kl_between(&b).unwrap()).abs() < 1e-14);
        let ks = kl_to_standard_nodes(&mut g, na).unwrap();
        assert!((g.value(ks).item() - a.kl_to_standard()).abs() < 1e-14);
        let (p, _) = poe_nodes(&mut g, &[na, nb], true, 1, 2).unwrap();
        let want = poe_combine(&[a.clone(), b], true).unwrap();
        let got = p.row(&g, 0);
        for i in 0..2 {
            assert!((got.mean[i] - want.mean[i]).abs() < 1e-14);
            assert!((got.logvar[i] - want.logvar[i]).abs() < 1e-14);
        }
        let x = g.constant(Tensor::new(vec![1, 2], vec![0.1, 0.2]).unwrap());
        let lp = log_pdf_nodes(&mut g, na, x).unwrap();
        assert!((g.value(lp).item() - a.log_pdf(&[0.1, 0.2]).unwrap()).abs() < 1e-13);
    }
}
