//! Named parameter storage, the Adam optimizer, and the binary container.
//!
//! Container layout: the 8-byte magic `MUSEPST1`, then for each entry in
//! name order: `u32` name length, UTF-8 name, `u32` rank, one `u32` per
//! dimension, then the values as little-endian `f64`. All integers are
//! little-endian. Optimizer moments are not stored.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::fnv1a;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MUSEPST1";

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    m: Tensor,
    v: Tensor,
    step: u64,
}

impl ParamEntry {
    fn new(value: Tensor) -> Self {
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        Self {
            value,
            m,
            v,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Tensor {
        &self.m
    }

    pub fn second_moment(&self) -> &Tensor {
        &self.v
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::contract(format!(
                "parameter `{name}` already exists"
            )));
        }
        self.entries.insert(name, ParamEntry::new(value));
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter `{name}`")))
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    /// Replace a value, keeping optimizer state. Shapes must agree.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter `{name}`")))?;
        if e.value.shape() != value.shape() {
            return Err(Error::contract(format!(
                "parameter `{name}` has shape {:?}, got {:?}",
                e.value.shape(),
                value.shape()
            )));
        }
        e.value = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    /// Entries whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        }
    }

    /// One bias-corrected Adam update for every parameter with a gradient.
    pub fn adam_step<'a, I>(&mut self, grads: I, cfg: &AdamConfig) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a Tensor)>,
    {
        let grads: Vec<(&str, &Tensor)> = grads.into_iter().collect();
        for (name, g) in &grads {
            let e = self.entries.get(*name).ok_or_else(|| {
                Error::contract(format!("gradient for unknown parameter `{name}`"))
            })?;
            if e.value.shape() != g.shape() {
                return Err(Error::contract(format!(
                    "gradient for `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    e.value.shape()
                )));
            }
        }
        for (name, g) in grads {
            let e = self.entries.get_mut(name).expect("checked above");
            e.step += 1;
            let t = e.step as f64;
            let bc1 = 1.0 - cfg.beta1.powf(t);
            let bc2 = 1.0 - cfg.beta2.powf(t);
            let (value, m, v) = (e.value.data_mut(), e.m.data_mut(), e.v.data_mut());
            for i in 0..value.len() {
                let gi = g.data()[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                value[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        for (name, e) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(e.value.rank() as u32).to_le_bytes());
            for &d in e.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in e.value.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                detail: "bad magic, expected MUSEPST1".into(),
            });
        }
        let mut store = ParamStore::new();
        while r.pos < bytes.len() {
            let at = r.pos;
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Parse {
                    offset: at + 4,
                    detail: "name is not UTF-8".into(),
                })?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let b = r.take(8)?;
                data.push(f64::from_le_bytes(b.try_into().expect("8 bytes")));
            }
            let t = Tensor::new(shape, data).map_err(|e| Error::Parse {
                offset: at,
                detail: e.to_string(),
            })?;
            store.insert(name, t).map_err(|e| Error::Parse {
                offset: at,
                detail: e.to_string(),
            })?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hash of the serialized values.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(&self.to_bytes())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(|e| e.value.is_finite())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos,
                detail: format!(
                    "truncated: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Rescale gradients in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.data().iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(name, Tensor::vector(vec![x])).unwrap();
        s
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut s = one("w", 0.0);
        let g = Tensor::vector(vec![1.0]);
        s.adam_step([("w", &g)], &AdamConfig::default()).unwrap();
        let w = s.get("w").unwrap().item();
        assert!((w + 1e-3).abs() < 1e-10, "{w}");
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut s = one("w", 0.7);
        let g = Tensor::vector(vec![0.0]);
        s.adam_step([("w", &g)], &AdamConfig::default()).unwrap();
        assert_eq!(s.get("w").unwrap().item(), 0.7);
    }

    #[test]
    fn unknown_or_misshaped_gradient_is_rejected() {
        let mut s = one("w", 0.0);
        let g = Tensor::vector(vec![1.0, 2.0]);
        assert!(s.adam_step([("w", &g)], &AdamConfig::default()).is_err());
        assert!(s.adam_step([("nope", &g)], &AdamConfig::default()).is_err());
    }

    #[test]
    fn truncated_container_reports_offset() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let bytes = s.to_bytes();
        let err = ParamStore::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(ParamStore::from_bytes(b"NOTMAGIC").is_err());
    }
}
