//! Checkpoints: the parameter container plus a `key = value` sidecar
//! describing the model, written next to it as `<path>.meta`.

use std::path::{Path, PathBuf};

use super::spec::ModelSpec;
use super::MuseModel;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn sidecar_text(model: &MuseModel, seed: u64) -> String {
    let mut cfg = Config::new();
    model.spec.write_config(&mut cfg);
    cfg.set("checkpoint", "seed", seed);
    cfg.set(
        "checkpoint",
        "fingerprint",
        format!("{:016x}", model.params.fingerprint()),
    );
    cfg.set("checkpoint", "scalars", model.params.num_scalars());
    cfg.to_text()
}

pub fn save(model: &MuseModel, path: &Path, seed: u64) -> Result<()> {
    model.params.save(path)?;
    let side = sidecar_path(path);
    std::fs::write(&side, sidecar_text(model, seed)).map_err(|e| Error::io(side, e))
}

/// Load and cross-check a checkpoint. Returns the model and its training seed.
pub fn load(path: &Path) -> Result<(MuseModel, u64)> {
    let side = sidecar_path(path);
    let cfg = Config::load(&side)?;
    let spec = ModelSpec::from_config(&cfg, None)
        .map_err(|e| Error::Mismatch(format!("sidecar {}: {e}", side.display())))?;
    let seed: u64 = cfg.get_or("checkpoint", "seed", 0)?;
    let fingerprint: Option<String> = cfg.get("checkpoint", "fingerprint")?;
    let _: Option<usize> = cfg.get("checkpoint", "scalars")?;
    let params = ParamStore::load(path)?;
    if let Some(f) = fingerprint {
        let actual = format!("{:016x}", params.fingerprint());
        if f != actual {
            return Err(Error::Mismatch(format!(
                "parameter fingerprint {actual} differs from sidecar {f}"
            )));
        }
    }
    let template = MuseModel::new(spec.clone(), 0)?;
    let want: Vec<(&str, &[usize])> = template
        .params
        .iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    let got: Vec<(&str, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
    if want != got {
        let missing = want.iter().find(|w| !got.contains(w)).map(|w| w.0);
        let extra = got.iter().find(|g| !want.contains(g)).map(|g| g.0);
        return Err(Error::Mismatch(format!(
            "parameters do not fit the {} spec (missing {:?}, unexpected {:?})",
            spec.variant, missing, extra
        )));
    }
    Ok((MuseModel { spec, params }, seed))
}
