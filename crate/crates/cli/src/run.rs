//! Shared plumbing: config assembly, seeds, atomic output directories and
//! manifests.

use std::fs;
use std::path::{Path, PathBuf};

use muse_core::config::Config;
use muse_core::error::{Error, Result};

use crate::{agent_cmds, env_cmd, gradcheck_cmd, model_cmds, Command};

pub const MANIFEST: &str = "manifest.cfg";

pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub set: Vec<String>,
}

#[derive(Debug, PartialEq)]
pub enum Outcome {
    Success,
    CheckFailed(String),
}

/// Work a command does once its config has been validated.
pub trait Job {
    fn execute(self: Box<Self>, out: &Path) -> Result<Outcome>;
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Io { .. } => 2,
        Error::Mismatch(_) => 3,
        _ => 1,
    }
}

fn apply_override(cfg: &mut Config, spec: &str) -> Result<()> {
    let bad = || Error::config(spec, "expected --set section.key=value");
    let (k, v) = spec.split_once('=').ok_or_else(bad)?;
    let (s, k) = k.trim().rsplit_once('.').ok_or_else(bad)?;
    if s.is_empty() || k.is_empty() {
        return Err(bad());
    }
    cfg.set(s, k, v.trim());
    Ok(())
}

pub fn run(command: &Command, opts: RunOptions) -> Result<Outcome> {
    let mut cfg = match &opts.config {
        Some(p) => Config::load(p)?,
        None => Config::new(),
    };
    for s in &opts.set {
        apply_override(&mut cfg, s)?;
    }
    let name = command.name();
    if let Some(c) = cfg.get::<String>("run", "command")? {
        if c != name {
            return Err(Error::config(
                "run.command",
                format!("config is for `{c}`, not `{name}`"),
            ));
        }
    }
    cfg.set("run", "command", name);
    let _: String = cfg.require("run", "command")?;
    if let Some(s) = opts.seed {
        cfg.set("run", "seed", s);
    }
    let seed: u64 = cfg.get_or("run", "seed", 0)?;

    let job: Box<dyn Job> = match command {
        Command::TrainModel => model_cmds::train_model(&mut cfg, seed)?,
        Command::EvalLikelihood => model_cmds::eval_likelihood(&mut cfg, seed)?,
        Command::Generate => model_cmds::generate(&mut cfg, seed)?,
        Command::Env => env_cmd::env(&mut cfg, seed)?,
        Command::TrainAgent => agent_cmds::train_agent(&mut cfg, seed)?,
        Command::EvalAgent => agent_cmds::eval_agent(&mut cfg, seed)?,
        Command::Gradcheck { inject_fault } => {
            gradcheck_cmd::gradcheck(&mut cfg, seed, inject_fault.clone())?
        }
    };
    cfg.ensure_all_used()?;

    let out = opts.out.unwrap_or_else(|| PathBuf::from("out").join(name));
    let staging = Staging::begin(&out)?;
    let outcome = job.execute(staging.path())?;
    write(&staging.path().join(MANIFEST), cfg.effective_text())?;
    staging.commit()?;
    Ok(outcome)
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// A sibling directory that becomes the output directory by rename, so a
/// failed run leaves no partial output behind.
struct Staging {
    dir: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl Staging {
    fn begin(target: &Path) -> Result<Self> {
        if target.exists() {
            let is_run = target.is_dir() && target.join(MANIFEST).is_file();
            let is_empty = target.is_dir()
                && fs::read_dir(target)
                    .map_err(|e| Error::io(target, e))?
                    .next()
                    .is_none();
            if !(is_run || is_empty) {
                return Err(Error::config(
                    "--out",
                    format!(
                        "{} exists and is not a previous run directory",
                        target.display()
                    ),
                ));
            }
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let leaf = target
            .file_name()
            .ok_or_else(|| Error::config("--out", "output path has no final component"))?
            .to_string_lossy()
            .into_owned();
        let dir = parent.join(format!(".{leaf}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    fn path(&self) -> &Path {
        &self.dir
    }

    fn commit(mut self) -> Result<()> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| Error::io(&self.target, e))?;
        }
        fs::rename(&self.dir, &self.target).map_err(|e| Error::io(&self.target, e))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_split_on_the_last_dot() {
        let mut cfg = Config::new();
        apply_override(&mut cfg, "modality.image.latent_dim = 7").unwrap();
        assert_eq!(
            cfg.get_str("modality.image", "latent_dim").as_deref(),
            Some("7")
        );
        assert!(apply_override(&mut cfg, "novalue").is_err());
        assert!(apply_override(&mut cfg, "nosection=3").is_err());
    }

    #[test]
    fn error_kinds_map_to_stable_codes() {
        assert_eq!(exit_code(&Error::config("a.b", "x")), 2);
        assert_eq!(exit_code(&Error::Mismatch("x".into())), 3);
        assert_eq!(exit_code(&Error::contract("x")), 1);
    }

    #[test]
    fn failed_staging_leaves_nothing() {
        let root = std::env::temp_dir().join(format!("muse-staging-{}", std::process::id()));
        let target = root.join("run");
        {
            let s = Staging::begin(&target).unwrap();
            write(&s.path().join("a.csv"), "x\n").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(&root).unwrap().count(), 0);
        let s = Staging::begin(&target).unwrap();
        write(&s.path().join(MANIFEST), "").unwrap();
        s.commit().unwrap();
        assert!(target.join(MANIFEST).is_file());
        fs::remove_dir_all(&root).unwrap();
    }
}
