use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

struct Work(PathBuf);

impl Work {
    fn new(name: &str) -> Work {
        let p = std::env::temp_dir().join(format!("muse-cli-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&p);
        fs::create_dir_all(&p).unwrap();
        Work(p)
    }

    fn run(&self, args: &[&str]) -> (i32, String) {
        let out = Command::new(env!("CARGO_BIN_EXE_muse"))
            .args(args)
            .current_dir(&self.0)
            .output()
            .unwrap();
        let text = String::from_utf8_lossy(&out.stdout).into_owned()
            + &String::from_utf8_lossy(&out.stderr);
        (out.status.code().unwrap_or(-1), text)
    }

    fn path(&self, p: &str) -> PathBuf {
        self.0.join(p)
    }
}

impl Drop for Work {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

fn train_small_bars(w: &Work, out: &str) {
    let (code, text) = w.run(&[
        "train-model",
        "--set",
        "train.epochs=1",
        "--set",
        "data.train_size=64",
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{text}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let w = Work::new("unknown-key");
    let (code, text) = w.run(&[
        "env",
        "--set",
        "env.name=pendulum",
        "--set",
        "env.colour=red",
        "--out",
        "o",
    ]);
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("env.colour"), "{text}");
    assert!(!w.path("o").exists());
}

#[test]
fn env_writes_frames_sound_and_rewards() {
    let w = Work::new("env");
    let (code, text) = w.run(&[
        "env",
        "--set",
        "env.name=pendulum",
        "--set",
        "env.steps=10",
        "--out",
        "p",
    ]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(fs::read_dir(w.path("p/frames")).unwrap().count(), 10);
    assert_eq!(lines(&w.path("p/sound.csv")).len(), 11);
    assert_eq!(
        lines(&w.path("p/rewards.csv"))[0],
        "step,reward,done,truncated"
    );
    assert!(w.path("p/manifest.cfg").exists());

    let (code, _) = w.run(&[
        "env",
        "--set",
        "env.name=hyperhot",
        "--set",
        "env.policy=scripted",
        "--out",
        "h",
    ]);
    assert_eq!(code, 0);
    let last = lines(&w.path("h/rewards.csv")).pop().unwrap();
    assert!(last.contains(",10,"), "{last}");

    let (code, _) = w.run(&["env", "--set", "env.name=cartpole", "--out", "x"]);
    assert_eq!(code, 2);
}

#[test]
fn command_mismatch_in_config_is_rejected() {
    let w = Work::new("cmd");
    let (code, _) = w.run(&[
        "env",
        "--set",
        "env.name=pendulum",
        "--set",
        "env.steps=2",
        "--out",
        "e",
    ]);
    assert_eq!(code, 0);
    let (code, text) = w.run(&["gradcheck", "--config", "e/manifest.cfg", "--out", "g"]);
    assert_eq!(code, 2, "{text}");
}

#[test]
fn model_commands_round_trip() {
    let w = Work::new("model");
    train_small_bars(&w, "m");
    for f in [
        "model.bin",
        "model.bin.meta",
        "train_log.csv",
        "manifest.cfg",
    ] {
        assert!(w.path("m").join(f).exists(), "missing {f}");
    }

    let (code, text) = w.run(&[
        "eval-likelihood",
        "--set",
        "eval.checkpoint=m/model.bin",
        "--set",
        "eval.samples=20",
        "--set",
        "eval.count=4",
        "--out",
        "l",
    ]);
    assert_eq!(code, 0, "{text}");
    let rows = lines(&w.path("l/metrics.csv"));
    assert_eq!(rows.len(), 6, "{rows:?}");

    let (code, _) = w.run(&[
        "eval-likelihood",
        "--set",
        "eval.checkpoint=m/model.bin",
        "--set",
        "eval.samples=0",
        "--out",
        "z",
    ]);
    assert_eq!(code, 2);

    let (code, text) = w.run(&[
        "generate",
        "--set",
        "generate.checkpoint=m/model.bin",
        "--set",
        "generate.sources=angle",
        "--set",
        "generate.target=image",
        "--set",
        "generate.count=3",
        "--out",
        "g",
    ]);
    assert_eq!(code, 0, "{text}");
    assert!(w.path("g/sample_0_image.pgm").exists());
    assert!(w.path("g/sample_2_image.pgm").exists());

    let (code, _) = w.run(&[
        "generate",
        "--set",
        "generate.checkpoint=m/model.bin",
        "--set",
        "generate.sources=smell",
        "--set",
        "generate.target=image",
        "--out",
        "g2",
    ]);
    assert_eq!(code, 2);

    let (code, _) = w.run(&[
        "eval-likelihood",
        "--set",
        "eval.checkpoint=missing.bin",
        "--out",
        "q",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn latent_adapter_needs_matching_checkpoint() {
    let w = Work::new("agent");
    let (code, _) = w.run(&[
        "train-agent",
        "--set",
        "agent.adapter=muse_latent",
        "--out",
        "a",
    ]);
    assert_eq!(code, 3);

    // a bars checkpoint cannot serve as a pendulum representation
    train_small_bars(&w, "m");
    let (code, text) = w.run(&[
        "train-agent",
        "--set",
        "agent.adapter=muse_latent",
        "--set",
        "adapter.checkpoint=m/model.bin",
        "--out",
        "b",
    ]);
    assert_eq!(code, 3, "{text}");
}

#[test]
fn raw_agent_trains_and_evaluates() {
    let w = Work::new("raw");
    let (code, text) = w.run(&[
        "train-agent",
        "--set",
        "agent.steps=400",
        "--set",
        "agent.warmup=100",
        "--set",
        "representation.frames=200",
        "--out",
        "a",
    ]);
    assert_eq!(code, 0, "{text}");
    assert!(w.path("a/policy.bin").exists());
    assert!(w.path("a/learning_curve.csv").exists());

    let (code, text) = w.run(&[
        "eval-agent",
        "--set",
        "eval.agent=a",
        "--set",
        "eval.episodes=1",
        "--set",
        "eval.seeds=0, 1",
        "--set",
        "eval.random_baseline=true",
        "--out",
        "e",
    ]);
    assert_eq!(code, 0, "{text}");
    let summary = lines(&w.path("e/summary.csv"));
    assert_eq!(summary[0], "agent_kind,modality_mask,seed,episodes,mean,sd");
    assert_eq!(summary.len(), 1 + 3 * 2);
    assert!(w.path("e/random.csv").exists());

    let (code, _) = w.run(&[
        "eval-agent",
        "--set",
        "eval.agent=a",
        "--set",
        "eval.masks=smell",
        "--out",
        "e2",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn existing_output_without_manifest_is_kept() {
    let w = Work::new("keep");
    fs::create_dir_all(w.path("busy")).unwrap();
    fs::write(w.path("busy/notes.txt"), "mine").unwrap();
    let (code, _) = w.run(&[
        "env",
        "--set",
        "env.name=pendulum",
        "--set",
        "env.steps=2",
        "--out",
        "busy",
    ]);
    assert_ne!(code, 0);
    assert_eq!(
        fs::read_to_string(w.path("busy/notes.txt")).unwrap(),
        "mine"
    );
}
