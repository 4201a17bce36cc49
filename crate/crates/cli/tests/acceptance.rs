//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one verdict line; the process fails if any
//! criterion does.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p muse-cli --test acceptance -- 1 5 9`. The HyperHot
//! zero-shot suite is optional and runs only with `MUSE_ACCEPTANCE_HYPERHOT=1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use muse_core::classifier::Classifier;
use muse_core::data::bars::make_synthetic_bars;
use muse_core::data::mnist::{load_mnist_pair, split_paths};
use muse_core::data::{MultimodalDataset, Split};
use muse_core::gaussian::{poe_combine, DiagGaussian};
use muse_core::likelihood::{
    coherence_accuracy, generate_all, iw_conditional, iw_log_evidence, orientation_accuracy,
    LinearGaussianToy,
};
use muse_core::model::{build_loss, checkpoint, fit, MuseModel, Variant};
use muse_core::presets::{
    bars_spec, bars_train_config, BARS_IMAGE_SIZE, BARS_NOISE_SD, BARS_TRAIN,
};
use muse_core::rng::SplitRng;
use muse_core::tensor::Tensor;
use muse_envs::hyperhot::{hyperhot_step, initial_state, Bullet, HyperhotConfig, Owner, NOOP};
use muse_envs::sound::{doppler_frequency, inverse_square_amplitude};

type Check = Result<(bool, String), String>;

struct Ctx {
    bin: PathBuf,
    root: PathBuf,
    work: PathBuf,
}

impl Ctx {
    fn mnist_dir(&self) -> PathBuf {
        self.root.join("data/mnist")
    }

    /// Run the CLI; returns the exit code and stdout.
    fn muse(&self, args: &[&str]) -> Result<(i32, String), String> {
        let out = Command::new(&self.bin)
            .args(args)
            .current_dir(&self.work)
            .output()
            .map_err(|e| format!("cannot start muse: {e}"))?;
        Ok((
            out.status.code().unwrap_or(-1),
            String::from_utf8_lossy(&out.stdout).into_owned()
                + &String::from_utf8_lossy(&out.stderr),
        ))
    }

    fn muse_ok(&self, args: &[&str]) -> Result<String, String> {
        let (code, text) = self.muse(args)?;
        if code != 0 {
            return Err(format!(
                "`muse {}` exited {code}: {}",
                args.join(" "),
                text.trim()
            ));
        }
        Ok(text)
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.work.join(name)
    }
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap_or_default(),
                );
            }
        }
    }
    out
}

fn csv_column(path: &Path, column: &str) -> Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let j = header
        .iter()
        .position(|h| *h == column)
        .ok_or_else(|| format!("{} has no column {column}", path.display()))?;
    Ok(lines
        .map(|l| l.split(',').nth(j).unwrap_or("").to_string())
        .collect())
}

// 1 ---------------------------------------------------------------------

fn gradient_correctness(ctx: &Ctx) -> Check {
    let t = Instant::now();
    let (code, _) = ctx.muse(&["gradcheck", "--out", "c1"])?;
    let elapsed = t.elapsed();
    let report = ctx.dir("c1/gradcheck.csv");
    let checks = csv_column(&report, "check")?;
    let worst: f64 = csv_column(&report, "worst_rel_err")?
        .iter()
        .map(|v| v.parse::<f64>().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let instances = csv_column(&report, "instances")?
        .iter()
        .map(|v| v.parse::<usize>().unwrap_or(0))
        .min()
        .unwrap_or(0);
    let losses = [
        "loss/muse/bottom",
        "loss/muse/top",
        "loss/muse/alma",
        "loss/muse/total",
        "loss/ddpg/critic",
    ];
    let covered = losses.iter().all(|l| checks.iter().any(|c| c == l));
    let pass = code == 0
        && worst <= 1e-4
        && instances >= 100
        && covered
        && elapsed < Duration::from_secs(120);
    Ok((
        pass,
        format!(
            "{} checks, min {instances} instances, worst rel err {worst:.1e}, {:.0}s",
            checks.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

// 2 ---------------------------------------------------------------------

/// Mean and variance of a normalized product of 1-D Gaussians by Simpson
/// integration on a grid.
fn grid_product_moments(experts: &[(f64, f64)]) -> (f64, f64) {
    let (m0, _) = experts[0];
    let half = 14.0 * experts.iter().map(|e| e.1.sqrt()).fold(0.0, f64::max);
    let (lo, hi) = (m0 - half, m0 + half);
    let n = 400_000;
    let h = (hi - lo) / n as f64;
    let logp = |x: f64| -> f64 {
        experts
            .iter()
            .map(|(m, v)| -0.5 * (x - m).powi(2) / v)
            .sum()
    };
    let shift = (0..=n)
        .map(|i| logp(lo + i as f64 * h))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = w * (logp(x) - shift).exp();
        z += p;
        s1 += p * x;
        s2 += p * x * x;
    }
    let mean = s1 / z;
    (mean, s2 / z - mean * mean)
}

fn gaussian_oracles(_: &Ctx) -> Check {
    let t = Instant::now();
    let mut rng = SplitRng::new(31337);
    let mut poe_worst: f64 = 0.0;
    for _ in 0..100 {
        let k = 1 + rng.below(4);
        let experts: Vec<(f64, f64)> = (0..k)
            .map(|_| {
                (
                    rng.uniform_range(-3.0, 3.0),
                    rng.uniform_range(-1.5, 1.5).exp(),
                )
            })
            .collect();
        let g: Vec<DiagGaussian> = experts
            .iter()
            .map(|&(m, v)| DiagGaussian::from_variance(vec![m], &[v]).unwrap())
            .collect();
        let p = poe_combine(&g, false).map_err(|e| e.to_string())?;
        let (mean, var) = grid_product_moments(&experts);
        poe_worst = poe_worst
            .max((p.mean[0] - mean).abs())
            .max((p.var()[0] - var).abs());
    }

    let mut kl_worst_z: f64 = 0.0;
    for case in 0..20u64 {
        let d = 1 + rng.below(3);
        let mut mk = || {
            DiagGaussian::new(
                (0..d).map(|_| rng.uniform_range(-1.5, 1.5)).collect(),
                (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            )
            .unwrap()
        };
        let q = mk();
        let p = if case % 4 == 0 {
            DiagGaussian::standard(d)
        } else {
            mk()
        };
        let exact = if case % 4 == 0 {
            q.kl_to_standard()
        } else {
            q.kl_between(&p).map_err(|e| e.to_string())?
        };
        let mut mc = SplitRng::derive(99, case);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = q.sample(&mut mc);
            let v = q.log_pdf(&x).unwrap() - p.log_pdf(&x).unwrap();
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        kl_worst_z = kl_worst_z.max((mean - exact).abs() / se.max(1e-300));
    }
    let elapsed = t.elapsed();
    Ok((
        poe_worst <= 1e-8 && kl_worst_z <= 3.0 && elapsed < Duration::from_secs(60),
        format!(
            "PoE worst moment error {poe_worst:.1e} over 100 cases, KL worst |z| {kl_worst_z:.2} over 20 cases, {:.0}s",
            elapsed.as_secs_f64()
        ),
    ))
}

// 3 ---------------------------------------------------------------------

fn iw_calibration(_: &Ctx) -> Check {
    let t = Instant::now();
    let toy = LinearGaussianToy {
        a: 1.3,
        b: -0.2,
        s: 0.5,
        proposal_shift: 0.3,
        proposal_log_widen: 0.4,
    };
    let mut worst: f64 = 0.0;
    for (i, x) in [-2.5, -1.0, 0.0, 0.7, 1.9].into_iter().enumerate() {
        let est = iw_log_evidence(&toy, &[x], 5000, &mut SplitRng::new(100 + i as u64))
            .map_err(|e| e.to_string())?;
        worst = worst.max((est - toy.log_evidence(x)).abs());
    }
    let elapsed = t.elapsed();
    Ok((
        worst <= 0.05 && elapsed < Duration::from_secs(60),
        format!(
            "worst |iw - log evidence| {worst:.4} nats at N=5000, {:.1}s",
            elapsed.as_secs_f64()
        ),
    ))
}

// 4 ---------------------------------------------------------------------

fn stop_gradient(_: &Ctx) -> Check {
    let data =
        make_synthetic_bars(16, BARS_IMAGE_SIZE, BARS_NOISE_SD, 4).map_err(|e| e.to_string())?;
    let mut nonzero_elsewhere = 0usize;
    let mut leaked = Vec::new();
    let mut checked = 0usize;
    for v in [Variant::Muse, Variant::MuseA] {
        for seed in 0..5 {
            let model = MuseModel::new(bars_spec(v).unwrap(), seed).map_err(|e| e.to_string())?;
            let lg = build_loss(&model, &data.modalities, seed).map_err(|e| e.to_string())?;
            let mut g = lg.graph;
            let (top, alma) = (lg.top.ok_or("no top loss")?, lg.alma.ok_or("no alma term")?);
            let sum = g.add(top, alma).map_err(|e| e.to_string())?;
            let grads = g.backward(sum).map_err(|e| e.to_string())?;
            for (name, gr) in grads.params() {
                if name.starts_with("bottom/") {
                    checked += gr.data().len();
                    if gr.data().iter().any(|x| *x != 0.0) {
                        leaked.push(name.to_string());
                    }
                } else if gr.data().iter().any(|x| *x != 0.0) {
                    nonzero_elsewhere += 1;
                }
            }
        }
    }
    Ok((
        leaked.is_empty() && checked > 0 && nonzero_elsewhere > 0,
        if leaked.is_empty() {
            format!("{checked} bottom gradient entries exactly zero across muse and muse_a")
        } else {
            format!("nonzero bottom gradients in {}", leaked.join(", "))
        },
    ))
}

// 5 ---------------------------------------------------------------------

fn environment_physics(ctx: &Ctx) -> Check {
    let t = Instant::now();
    let mut problems = Vec::new();
    let c = 20.0;
    let cases = [
        ("stationary", (2.0, 1.0), (0.0, 0.0), 440.0),
        ("approach", (1.0, 0.0), (-4.0, 0.0), 440.0 * c / (c - 4.0)),
        ("recession", (1.0, 0.0), (4.0, 0.0), 440.0 * c / (c + 4.0)),
    ];
    for (name, e, v, want) in cases {
        let f =
            doppler_frequency(440.0, e, v, (0.0, 0.0), (0.0, 0.0), c).map_err(|e| e.to_string())?;
        if (f - want).abs() > 1e-12 {
            problems.push(format!("doppler {name}: {f} vs {want}"));
        }
    }
    for (k, e, want) in [
        (1.0, (3.0, 4.0), 1.0 / 25.0),
        (2.0, (0.0, 0.5), 8.0),
        (0.5, (-1.0, 1.0), 0.25),
    ] {
        let a = inverse_square_amplitude(k, e, (0.0, 0.0)).map_err(|e| e.to_string())?;
        if a != want {
            problems.push(format!("inverse square {e:?}: {a} vs {want}"));
        }
    }

    let cfg = HyperhotConfig::default();
    let fresh = || {
        let mut s = initial_state(&cfg, &mut SplitRng::new(0));
        s.next_fire = usize::MAX;
        s
    };
    let mut win = fresh();
    for e in win.enemies.iter_mut().skip(1) {
        e.alive = false;
    }
    let target = win.enemies[0];
    let off = cfg.march_amplitude * (2.0 * PI / cfg.march_period as f64).sin();
    win.bullets.push(Bullet {
        pos: (target.base_x + off, target.pos.1 - cfg.bullet_speed),
        vel: (0.0, cfg.bullet_speed),
        owner: Owner::Agent,
    });
    let mut hit = fresh();
    hit.bullets.push(Bullet {
        pos: (hit.agent_x, cfg.agent_y + cfg.enemy_bullet_speed),
        vel: (0.0, -cfg.enemy_bullet_speed),
        owner: Owner::Enemy,
    });
    let mut calm = fresh();
    for (name, s, want) in [
        ("win", &mut win, (10.0, true)),
        ("hit", &mut hit, (-1.0, true)),
        ("ordinary", &mut calm, (0.0, false)),
    ] {
        let got = hyperhot_step(&cfg, s, NOOP, &mut SplitRng::new(1)).map_err(|e| e.to_string())?;
        if got != want {
            problems.push(format!("hyperhot {name}: {got:?} vs {want:?}"));
        }
    }

    for (env, policy) in [
        ("pendulum", "random"),
        ("hyperhot", "random"),
        ("hyperhot", "scripted"),
    ] {
        let a = format!("c5_{env}_{policy}_a");
        let b = format!("c5_{env}_{policy}_b");
        for d in [&a, &b] {
            ctx.muse_ok(&[
                "env",
                "--seed",
                "3",
                "--set",
                &format!("env.name={env}"),
                "--set",
                &format!("env.policy={policy}"),
                "--set",
                "env.steps=150",
                "--out",
                d,
            ])?;
        }
        if files(&ctx.dir(&a)) != files(&ctx.dir(&b)) {
            problems.push(format!("{env} {policy} rollout differs between runs"));
        }
    }
    let elapsed = t.elapsed();
    if elapsed >= Duration::from_secs(60) {
        problems.push(format!("took {:.0}s", elapsed.as_secs_f64()));
    }
    Ok((
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "doppler, inverse-square, reward cases and rollout determinism hold, {:.1}s",
                elapsed.as_secs_f64()
            )
        } else {
            problems.join("; ")
        },
    ))
}

// 6 ---------------------------------------------------------------------

fn bars_test_set(seed: u64) -> MultimodalDataset {
    make_synthetic_bars(500, BARS_IMAGE_SIZE, BARS_NOISE_SD, 10_000 + seed).unwrap()
}

fn train_bars(variant: Variant, seed: u64) -> Result<(MuseModel, Duration), String> {
    let t = Instant::now();
    let data = make_synthetic_bars(BARS_TRAIN, BARS_IMAGE_SIZE, BARS_NOISE_SD, seed)
        .map_err(|e| e.to_string())?;
    let mut model = MuseModel::new(bars_spec(variant).unwrap(), seed).map_err(|e| e.to_string())?;
    fit(&mut model, &data, &bars_train_config(seed)).map_err(|e| e.to_string())?;
    Ok((model, t.elapsed()))
}

fn bars_generation(_: &Ctx) -> Check {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut slowest = Duration::ZERO;
    for seed in 0..3u64 {
        let test = bars_test_set(seed).take(200).unwrap();
        let (muse, tm) = train_bars(Variant::Muse, seed)?;
        let (muse_a, ta) = train_bars(Variant::MuseA, seed)?;
        slowest = slowest.max(tm).max(ta);
        if seed == 0 {
            let acc = orientation_accuracy(&muse, &[1], 0, &bars_test_set(0), PI / 16.0)
                .map_err(|e| e.to_string())?;
            pass &= acc >= 0.95;
            lines.push(format!("angle->image accuracy {acc:.3}"));
        }
        let a = iw_conditional(&muse, 0, &[1], &test, 1000, seed).map_err(|e| e.to_string())?;
        let b = iw_conditional(&muse_a, 0, &[1], &test, 1000, seed).map_err(|e| e.to_string())?;
        pass &= a.value > b.value;
        lines.push(format!(
            "seed {seed} log p(image|angle) muse {:.2} vs muse_a {:.2}",
            a.value, b.value
        ));
    }
    pass &= slowest < Duration::from_secs(300);
    lines.push(format!("slowest training {:.0}s", slowest.as_secs_f64()));
    Ok((pass, lines.join(", ")))
}

// 7 ---------------------------------------------------------------------

fn mnist(ctx: &Ctx) -> Check {
    let dir = ctx.mnist_dir();
    let dir_s = dir.to_string_lossy().into_owned();
    let t = Instant::now();
    ctx.muse_ok(&[
        "train-model",
        "--seed",
        "0",
        "--set",
        "data.dataset=mnist",
        "--set",
        &format!("data.dir={dir_s}"),
        "--out",
        "c7_model",
    ])?;
    let train_time = t.elapsed();
    let ckpt = ctx.dir("c7_model/model.bin");
    let (model, _) = checkpoint::load(&ckpt).map_err(|e| e.to_string())?;
    let (ti, tl) = split_paths(&dir, Split::Test);
    let test = load_mnist_pair(&ti, &tl, None, Split::Test).map_err(|e| e.to_string())?;
    let coherence = coherence_accuracy(&model, &[0], 1, &test).map_err(|e| e.to_string())?;

    let (ri, rl) = split_paths(&dir, Split::Train);
    let train = load_mnist_pair(&ri, &rl, Some(9000), Split::Train).map_err(|e| e.to_string())?;
    let mut clf = Classifier::new(784, &[256], 10, 7).map_err(|e| e.to_string())?;
    clf.fit(&train.modalities[0], &train.modalities[1], 8, 64, 1e-3, 7)
        .map_err(|e| e.to_string())?;
    let labels = test.modalities[1].argmax_rows();
    let clf_acc = clf
        .accuracy(&test.modalities[0], &labels)
        .map_err(|e| e.to_string())?;
    let generated: Tensor = generate_all(&model, &[1], 0, &test).map_err(|e| e.to_string())?;
    let gen_acc = clf
        .accuracy(&generated, &labels)
        .map_err(|e| e.to_string())?;

    let mut rows = Vec::new();
    for out in ["c7_lik_a", "c7_lik_b"] {
        ctx.muse_ok(&[
            "eval-likelihood",
            "--seed",
            "0",
            "--set",
            &format!("eval.checkpoint={}", ckpt.display()),
            "--set",
            "eval.samples=1000",
            "--set",
            "eval.count=10",
            "--set",
            "data.dataset=mnist",
            "--set",
            &format!("data.dir={dir_s}"),
            "--out",
            out,
        ])?;
        rows.push(fs::read(ctx.dir(out).join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    let values = csv_column(&ctx.dir("c7_lik_a/metrics.csv"), "value")?;
    let finite = values.len() == 5
        && values
            .iter()
            .all(|v| v.parse::<f64>().is_ok_and(f64::is_finite));
    let stable = rows[0] == rows[1];
    let pass = coherence >= 0.90
        && gen_acc >= 0.70
        && finite
        && stable
        && train_time < Duration::from_secs(1800);
    Ok((
        pass,
        format!(
            "image->label {coherence:.3}, label->image classified {gen_acc:.3} (classifier test acc {clf_acc:.3}), \
             5 likelihood rows finite={finite} seed-stable={stable}, training {:.0}s",
            train_time.as_secs_f64()
        ),
    ))
}

// 8 ---------------------------------------------------------------------

struct ZeroShot {
    joint: f64,
    image: f64,
    sound: f64,
    random: Option<f64>,
}

fn mean_of(path: &Path, mask: &str) -> Result<f64, String> {
    let masks = csv_column(path, "modality_mask")?;
    let means = csv_column(path, "mean")?;
    masks
        .iter()
        .zip(&means)
        .find(|(m, _)| *m == mask)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| format!("no {mask} row in {}", path.display()))
}

fn random_mean(path: &Path) -> Result<f64, String> {
    let v: Vec<f64> = csv_column(path, "reward")?
        .iter()
        .filter_map(|v| v.parse().ok())
        .collect();
    Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
}

/// Train a representation and an agent on it through the CLI, then
/// evaluate under every mask.
fn zero_shot_run(
    ctx: &Ctx,
    env: &str,
    variant: &str,
    adapter: &str,
    seed: u64,
    random: bool,
) -> Result<ZeroShot, String> {
    let tag = format!("{env}_{adapter}_{seed}");
    let s = seed.to_string();
    ctx.muse_ok(&[
        "train-model",
        "--seed",
        &s,
        "--set",
        &format!("data.dataset={env}"),
        "--set",
        &format!("model.variant={variant}"),
        "--out",
        &format!("c8_{tag}_rep"),
    ])?;
    ctx.muse_ok(&[
        "train-agent",
        "--seed",
        &s,
        "--set",
        &format!("env.name={env}"),
        "--set",
        &format!("agent.adapter={adapter}"),
        "--set",
        &format!("adapter.checkpoint=c8_{tag}_rep/model.bin"),
        "--out",
        &format!("c8_{tag}_agent"),
    ])?;
    let mut args = vec![
        "eval-agent".to_string(),
        "--seed".into(),
        s.clone(),
        "--set".into(),
        format!("eval.agent=c8_{tag}_agent"),
        "--set".into(),
        "eval.episodes=20".into(),
        "--out".into(),
        format!("c8_{tag}_eval"),
    ];
    if random {
        args.extend(["--set".into(), "eval.random_baseline=true".into()]);
    }
    ctx.muse_ok(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    let eval = ctx.dir(&format!("c8_{tag}_eval"));
    Ok(ZeroShot {
        joint: mean_of(&eval.join("summary.csv"), "joint")?,
        image: mean_of(&eval.join("summary.csv"), "image")?,
        sound: mean_of(&eval.join("summary.csv"), "sound")?,
        random: if random {
            Some(random_mean(&eval.join("random.csv"))?)
        } else {
            None
        },
    })
}

fn zero_shot_pendulum(ctx: &Ctx) -> Check {
    let t = Instant::now();
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let muse = zero_shot_run(ctx, "pendulum", "muse", "muse_latent", seed, true)?;
        let vae = zero_shot_run(ctx, "pendulum", "fusion_vae", "vae_latent", seed, false)?;
        let random = muse.random.unwrap_or(f64::NAN);
        // the joint agent must at least halve the random policy's per-step cost
        let wide = muse.joint > 0.5 * random;
        pass &= muse.sound > vae.sound && wide;
        lines.push(format!(
            "seed {seed}: sound-only muse {:.3} vs vae {:.3}; joint muse {:.3} vs random {random:.3} (image-only muse {:.3}, vae {:.3})",
            muse.sound, vae.sound, muse.joint, muse.image, vae.image
        ));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(7200);
    lines.push(format!("{:.0} min", elapsed.as_secs_f64() / 60.0));
    Ok((pass, lines.join("; ")))
}

fn zero_shot_hyperhot(ctx: &Ctx) -> Check {
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let muse = zero_shot_run(ctx, "hyperhot", "muse", "muse_latent", seed, false)?;
        let vae = zero_shot_run(ctx, "hyperhot", "fusion_vae", "vae_latent", seed, false)?;
        pass &= muse.image > vae.image;
        lines.push(format!(
            "seed {seed}: image-only muse {:.3} vs vae {:.3}",
            muse.image, vae.image
        ));
    }
    Ok((pass, lines.join("; ")))
}

// 9 ---------------------------------------------------------------------

fn reproducibility(ctx: &Ctx) -> Check {
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "c9_bars",
            vec![
                "train-model",
                "--seed",
                "4",
                "--set",
                "train.epochs=2",
                "--set",
                "data.train_size=300",
            ],
        ),
        (
            "c9_lik",
            vec![
                "eval-likelihood",
                "--set",
                "eval.checkpoint=c9_bars/model.bin",
                "--set",
                "eval.samples=40",
                "--set",
                "eval.count=8",
            ],
        ),
        (
            "c9_gen",
            vec![
                "generate",
                "--seed",
                "2",
                "--set",
                "generate.checkpoint=c9_bars/model.bin",
                "--set",
                "generate.sources=angle",
                "--set",
                "generate.target=image",
            ],
        ),
        (
            "c9_env",
            vec![
                "env",
                "--seed",
                "1",
                "--set",
                "env.name=hyperhot",
                "--set",
                "env.steps=60",
                "--set",
                "env.waveforms=true",
            ],
        ),
        (
            "c9_rep",
            vec![
                "train-model",
                "--seed",
                "1",
                "--set",
                "data.dataset=pendulum",
                "--set",
                "data.frames=400",
                "--set",
                "train.epochs=1",
            ],
        ),
        (
            "c9_agent",
            vec![
                "train-agent",
                "--seed",
                "1",
                "--set",
                "agent.adapter=muse_latent",
                "--set",
                "adapter.checkpoint=c9_rep/model.bin",
                "--set",
                "agent.steps=700",
                "--set",
                "agent.warmup=200",
            ],
        ),
        (
            "c9_eval",
            vec![
                "eval-agent",
                "--set",
                "eval.agent=c9_agent",
                "--set",
                "eval.episodes=2",
                "--set",
                "eval.seeds=0, 5",
            ],
        ),
        (
            "c9_grad",
            vec![
                "gradcheck",
                "--set",
                "gradcheck.op_instances=2",
                "--set",
                "gradcheck.loss_instances=2",
            ],
        ),
    ]
    .into_iter()
    .map(|(d, a)| (d, a.into_iter().map(String::from).collect()))
    .collect();

    let mut compared = 0;
    let mut diffs = Vec::new();
    for (dir, args) in &runs {
        let mut first: Vec<&str> = args.iter().map(String::as_str).collect();
        first.extend(["--out", dir]);
        ctx.muse_ok(&first)?;
        let manifest = format!("{dir}/manifest.cfg");
        let again = format!("{dir}_again");
        ctx.muse_ok(&[args[0].as_str(), "--config", &manifest, "--out", &again])?;
        let (a, b) = (files(&ctx.dir(dir)), files(&ctx.dir(&again)));
        if a.keys().ne(b.keys()) {
            diffs.push(format!("{dir}: file sets differ"));
        }
        for (name, bytes) in &a {
            compared += 1;
            if b.get(name) != Some(bytes) {
                diffs.push(format!("{dir}/{}", name.display()));
            }
        }
    }
    Ok((
        diffs.is_empty(),
        if diffs.is_empty() {
            format!(
                "{} commands rerun from their manifests, {compared} files byte-identical",
                runs.len()
            )
        } else {
            format!("differences: {}", diffs.join(", "))
        },
    ))
}

// -----------------------------------------------------------------------

type Criterion = (u32, &'static str, fn(&Ctx) -> Check);

fn main() {
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let root = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root");
    let work = std::env::temp_dir().join(format!("muse-acceptance-{}", std::process::id()));
    fs::create_dir_all(&work).expect("work directory");
    let ctx = Ctx {
        bin: PathBuf::from(env!("CARGO_BIN_EXE_muse")),
        root,
        work: work.clone(),
    };
    let criteria: [Criterion; 9] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "gaussian algebra oracles", gaussian_oracles),
        (
            3,
            "importance-weighted estimator calibration",
            iw_calibration,
        ),
        (4, "stop-gradient contract", stop_gradient),
        (5, "environment physics", environment_physics),
        (9, "reproducibility from manifests", reproducibility),
        (6, "bars cross-modal generation", bars_generation),
        (7, "MNIST coherence and likelihood CLI", mnist),
        (8, "pendulum zero-shot robustness", zero_shot_pendulum),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(|| check(&ctx)));
        let (pass, detail) = match verdict {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {id} ({name}): {} [{:.0}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if selected.is_empty() || selected.contains(&8) {
        if std::env::var("MUSE_ACCEPTANCE_HYPERHOT").is_ok_and(|v| v == "1") {
            let (pass, detail) =
                zero_shot_hyperhot(&ctx).unwrap_or_else(|e| (false, format!("error: {e}")));
            failed += usize::from(!pass);
            println!(
                "criterion 8 (hyperhot zero-shot, extended): {} {detail}",
                if pass { "PASS" } else { "FAIL" }
            );
        } else {
            println!("criterion 8 (hyperhot zero-shot, extended): skipped (set MUSE_ACCEPTANCE_HYPERHOT=1)");
        }
    }
    let _ = fs::remove_dir_all(&work);
    if failed > 0 {
        println!("{failed} criterion check(s) failed");
        std::process::exit(1);
    }
}
