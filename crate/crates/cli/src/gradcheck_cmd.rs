//! gradcheck: central finite differences over every op and every loss.

use std::fmt::Write as _;
use std::path::Path;

use muse_core::config::Config;
use muse_core::error::{Error, Result};
use muse_core::gradcheck::{check_ops, gradcheck as check_graph, GradcheckOptions, OP_KINDS};
use muse_core::model::{build_loss, Likelihood, ModalitySpec, ModelSpec, MuseModel, Variant};
use muse_core::nn::Activation;
use muse_core::rng::SplitRng;
use muse_core::tensor::Tensor;
use muse_rl::agent::{AgentConfig, Algorithm};
use muse_rl::ddpg::{actor_loss_graph, critic_loss_graph, new_actor, Critic};
use muse_rl::dqn::{new_q_policy, td_loss_graph};

use crate::run::{write, Job, Outcome};

const FAULT_FACTOR: f64 = 1.5;

struct Suite {
    op_instances: usize,
    loss_instances: usize,
    opts: GradcheckOptions,
    seed: u64,
}

pub fn gradcheck(cfg: &mut Config, seed: u64, fault: Option<String>) -> Result<Box<dyn Job>> {
    let s = "gradcheck";
    let op_instances: usize = cfg.get_or(s, "op_instances", 100)?;
    let loss_instances: usize = cfg.get_or(s, "loss_instances", 100)?;
    let tolerance: f64 = cfg.get_or(s, "tolerance", 1e-4)?;
    if !(tolerance > 0.0) {
        return Err(Error::config("gradcheck.tolerance", "must be positive"));
    }
    if let Some(op) = &fault {
        if !OP_KINDS.contains(&op.as_str()) {
            return Err(Error::config(
                "--inject-fault",
                format!("unknown op `{op}`"),
            ));
        }
    }
    Ok(Box::new(Suite {
        op_instances,
        loss_instances,
        opts: GradcheckOptions {
            tolerance,
            seed,
            fault: fault.map(|op| (op, FAULT_FACTOR)),
            ..Default::default()
        },
        seed,
    }))
}

/// Three small modalities covering every likelihood, with smooth
/// activations so finite differences never straddle a kink.
fn tiny_spec(variant: Variant) -> Result<ModelSpec> {
    let mods = vec![
        ModalitySpec::new("img", 5, Likelihood::Bernoulli, 3)
            .with_hidden(vec![6], Activation::Swish),
        ModalitySpec::new("vec", 2, Likelihood::Gaussian, 2)
            .with_weights(5.0, 1.0, 3.0)
            .with_hidden(vec![4], Activation::Tanh),
        ModalitySpec::new("cls", 3, Likelihood::Categorical, 2)
            .with_hidden(vec![4], Activation::Swish),
    ];
    let mut spec = ModelSpec::build(variant, mods, 3)?;
    spec.top_hidden = vec![5];
    spec.fusion_hidden = vec![6];
    Ok(spec)
}

fn tiny_batch(rows: usize, rng: &mut SplitRng) -> Result<Vec<Tensor>> {
    let img = (0..rows * 5).map(|_| rng.uniform()).collect();
    let vec = rng.normals(rows * 2);
    let mut cls = vec![0.0; rows * 3];
    for r in 0..rows {
        cls[r * 3 + rng.below(3)] = 1.0;
    }
    Ok(vec![
        Tensor::new(vec![rows, 5], img)?,
        Tensor::new(vec![rows, 2], vec)?,
        Tensor::new(vec![rows, 3], cls)?,
    ])
}

#[derive(Default)]
struct Row {
    instances: usize,
    worst: f64,
    failures: usize,
}

impl Row {
    fn add(&mut self, err: f64, passed: bool) {
        self.instances += 1;
        self.worst = self.worst.max(err);
        self.failures += usize::from(!passed);
    }
}

impl Job for Suite {
    fn execute(self: Box<Self>, out: &Path) -> Result<Outcome> {
        let tol = self.opts.tolerance;
        let mut rows: Vec<(String, Row)> = Vec::new();

        for c in check_ops(self.op_instances, self.seed, &self.opts)? {
            let mut r = Row::default();
            r.instances = c.instances;
            r.worst = c.worst_rel_err;
            r.failures = usize::from(c.worst_rel_err > tol);
            rows.push((format!("op/{}", c.op), r));
        }

        let loss_opts = GradcheckOptions {
            max_coords: 8,
            include_inputs: false,
            fault: None,
            ..self.opts.clone()
        };
        for v in Variant::ALL {
            let mut terms: Vec<(&str, Row)> = ["total", "bottom", "top", "alma"]
                .iter()
                .map(|t| (*t, Row::default()))
                .collect();
            for i in 0..self.loss_instances {
                let mut rng = SplitRng::derive(self.seed ^ 0x1055, (v as u64) << 32 | i as u64);
                let model = MuseModel::new(tiny_spec(v)?, rng.next_seed())?;
                let b = 1 + rng.below(3);
                let lg = build_loss(&model, &tiny_batch(b, &mut rng)?, rng.next_seed())?;
                let mut g = lg.graph;
                for (k, node) in [lg.total]
                    .into_iter()
                    .map(Some)
                    .chain([lg.bottom, lg.top, lg.alma])
                    .enumerate()
                {
                    if let Some(n) = node {
                        let rep = check_graph(&mut g, n, &loss_opts)?;
                        terms[k].1.add(rep.worst_rel_err(), rep.passed());
                    }
                }
            }
            for (t, r) in terms {
                if r.instances > 0 {
                    rows.push((format!("loss/{v}/{t}"), r));
                }
            }
        }

        let rl_opts = GradcheckOptions {
            fault: None,
            ..self.opts.clone()
        };
        let base = AgentConfig::defaults(Algorithm::Ddpg);
        let (mut critic_row, mut actor_row, mut td_row) =
            (Row::default(), Row::default(), Row::default());
        for i in 0..self.loss_instances as u64 {
            let mut rng = SplitRng::derive(self.seed ^ 0xdd96, i);
            let b = 1 + rng.below(6);
            let critic = Critic::new(5, &[8, 8], rng.next_seed())?;
            let actor = new_actor(
                5,
                2.0,
                &AgentConfig {
                    hidden: vec![8],
                    seed: rng.next_seed(),
                    ..base.clone()
                },
            )?;
            let s = Tensor::new(vec![b, 5], rng.normals(b * 5))?;
            let a: Vec<f64> = (0..b).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let (mut g, loss, _) = critic_loss_graph(&critic, &s, &a, rng.normals(b))?;
            let rep = check_graph(&mut g, loss, &rl_opts)?;
            critic_row.add(rep.worst_rel_err(), rep.passed());
            let (mut g, loss) = actor_loss_graph(&actor, &critic, s.clone())?;
            let rep = check_graph(&mut g, loss, &rl_opts)?;
            actor_row.add(rep.worst_rel_err(), rep.passed());

            let q = new_q_policy(
                5,
                3,
                &AgentConfig {
                    hidden: vec![8],
                    seed: rng.next_seed(),
                    ..AgentConfig::defaults(Algorithm::Dqn)
                },
            )?;
            let acts: Vec<usize> = (0..b).map(|_| rng.below(3)).collect();
            let (mut g, loss, _) = td_loss_graph(&q, s, &acts, rng.normals(b))?;
            let rep = check_graph(&mut g, loss, &rl_opts)?;
            td_row.add(rep.worst_rel_err(), rep.passed());
        }
        rows.push(("loss/ddpg/critic".into(), critic_row));
        rows.push(("loss/ddpg/actor".into(), actor_row));
        rows.push(("loss/dqn/td".into(), td_row));

        let mut csv = String::from("check,instances,worst_rel_err,failures,passed\n");
        let mut failed = Vec::new();
        for (name, r) in &rows {
            let ok = r.failures == 0;
            let _ = writeln!(
                csv,
                "{name},{},{:e},{},{}",
                r.instances,
                r.worst,
                r.failures,
                u8::from(ok)
            );
            println!(
                "{:<4} {name:<28} worst {:.2e} over {}",
                if ok { "ok" } else { "FAIL" },
                r.worst,
                r.instances
            );
            if !ok {
                failed.push(name.clone());
            }
        }
        write(&out.join("gradcheck.csv"), csv)?;
        Ok(if failed.is_empty() {
            Outcome::Success
        } else {
            Outcome::CheckFailed(format!("gradient mismatch in {}", failed.join(", ")))
        })
    }
}
