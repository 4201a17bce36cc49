//! Central finite-difference verification of [`Graph::backward`].

use std::fmt;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::{fnv1a, SplitRng};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub h: f64,
    pub tolerance: f64,
    /// Coordinates per leaf; larger leaves are subsampled.
    pub max_coords: usize,
    pub seed: u64,
    /// Also check named inputs, not only parameters.
    pub include_inputs: bool,
    /// Hold `stop_gradient` outputs at their current values while perturbing.
    pub freeze_stop_gradients: bool,
    /// Op kind whose backward rule `check_ops` corrupts by the given factor.
    #[doc(hidden)]
    pub fault: Option<(String, f64)>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tolerance: 1e-4,
            max_coords: 16,
            seed: 0,
            include_inputs: true,
            freeze_stop_gradients: true,
            fault: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LeafReport {
    pub leaf: String,
    pub coords_checked: usize,
    pub worst_rel_err: f64,
    pub worst_coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub leaves: Vec<LeafReport>,
}

impl GradcheckReport {
    pub fn worst_rel_err(&self) -> f64 {
        self.leaves
            .iter()
            .map(|l| l.worst_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst_rel_err() <= self.tolerance
    }

    /// Leaves above tolerance, worst first.
    pub fn offenders(&self) -> Vec<&LeafReport> {
        let mut bad: Vec<&LeafReport> = self
            .leaves
            .iter()
            .filter(|l| l.worst_rel_err > self.tolerance)
            .collect();
        bad.sort_by(|a, b| b.worst_rel_err.total_cmp(&a.worst_rel_err));
        bad
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.leaves {
            writeln!(
                f,
                "{:<40} coords={:<4} worst_rel_err={:.3e} (coord {}, analytic {:.6e}, fd {:.6e})",
                l.leaf, l.coords_checked, l.worst_rel_err, l.worst_coord, l.analytic, l.numeric
            )?;
        }
        write!(
            f,
            "{}: worst {:.3e} vs tolerance {:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.worst_rel_err(),
            self.tolerance
        )
    }
}

/// `|a - fd| / max(1, |a|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Compare analytic gradients of the scalar `output` against central
/// differences. The graph's leaf values are restored afterwards.
pub fn gradcheck(
    graph: &mut Graph,
    output: NodeId,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let grads = graph.backward(output)?;
    let mut rng = SplitRng::new(opts.seed);
    let mut leaves = Vec::new();
    let targets: Vec<(NodeId, String, Vec<f64>)> = grads
        .leaves()
        .filter(|(_, label, _)| opts.include_inputs || !label.starts_with("input:"))
        .map(|(id, label, g)| (id, label, g.data().to_vec()))
        .collect();

    for (id, label, analytic) in targets {
        let original = graph.value(id).clone();
        let n = original.len();
        let coords: Vec<usize> = if n <= opts.max_coords {
            (0..n).collect()
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut all);
            all.truncate(opts.max_coords);
            all
        };
        let mut report = LeafReport {
            leaf: label,
            coords_checked: coords.len(),
            worst_rel_err: 0.0,
            worst_coord: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &c in &coords {
            let eval_at = |delta: f64, graph: &mut Graph| -> Result<f64> {
                let mut t = original.clone();
                t.data_mut()[c] += delta;
                graph.set_leaf(id, t)?;
                if opts.freeze_stop_gradients {
                    graph.recompute_frozen()?;
                } else {
                    graph.recompute()?;
                }
                Ok(graph.value(output).item())
            };
            let plus = eval_at(opts.h, graph)?;
            let minus = eval_at(-opts.h, graph)?;
            let numeric = (plus - minus) / (2.0 * opts.h);
            let err = relative_error(analytic[c], numeric);
            if err >= report.worst_rel_err {
                report.worst_rel_err = err;
                report.worst_coord = c;
                report.analytic = analytic[c];
                report.numeric = numeric;
            }
        }
        graph.set_leaf(id, original)?;
        graph.recompute()?;
        leaves.push(report);
    }
    Ok(GradcheckReport {
        tolerance: opts.tolerance,
        leaves,
    })
}

/// Op kinds covered by [`check_ops`]. `stop_gradient` is excluded because
/// finite differences see through it; its contract is an exact zero.
pub const OP_KINDS: &[&str] = &[
    "matmul",
    "add",
    "subtract",
    "multiply",
    "negate",
    "scale",
    "add_scalar",
    "exp",
    "log",
    "square",
    "sigmoid",
    "relu",
    "swish",
    "tanh",
    "softplus",
    "clamp",
    "sum",
    "mean",
    "log_softmax",
    "logsumexp",
    "concat",
    "slice",
    "add_bias",
];

#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub worst_rel_err: f64,
}

fn random_input(
    g: &mut Graph,
    name: &str,
    shape: Vec<usize>,
    rng: &mut SplitRng,
    f: impl Fn(f64) -> f64,
) -> NodeId {
    let n = shape.iter().product();
    let data = (0..n).map(|_| f(rng.uniform_range(-2.0, 2.0))).collect();
    g.input(name, Tensor::new(shape, data).expect("shape matches data"))
}

/// Away from `at` by at least `gap`, so kinks are not straddled by the step.
fn avoid(x: f64, at: f64, gap: f64) -> f64 {
    if (x - at).abs() < gap {
        at + gap.copysign(x - at + 1e-300)
    } else {
        x
    }
}

/// Build one random instance of `op`, reduced to a scalar through a random
/// weighted sum so every output coordinate matters.
pub fn op_instance(g: &mut Graph, op: &str, rng: &mut SplitRng) -> Result<NodeId> {
    let b = 1 + rng.below(3);
    let d = 1 + rng.below(4);
    let id = |x: f64| x;
    let out = match op {
        "matmul" => {
            let k = 1 + rng.below(4);
            let x = random_input(g, "a", vec![b, k], rng, id);
            let y = random_input(g, "b", vec![k, d], rng, id);
            g.matmul(x, y)?
        }
        "add" | "subtract" | "multiply" => {
            let x = random_input(g, "a", vec![b, d], rng, id);
            let y = random_input(g, "b", vec![b, d], rng, id);
            match op {
                "add" => g.add(x, y)?,
                "subtract" => g.sub(x, y)?,
                _ => g.mul(x, y)?,
            }
        }
        "negate" => {
            let x = random_input(g, "a", vec![b, d], rng, id);
            g.neg(x)?
        }
        "scale" => {
            let c = rng.uniform_range(-3.0, 3.0);
            let x = random_input(g, "a", vec![b, d], rng, id);
            g.scale(x, c)?
        }
        "add_scalar" => {
            let c = rng.uniform_range(-3.0, 3.0);
            let x = random_input(g, "a", vec![b, d], rng, id);
            g.add_scalar(x, c)?
        }
        "exp" => {
            let x = random_input(g, "a", vec![b, d], rng, id);
            g.exp(x)?
        }
        "log" => {
            let x = random_input(g, "a", vec![b, d], rng, |v| 0.3 + v.abs());
            g.log(x)?
        }
        "square" => {
            let x = random_input(g, "a", vec![b, d], rng, id);
            g.square(x)?
        }
        "sigmoid" => {
            let x = random_input(g, "a", vec![b, d], rng, |v| 2.0 * v);
            g.sigmoid(x)?
        }
        "relu" => {
            let x = random_input(g, "a", vec![b, d], rng, |v| avoid(v, 0.0, 0.01));
            g.relu(x)?
        }
        "swish" => {
            let x = random_input(g, "a", vec![b, d], rng, |v| 2.0 * v);
            g.swish(x)?
        }
        "tanh" => {
            let x = random_input(g, "a", vec![b, d], rng, id);
            g.tanh(x)?
        }
        "softplus" => {
            let x = random_input(g, "a", vec![b, d], rng, |v| 3.0 * v);
            g.softplus(x)?
        }
        "clamp" => {
            let x = random_input(g, "a", vec![b, d], rng, |v| {
                avoid(avoid(v, -0.7, 0.01), 0.9, 0.01)
            });
            g.clamp(x, -0.7, 0.9)?
        }
        "sum" | "mean" => {
            let axis = match rng.below(3) {
                0 => None,
                a => Some(a - 1),
            };
            let x = random_input(g, "a", vec![b, d], rng, id);
            if op == "sum" {
                g.sum(x, axis)?
            } else {
                g.mean(x, axis)?
            }
        }
        "log_softmax" => {
            let x = random_input(g, "a", vec![b, d + 1], rng, |v| 3.0 * v);
            g.log_softmax(x)?
        }
        "logsumexp" => {
            let x = random_input(g, "a", vec![b, d + 1], rng, |v| 3.0 * v);
            g.logsumexp(x)?
        }
        "concat" => {
            let parts = 2 + rng.below(2);
            let ids: Vec<NodeId> = (0..parts)
                .map(|i| {
                    let w = 1 + rng.below(3);
                    random_input(g, &format!("p{i}"), vec![b, w], rng, id)
                })
                .collect();
            g.concat(&ids)?
        }
        "slice" => {
            let w = d + 2;
            let start = rng.below(w);
            let len = 1 + rng.below(w - start);
            let x = random_input(g, "a", vec![b, w], rng, id);
            g.slice(x, start, len)?
        }
        "add_bias" => {
            let x = random_input(g, "a", vec![b, d], rng, id);
            let bias = random_input(g, "bias", vec![d], rng, id);
            g.add_bias(x, bias)?
        }
        other => {
            return Err(Error::contract(format!(
                "no gradient check instance for op `{other}`"
            )))
        }
    };
    let shape = g.value(out).shape().to_vec();
    let n = shape.iter().product();
    let w = Tensor::new(
        shape,
        (0..n).map(|_| rng.uniform_range(-1.5, 1.5)).collect(),
    )?;
    let wn = g.constant(w);
    let weighted = g.mul(out, wn)?;
    g.sum(weighted, None)
}

/// Check every op in [`OP_KINDS`] on `instances` random instances each.
pub fn check_ops(instances: usize, seed: u64, opts: &GradcheckOptions) -> Result<Vec<OpCheck>> {
    let mut out = Vec::with_capacity(OP_KINDS.len());
    for (k, &op) in OP_KINDS.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..instances {
            let mut rng = SplitRng::derive(seed ^ fnv1a(op.as_bytes()), i as u64);
            let mut g = Graph::new();
            let y = op_instance(&mut g, op, &mut rng)?;
            if let Some((kind, factor)) = &opts.fault {
                g.inject_gradient_fault(kind, *factor);
            }
            let o = GradcheckOptions {
                seed: seed.wrapping_add((k * instances + i) as u64),
                ..opts.clone()
            };
            worst = worst.max(gradcheck(&mut g, y, &o)?.worst_rel_err());
        }
        out.push(OpCheck {
            op,
            instances,
            worst_rel_err: worst,
        });
    }
    Ok(out)
}
