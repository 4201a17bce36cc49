//! Small explicit MDPs with a value-iteration oracle, exposed as one-hot
//! vector environments so the function-approximation learners can be
//! checked against exact optimal values.

use muse_core::error::{Error, Result};
use muse_core::rng::SplitRng;
use muse_core::tensor::Tensor;
use muse_envs::{Action, ActionSpace};

use crate::agent::Policy;
use crate::vecenv::{VecEnv, VecStep};

#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    /// `p[s][a][s']`.
    pub p: Vec<Vec<Vec<f64>>>,
    /// Expected reward `r[s][a]`.
    pub r: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
    /// Step cap per episode; reaching it truncates.
    pub horizon: usize,
}

impl TabularMdp {
    pub fn new(
        p: Vec<Vec<Vec<f64>>>,
        r: Vec<Vec<f64>>,
        terminal: Vec<bool>,
        horizon: usize,
    ) -> Result<Self> {
        let n = p.len();
        if n == 0 || r.len() != n || terminal.len() != n {
            return Err(Error::contract(
                "transition, reward and terminal tables disagree on the state count",
            ));
        }
        let a = p[0].len();
        for (s, row) in p.iter().enumerate() {
            if row.len() != a || r[s].len() != a {
                return Err(Error::contract(format!(
                    "state {s} has a different action count"
                )));
            }
            for dist in row {
                let total: f64 = dist.iter().sum();
                if dist.len() != n || dist.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::contract(format!(
                        "state {s} has an invalid next-state distribution"
                    )));
                }
            }
        }
        if terminal.iter().all(|&t| t) {
            return Err(Error::contract("every state is terminal"));
        }
        Ok(Self {
            p,
            r,
            terminal,
            horizon,
        })
    }

    /// Deterministic MDP from a successor table.
    pub fn deterministic(
        next: &[Vec<usize>],
        r: Vec<Vec<f64>>,
        terminal: Vec<bool>,
        horizon: usize,
    ) -> Result<Self> {
        let n = next.len();
        let p = next
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&s2| (0..n).map(|j| if j == s2 { 1.0 } else { 0.0 }).collect())
                    .collect()
            })
            .collect();
        Self::new(p, r, terminal, horizon)
    }

    pub fn states(&self) -> usize {
        self.p.len()
    }

    pub fn actions(&self) -> usize {
        self.p[0].len()
    }

    /// `n`-state corridor; action 0 steps left, 1 steps right, entering the
    /// rightmost (terminal) state pays 1.
    pub fn corridor(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::contract("corridor needs at least two states"));
        }
        let next: Vec<Vec<usize>> = (0..n)
            .map(|s| vec![s.saturating_sub(1), (s + 1).min(n - 1)])
            .collect();
        let r = (0..n)
            .map(|s| vec![0.0, if s + 2 == n { 1.0 } else { 0.0 }])
            .collect();
        let terminal = (0..n).map(|s| s + 1 == n).collect();
        Self::deterministic(&next, r, terminal, 4 * n)
    }

    /// Two non-terminal states; action 0 stays, action 1 switches. Staying in
    /// state 1 pays 1, switching costs 0.1.
    pub fn two_state_chain() -> Result<Self> {
        Self::deterministic(
            &[vec![0, 1], vec![1, 0]],
            vec![vec![0.0, -0.1], vec![1.0, -0.1]],
            vec![false, false],
            50,
        )
    }
}

/// `Q*(s, a) = r(s, a) + γ Σ p(s'|s, a) max Q*(s', ·)`, terminal values zero.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Vec<Vec<f64>> {
    let (n, na) = (mdp.states(), mdp.actions());
    let mut q = vec![vec![0.0; na]; n];
    loop {
        let v: Vec<f64> = (0..n)
            .map(|s| {
                if mdp.terminal[s] {
                    0.0
                } else {
                    q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if mdp.terminal[s] {
                continue;
            }
            for a in 0..na {
                let new = mdp.r[s][a]
                    + gamma * mdp.p[s][a].iter().zip(&v).map(|(p, v)| p * v).sum::<f64>();
                delta = delta.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if delta < tol {
            return q;
        }
    }
}

/// One-hot vector environment over an MDP. Episodes start in a uniformly
/// drawn non-terminal state.
pub struct TabularEnv {
    pub mdp: TabularMdp,
    state: usize,
    steps: usize,
    rng: SplitRng,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp) -> Self {
        Self {
            mdp,
            state: 0,
            steps: 0,
            rng: SplitRng::new(0),
        }
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        (0..self.mdp.states())
            .map(|j| if j == s { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl VecEnv for TabularEnv {
    fn obs_dim(&self) -> usize {
        self.mdp.states()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.mdp.actions())
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.rng = SplitRng::derive_labeled(seed, "tabular");
        let starts: Vec<usize> = (0..self.mdp.states())
            .filter(|&s| !self.mdp.terminal[s])
            .collect();
        self.state = starts[self.rng.below(starts.len())];
        self.steps = 0;
        Ok(self.one_hot(self.state))
    }

    fn step(&mut self, action: Action) -> Result<VecStep> {
        let a = match action {
            Action::Discrete(a) if a < self.mdp.actions() => a,
            other => return Err(Error::contract(format!("invalid tabular action {other:?}"))),
        };
        if self.mdp.terminal[self.state] {
            return Err(Error::contract("episode over; call reset"));
        }
        let reward = self.mdp.r[self.state][a];
        let u = self.rng.uniform();
        let dist = &self.mdp.p[self.state][a];
        let mut acc = 0.0;
        let mut next = dist
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("valid distribution");
        for (j, p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        self.state = next;
        self.steps += 1;
        let done = self.mdp.terminal[next];
        Ok(VecStep {
            obs: self.one_hot(next),
            reward,
            done,
            truncated: !done && self.steps >= self.mdp.horizon,
        })
    }
}

/// Q-values a network assigns to each one-hot state.
pub fn q_table(policy: &Policy, states: usize) -> Result<Vec<Vec<f64>>> {
    let eye = Tensor::new(
        vec![states, states],
        (0..states * states)
            .map(|k| if k / states == k % states { 1.0 } else { 0.0 })
            .collect(),
    )?;
    let q = policy.net.eval(&policy.params, &eye)?;
    Ok((0..states).map(|s| q.row(s).to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corridor_values_are_discounted_distance() {
        let mdp = TabularMdp::corridor(5).unwrap();
        let q = value_iteration(&mdp, 0.9, 1e-12);
        for s in 0..4 {
            let steps = 4 - s;
            assert!((q[s][1] - 0.9f64.powi(steps as i32 - 1)).abs() < 1e-9);
        }
    }

    #[test]
    fn two_state_chain_closed_form() {
        let mdp = TabularMdp::two_state_chain().unwrap();
        let g = 0.9;
        let q = value_iteration(&mdp, g, 1e-13);
        let v1 = 1.0 / (1.0 - g);
        assert!((q[1][0] - v1).abs() < 1e-9);
        assert!((q[0][1] - (-0.1 + g * v1)).abs() < 1e-9);
    }
}
