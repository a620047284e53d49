use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::transport::DiscreteDist;

/// Distribution over a finite set of reward values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardDist {
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

impl RewardDist {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.len() != probs.len() || atoms.is_empty() {
            return Err(Error::InvalidDistribution {
                what: "reward atoms and probabilities must be non-empty and equal length".into(),
            });
        }
        if atoms.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::InvalidDistribution {
                what: "reward atoms must lie in [0, 1]".into(),
            });
        }
        // Reuse the probability-vector validation.
        let _ = DiscreteDist::new(probs.clone())?;
        Ok(RewardDist { atoms, probs })
    }

    pub fn deterministic(r: f64) -> Result<Self> {
        RewardDist::new(vec![r], vec![1.0])
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(&r, &p)| r * p).sum()
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_atom(&self) -> f64 {
        self.atoms.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Explicit tabular MDP: the exactly-solvable oracle world.
#[derive(Clone, Debug)]
pub struct FiniteMDP {
    pub n_states: usize,
    pub n_actions: usize,
    /// `[state * n_actions + action]` → distribution over next states.
    transitions: Vec<DiscreteDist>,
    /// `[state * n_actions + action]` → reward distribution.
    rewards: Vec<RewardDist>,
    pub gamma: f64,
}

impl FiniteMDP {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<DiscreteDist>,
        rewards: Vec<RewardDist>,
        gamma: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Precondition(format!("gamma must be in (0,1), got {gamma}")));
        }
        if transitions.len() != n_states * n_actions || rewards.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                context: "FiniteMDP tables".into(),
                lhs: transitions.len(),
                rhs: n_states * n_actions,
            });
        }
        for t in &transitions {
            if t.len() != n_states {
                return Err(Error::DimensionMismatch {
                    context: "transition row".into(),
                    lhs: t.len(),
                    rhs: n_states,
                });
            }
        }
        Ok(FiniteMDP { n_states, n_actions, transitions, rewards, gamma })
    }

    pub fn transition(&self, s: usize, a: usize) -> &DiscreteDist {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn reward(&self, s: usize, a: usize) -> &RewardDist {
        &self.rewards[s * self.n_actions + a]
    }

    pub fn reward_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in &self.rewards {
            lo = lo.min(r.min_atom());
            hi = hi.max(r.max_atom());
        }
        (lo, hi)
    }

    /// Seeded random instance for the oracle suites: dense random
    /// transition rows and 1–3 reward atoms per (s, a).
    pub fn random(rng: &mut impl Rng, n_states: usize, n_actions: usize, gamma: f64) -> Self {
        let mut transitions = Vec::with_capacity(n_states * n_actions);
        let mut rewards = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states * n_actions {
            transitions.push(random_prob_vector(rng, n_states));
            let n_atoms = rng.random_range(1..=3);
            let atoms: Vec<f64> = (0..n_atoms).map(|_| rng.random_range(0.0..1.0)).collect();
            let probs = random_prob_vector(rng, n_atoms);
            rewards.push(RewardDist::new(atoms, probs.probs().to_vec()).unwrap());
        }
        FiniteMDP { n_states, n_actions, transitions, rewards, gamma }
    }

    /// Copy with one transition row shifted by `eps` of probability mass
    /// from its heaviest entry onto its lightest.
    pub fn perturb_transition(&self, s: usize, a: usize, eps: f64) -> Result<FiniteMDP> {
        let mut out = self.clone();
        let row = out.transitions[s * self.n_actions + a].probs().to_vec();
        let (mut hi, mut lo) = (0, 0);
        for (i, &p) in row.iter().enumerate() {
            if p > row[hi] {
                hi = i;
            }
            if p < row[lo] {
                lo = i;
            }
        }
        let shift = eps.min(row[hi]);
        let mut new_row = row;
        new_row[hi] -= shift;
        new_row[lo] += shift;
        let total: f64 = new_row.iter().sum();
        new_row[hi] += 1.0 - total;
        out.transitions[s * self.n_actions + a] = DiscreteDist::new(new_row)?;
        Ok(out)
    }

    /// Copy with one reward distribution's atoms shifted by `delta`
    /// (clamped into [0, 1]).
    pub fn perturb_reward(&self, s: usize, a: usize, delta: f64) -> Result<FiniteMDP> {
        let mut out = self.clone();
        let r = &out.rewards[s * self.n_actions + a];
        let atoms: Vec<f64> = r.atoms.iter().map(|&x| (x + delta).clamp(0.0, 1.0)).collect();
        out.rewards[s * self.n_actions + a] = RewardDist::new(atoms, r.probs.clone())?;
        Ok(out)
    }

    /// Plain-text table format: header `states actions gamma`, then one
    /// line per (s, a): next-state probabilities, `|`, `atom:prob` pairs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.n_states, self.n_actions, self.gamma).unwrap();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let t = self.transition(s, a);
                let probs: Vec<String> = t.probs().iter().map(|p| format!("{p:.17e}")).collect();
                let r = self.reward(s, a);
                let pairs: Vec<String> = r
                    .atoms
                    .iter()
                    .zip(&r.probs)
                    .map(|(atom, p)| format!("{atom:.17e}:{p:.17e}"))
                    .collect();
                writeln!(out, "{} | {}", probs.join(" "), pairs.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<FiniteMDP> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty MDP table".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Config("MDP header must be `states actions gamma`".into()));
        }
        let n_states: usize =
            parts[0].parse().map_err(|_| Error::Config("bad state count".into()))?;
        let n_actions: usize =
            parts[1].parse().map_err(|_| Error::Config("bad action count".into()))?;
        let gamma: f64 = parts[2].parse().map_err(|_| Error::Config("bad gamma".into()))?;
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for line in lines {
            let (t_part, r_part) = line
                .split_once('|')
                .ok_or_else(|| Error::Config("MDP row missing `|` separator".into()))?;
            let probs: Vec<f64> = t_part
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| Error::Config("bad probability".into())))
                .collect::<Result<_>>()?;
            let mut atoms = Vec::new();
            let mut rprobs = Vec::new();
            for pair in r_part.split_whitespace() {
                let (atom, p) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::Config("reward pair must be atom:prob".into()))?;
                atoms.push(atom.parse().map_err(|_| Error::Config("bad reward atom".into()))?);
                rprobs.push(p.parse().map_err(|_| Error::Config("bad reward prob".into()))?);
            }
            transitions.push(DiscreteDist::new(probs)?);
            rewards.push(RewardDist::new(atoms, rprobs)?);
        }
        FiniteMDP::new(n_states, n_actions, transitions, rewards, gamma)
    }
}

/// Random probability vector, exactly normalized.
pub fn random_prob_vector(rng: &mut impl Rng, n: usize) -> DiscreteDist {
    let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = p.iter().sum();
    for x in &mut p {
        *x /= s;
    }
    let s2: f64 = p.iter().sum();
    p[0] += 1.0 - s2;
    DiscreteDist::new(p).unwrap()
}
