//! Synthetic perturbed POMDPs.
//!
//! Two worlds: a seeded finite family whose exact dynamics feed the
//! bisimulation oracles, and a continuous noisy point-mass control task
//! with partial observation masks standing in for heavier physics suites.
//!
//! Noise enters through three independent streams (observation, reward,
//! dynamics) so conditional-independence structure can be tested by
//! re-drawing one stream at a time.

mod point_mass;

pub use point_mass::{proportional_policy, PointMassEnv, ACTION_DIM, STATE_DIM};

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::bisim::{random_prob_vector, FiniteMDP};
use crate::error::{Error, Result};

/// Which slice of the state the agent observes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObsMode {
    Full,
    PositionsOnly,
    VelocitiesOnly,
}

impl ObsMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ObsMode::Full),
            "positions_only" => Ok(ObsMode::PositionsOnly),
            "velocities_only" => Ok(ObsMode::VelocitiesOnly),
            other => Err(Error::Config(format!("unknown obs_mode `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObsMode::Full => "full",
            ObsMode::PositionsOnly => "positions_only",
            ObsMode::VelocitiesOnly => "velocities_only",
        }
    }
}

/// Environment configuration shared by the continuous task.
#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub obs_mode: ObsMode,
    pub noise_scale: f64,
    pub episode_cap: usize,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { obs_mode: ObsMode::Full, noise_scale: 0.0, episode_cap: 200, seed: 0 }
    }
}

impl EnvConfig {
    pub fn obs_dim(&self) -> usize {
        match self.obs_mode {
            ObsMode::Full => STATE_DIM,
            ObsMode::PositionsOnly | ObsMode::VelocitiesOnly => 2,
        }
    }
}

/// One environment step as seen by the agent; `true_state` is exposed for
/// diagnostics only and never fed to the policy.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub true_state: Vec<f64>,
}

/// Configuration of the finite perturbed POMDP family.
#[derive(Clone, Debug)]
pub struct FinitePomdpConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub noise_scale: f64,
}

/// Random finite MDP plus a row-stochastic observation channel `P(o|s)`.
/// `noise_scale = 0` gives the identity channel.
pub fn make_finite_pomdp(
    cfg: &FinitePomdpConfig,
    rng: &mut impl Rng,
) -> Result<(FiniteMDP, Vec<f64>)> {
    if cfg.n_states > 12 {
        return Err(Error::Precondition(format!(
            "finite POMDP limited to 12 states, got {}",
            cfg.n_states
        )));
    }
    let mdp = FiniteMDP::random(rng, cfg.n_states, cfg.n_actions, cfg.gamma);
    let n = cfg.n_states;
    let mut channel = vec![0.0; n * n];
    if cfg.noise_scale == 0.0 {
        for s in 0..n {
            channel[s * n + s] = 1.0;
        }
    } else {
        for s in 0..n {
            let mut row: Vec<f64> = (0..n)
                .map(|o| {
                    let d = o as f64 - s as f64;
                    (-d * d / (2.0 * cfg.noise_scale * cfg.noise_scale)).exp()
                })
                .collect();
            let sum: f64 = row.iter().sum();
            for x in &mut row {
                *x /= sum;
            }
            let s2: f64 = row.iter().sum();
            row[s] += 1.0 - s2;
            channel[s * n..(s + 1) * n].copy_from_slice(&row);
        }
    }
    let _ = random_prob_vector::<rand_chacha::ChaCha12Rng>; // keep helper linked for callers
    Ok((mdp, channel))
}

/// One row of a trajectory dump.
#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub step: usize,
    pub state: Vec<f64>,
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Write a trajectory as CSV with columns `step, s..., o..., a..., r, done`.
pub fn write_trajectory_csv(path: impl AsRef<Path>, rows: &[TrajectoryRow]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(first) = rows.first() {
        let mut header = vec!["step".to_string()];
        header.extend((0..first.state.len()).map(|i| format!("s{i}")));
        header.extend((0..first.observation.len()).map(|i| format!("o{i}")));
        header.extend((0..first.action.len()).map(|i| format!("a{i}")));
        header.push("r".into());
        header.push("done".into());
        writeln!(file, "{}", header.join(","))?;
    }
    for row in rows {
        let mut cells = vec![row.step.to_string()];
        cells.extend(row.state.iter().map(|x| format!("{x}")));
        cells.extend(row.observation.iter().map(|x| format!("{x}")));
        cells.extend(row.action.iter().map(|x| format!("{x}")));
        cells.push(format!("{}", row.reward));
        cells.push(if row.done { "1".into() } else { "0".into() });
        writeln!(file, "{}", cells.join(","))?;
    }
    Ok(())
}
