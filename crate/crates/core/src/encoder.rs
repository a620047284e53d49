//! Recurrent history encoder: observation sequences in, the distribution of
//! the noised causal state out.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bisim::GaussianNode;
use crate::error::{Error, Result};
use crate::numerics::{affine, xavier_uniform, BoundParams, Gru, ParamSet, Tape, Tensor, Tx};
use crate::transport::DiagGaussian;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// GRU over the observation window plus two affine heads emitting the mean
/// and log-std of the noised causal state.
pub struct Encoder {
    pub obs_dim: usize,
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub params: ParamSet,
    gru: Gru,
}

impl Encoder {
    pub fn new(obs_dim: usize, state_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let gru = Gru::new("enc.gru", obs_dim, hidden_dim);
        let mut params = ParamSet::new();
        gru.init(&mut params, rng);
        params.insert("enc.mean.w", xavier_uniform(rng, hidden_dim, state_dim));
        params.insert("enc.mean.b", Tensor::row(vec![0.0; state_dim]));
        params.insert("enc.logstd.w", xavier_uniform(rng, hidden_dim, state_dim));
        params.insert("enc.logstd.b", Tensor::row(vec![0.0; state_dim]));
        Encoder { obs_dim, state_dim, hidden_dim, params, gru }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.params.bind(tape)
    }

    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundParams {
        self.params.bind_frozen(tape)
    }

    /// Encode a batch of histories (each oldest-first, length ≥ 1) on a
    /// tape. Shorter histories activate late so every item ends at the
    /// final step; inactive rows carry their hidden state through.
    pub fn encode_batch_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        histories: &[Vec<Vec<f64>>],
    ) -> Result<GaussianNode> {
        if histories.is_empty() {
            return Err(Error::Precondition("encode: empty batch".into()));
        }
        let b = histories.len();
        if histories.iter().any(|h| h.is_empty()) {
            return Err(Error::Precondition("encode: empty history".into()));
        }
        let max_len = histories.iter().map(|h| h.len()).max().unwrap();
        for h in histories {
            for obs in h {
                if obs.len() != self.obs_dim {
                    return Err(Error::DimensionMismatch {
                        context: "encode observation".into(),
                        lhs: obs.len(),
                        rhs: self.obs_dim,
                    });
                }
            }
        }

        let mut h = tape.constant_from(b, self.hidden_dim, vec![0.0; b * self.hidden_dim]);
        for t in 0..max_len {
            let mut x_rows = Vec::with_capacity(b * self.obs_dim);
            let mut active = Vec::with_capacity(b);
            for hist in histories {
                let offset = max_len - hist.len();
                if t >= offset {
                    x_rows.extend_from_slice(&hist[t - offset]);
                    active.push(true);
                } else {
                    x_rows.extend(std::iter::repeat(0.0).take(self.obs_dim));
                    active.push(false);
                }
            }
            let x = tape.constant_from(b, self.obs_dim, x_rows);
            let stepped = self.gru.step(tape, bound, x, h)?;
            h = if active.iter().all(|&a| a) {
                stepped
            } else {
                tape.row_blend(stepped, h, &active)?
            };
        }

        let mean_w = *bound.get("enc.mean.w").expect("bound");
        let mean_b = *bound.get("enc.mean.b").expect("bound");
        let ls_w = *bound.get("enc.logstd.w").expect("bound");
        let ls_b = *bound.get("enc.logstd.b").expect("bound");
        let mean = affine(tape, h, mean_w, mean_b)?;
        let logstd_raw = affine(tape, h, ls_w, ls_b)?;
        let logstd = tape.clamp(logstd_raw, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(logstd);
        Ok(GaussianNode { mean, std })
    }

    /// Encode one history with frozen weights.
    pub fn encode(&self, history: &[Vec<f64>]) -> Result<DiagGaussian> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let node = self.encode_batch_on_tape(&mut tape, &bound, &[history.to_vec()])?;
        Ok(node.to_value(&tape))
    }
}

/// Reparameterized draw: `mean + std ⊙ eps` with `eps` standard normal.
pub fn sample_state(g: &DiagGaussian, rng: &mut impl Rng) -> Vec<f64> {
    let normal = StandardNormal;
    g.mean
        .iter()
        .zip(&g.std)
        .map(|(&m, &s)| {
            let e: f64 = normal.sample(rng);
            m + s * e
        })
        .collect()
}

/// Tape-side reparameterized draw with externally supplied noise, keeping
/// gradients flowing through mean and std.
pub fn sample_state_on_tape(tape: &mut Tape, g: &GaussianNode, eps: &Tensor) -> Result<Tx> {
    let e = tape.constant(eps);
    let scaled = tape.mul(g.std, e)?;
    tape.add(g.mean, scaled)
}
