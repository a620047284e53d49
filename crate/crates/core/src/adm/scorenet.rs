use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{xavier_uniform, Activation, BoundParams, Mlp, ParamSet, Tape, Tensor, Tx};

use super::{forward_from_delta, forward_sample, invert_delta, reverse_denoise, GuidanceMask, NoiseSchedule};

/// Width of the sinusoidal step embedding fed to the score network.
pub const STEP_EMB_DIM: usize = 32;

/// Conditioning for one batched score-network evaluation.
pub enum Guidance {
    /// Unconditional: every row sees the learned null token.
    None,
    /// Fully conditional on the given `[B, w_y]` rows.
    Full(Tx),
    /// Per-row mask: `true` keeps the conditioning, `false` swaps in the
    /// null token.
    Masked(Tx, Vec<bool>),
}

/// Epsilon-prediction conditional score network.
///
/// An MLP over `(x^k, guidance-or-null, step embedding)` emitting a noise
/// estimate with the dimension of `x`. The implied score is
/// `-eps_hat / sqrt(1 - ᾱ_k)`.
pub struct ScoreNet {
    pub w_x: usize,
    /// Guidance dimension; 0 builds an unconditional-only network.
    pub w_y: usize,
    pub params: ParamSet,
    mlp: Mlp,
}

impl ScoreNet {
    pub fn new(w_x: usize, w_y: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let in_dim = w_x + w_y + STEP_EMB_DIM;
        let mlp = Mlp::new("score.mlp", vec![in_dim, hidden, hidden, w_x], Activation::Relu);
        let mut params = ParamSet::new();
        mlp.init(&mut params, rng);
        if w_y > 0 {
            params.insert("score.null", xavier_uniform(rng, 1, w_y));
        }
        ScoreNet { w_x, w_y, params, mlp }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.params.bind(tape)
    }

    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundParams {
        self.params.bind_frozen(tape)
    }

    /// 32-dim sinusoidal encoding of the normalized step `k / K`.
    pub fn step_embedding(k: usize, k_total: usize) -> [f64; STEP_EMB_DIM] {
        let t = k as f64 / k_total as f64;
        let mut emb = [0.0; STEP_EMB_DIM];
        let half = STEP_EMB_DIM / 2;
        for i in 0..half {
            let freq = 0.5 * 1000f64.powf(i as f64 / (half - 1) as f64);
            emb[2 * i] = (freq * t).sin();
            emb[2 * i + 1] = (freq * t).cos();
        }
        emb
    }

    fn embedding_rows(ks: &[usize], k_total: usize) -> Tensor {
        let mut data = Vec::with_capacity(ks.len() * STEP_EMB_DIM);
        for &k in ks {
            data.extend_from_slice(&Self::step_embedding(k, k_total));
        }
        Tensor::matrix(ks.len(), STEP_EMB_DIM, data).expect("embedding shape")
    }

    /// Predict noise for a batch on an existing tape. `ks` gives the
    /// diffusion step of each row.
    pub fn eps_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x: Tx,
        guidance: Guidance,
        ks: &[usize],
        k_total: usize,
    ) -> Result<Tx> {
        if x.cols != self.w_x {
            return Err(Error::DimensionMismatch {
                context: "score network input".into(),
                lhs: x.cols,
                rhs: self.w_x,
            });
        }
        if ks.len() != x.rows {
            return Err(Error::DimensionMismatch {
                context: "score network step indices".into(),
                lhs: ks.len(),
                rhs: x.rows,
            });
        }
        let mut input = x;
        if self.w_y > 0 {
            let null = *bound.get("score.null").expect("null token bound");
            let null_rows = tape.repeat_rows(null, x.rows)?;
            let rows = match guidance {
                Guidance::None => null_rows,
                Guidance::Full(y) => y,
                Guidance::Masked(y, mask) => tape.row_blend(y, null_rows, &mask)?,
            };
            if rows.cols != self.w_y {
                return Err(Error::DimensionMismatch {
                    context: "score network guidance".into(),
                    lhs: rows.cols,
                    rhs: self.w_y,
                });
            }
            input = tape.concat_cols(input, rows)?;
        }
        let emb = tape.constant(&Self::embedding_rows(ks, k_total));
        input = tape.concat_cols(input, emb)?;
        self.mlp.forward(tape, bound, input)
    }

    /// Frozen-weights noise prediction for plain row data.
    pub fn eps_values(
        &self,
        xs: &[Vec<f64>],
        ys: Option<&[Vec<f64>]>,
        k: usize,
        k_total: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let b = xs.len();
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let x = tape.constant(&rows_tensor(xs)?);
        let guidance = match ys {
            Some(rows) => Guidance::Full(tape.constant(&rows_tensor(rows)?)),
            None => Guidance::None,
        };
        let ks = vec![k; b];
        let out = self.eps_on_tape(&mut tape, &bound, x, guidance, &ks, k_total)?;
        let flat = tape.value(out);
        Ok((0..b).map(|i| flat[i * self.w_x..(i + 1) * self.w_x].to_vec()).collect())
    }

    /// Run the asynchronous reverse chain on a batch, combining conditional
    /// and unconditional predictions with the classifier-free weight:
    /// `eps = eps_u + w · (eps_c − eps_u)`.
    pub fn denoise_batch(
        &self,
        x_delta: &[Vec<f64>],
        ys: Option<&[Vec<f64>]>,
        sched: &NoiseSchedule,
        guidance_weight: f64,
        stochastic: bool,
        rng: &mut impl Rng,
    ) -> Result<Vec<Vec<f64>>> {
        if let Some(rows) = ys {
            if rows.len() != x_delta.len() {
                return Err(Error::DimensionMismatch {
                    context: "denoise guidance rows".into(),
                    lhs: rows.len(),
                    rhs: x_delta.len(),
                });
            }
        }
        let mut eps_fn = |xs: &[Vec<f64>], k: usize| -> Result<Vec<Vec<f64>>> {
            match (ys, guidance_weight) {
                (None, _) => self.eps_values(xs, None, k, sched.k_total),
                (Some(_), w) if w == 0.0 => self.eps_values(xs, None, k, sched.k_total),
                (Some(rows), w) if w == 1.0 => self.eps_values(xs, Some(rows), k, sched.k_total),
                (Some(rows), w) => {
                    let e_u = self.eps_values(xs, None, k, sched.k_total)?;
                    let e_c = self.eps_values(xs, Some(rows), k, sched.k_total)?;
                    Ok(e_u
                        .into_iter()
                        .zip(e_c)
                        .map(|(u, c)| {
                            u.into_iter().zip(c).map(|(ui, ci)| ui + w * (ci - ui)).collect()
                        })
                        .collect())
                }
            }
        };
        reverse_denoise(x_delta, sched, stochastic, rng, &mut eps_fn)
    }

    /// Convenience single-item denoise.
    pub fn denoise(
        &self,
        x_delta: &[f64],
        y: Option<&[f64]>,
        sched: &NoiseSchedule,
        guidance_weight: f64,
        stochastic: bool,
        rng: &mut impl Rng,
    ) -> Result<Vec<f64>> {
        let xs = vec![x_delta.to_vec()];
        let ys_vec = y.map(|row| vec![row.to_vec()]);
        let out = self.denoise_batch(
            &xs,
            ys_vec.as_deref(),
            sched,
            guidance_weight,
            stochastic,
            rng,
        )?;
        Ok(out.into_iter().next().unwrap())
    }
}

fn rows_tensor(rows: &[Vec<f64>]) -> Result<Tensor> {
    if rows.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let w = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * w);
    for r in rows {
        if r.len() != w {
            return Err(Error::DimensionMismatch {
                context: "ragged batch rows".into(),
                lhs: r.len(),
                rhs: w,
            });
        }
        data.extend_from_slice(r);
    }
    Tensor::matrix(rows.len(), w, data)
}

/// One branch of the two-branch training draw: re-noised inputs, their
/// steps, and the exact noise targets the network must recover.
pub struct BranchBatch {
    pub xs: Vec<Vec<f64>>,
    pub ks: Vec<usize>,
    pub targets: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

/// Draw both training branches for a batch of offset-noised inputs.
///
/// Branch A refreshes the chain: a surrogate noise inverts the input to a
/// denoised estimate, which is then re-noised to a step drawn uniformly
/// from `{k0..K}`. Branch B continues the chain from the offset, drawing
/// the step uniformly from `{delta..K}`. Both branches regress the exact
/// noise injected by their own re-noising.
pub fn draw_branches(
    batch_x: &[Vec<f64>],
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> (BranchBatch, BranchBatch) {
    let normal = StandardNormal;
    let w_x = batch_x[0].len();
    let mut a = BranchBatch { xs: vec![], ks: vec![], targets: vec![], mask: vec![] };
    let mut b = BranchBatch { xs: vec![], ks: vec![], targets: vec![], mask: vec![] };
    for x in batch_x {
        // Branch A: invert with a fresh surrogate, then noise forward.
        let k_a = rng.random_range(sched.k0..=sched.k_total);
        let eps_sur: Vec<f64> = (0..w_x).map(|_| normal.sample(rng)).collect();
        let x0_hat = invert_delta(x, &eps_sur, sched);
        let eps_a: Vec<f64> = (0..w_x).map(|_| normal.sample(rng)).collect();
        a.xs.push(forward_sample(&x0_hat, k_a, &eps_a, sched));
        a.ks.push(k_a);
        a.targets.push(eps_a);
        a.mask.push(GuidanceMask::draw(rng).keep);

        // Branch B: continue the existing chain from the offset.
        let k_b = rng.random_range(sched.delta..=sched.k_total);
        let eps_b: Vec<f64> = (0..w_x).map(|_| normal.sample(rng)).collect();
        b.xs.push(forward_from_delta(x, k_b, &eps_b, sched));
        b.ks.push(k_b);
        b.targets.push(eps_b);
        b.mask.push(GuidanceMask::draw(rng).keep);
    }
    (a, b)
}

/// Branch losses as plain numbers, for metrics.
#[derive(Clone, Copy, Debug)]
pub struct AdmLossReport {
    pub total: f64,
    pub branch_refresh: f64,
    pub branch_continue: f64,
}

/// The empirical two-branch denoising loss on a tape.
///
/// Returns the scalar node `½(mean_A ‖ε̂−ε‖² + mean_B ‖ε̂−ε‖²)`; per-item
/// guidance masks resample the classifier-free coin.
pub fn adm_loss(
    tape: &mut Tape,
    net: &ScoreNet,
    bound: &BoundParams,
    batch_x: &[Vec<f64>],
    batch_y: Option<&[Vec<f64>]>,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<Tx> {
    if batch_x.is_empty() {
        return Err(Error::Precondition("adm_loss: empty batch".into()));
    }
    if let Some(rows) = batch_y {
        if rows.len() != batch_x.len() {
            return Err(Error::DimensionMismatch {
                context: "adm_loss guidance rows".into(),
                lhs: rows.len(),
                rhs: batch_x.len(),
            });
        }
    }
    let (branch_a, branch_b) = draw_branches(batch_x, sched, rng);
    let y_tensor = batch_y.map(rows_tensor).transpose()?;
    let mut branch_loss = |branch: &BranchBatch| -> Result<Tx> {
        let x = tape.constant(&rows_tensor(&branch.xs)?);
        let guidance = match &y_tensor {
            Some(t) => {
                let y = tape.constant(t);
                Guidance::Masked(y, branch.mask.clone())
            }
            None => Guidance::None,
        };
        let eps_hat = net.eps_on_tape(tape, bound, x, guidance, &branch.ks, sched.k_total)?;
        let target = tape.constant(&rows_tensor(&branch.targets)?);
        let diff = tape.sub(eps_hat, target)?;
        let sq = tape.square(diff);
        let per_item = tape.sum_rows(sq);
        Ok(tape.mean_all(per_item))
    };
    let loss_a = branch_loss(&branch_a)?;
    let loss_b = branch_loss(&branch_b)?;
    let sum = tape.add(loss_a, loss_b)?;
    Ok(tape.scale(sum, 0.5))
}
