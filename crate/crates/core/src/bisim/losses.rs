use crate::error::{Error, Result};
use crate::numerics::{Tape, Tx};
use crate::transport::DiagGaussian;

/// A diagonal Gaussian whose mean and std live on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GaussianNode {
    pub mean: Tx,
    pub std: Tx,
}

impl GaussianNode {
    pub fn dim(&self) -> usize {
        self.mean.numel()
    }

    pub fn to_value(&self, tape: &Tape) -> DiagGaussian {
        DiagGaussian {
            mean: tape.value(self.mean).to_vec(),
            std: tape.value(self.std).to_vec(),
        }
    }
}

/// Half the squared 2-Wasserstein gap between a live Gaussian and a fixed
/// target: `½(‖μ − μ_t‖² + ‖σ − σ_t‖²)`, differentiable through the live
/// side only.
pub fn loss_bs(tape: &mut Tape, live: &GaussianNode, target: &DiagGaussian) -> Result<Tx> {
    if live.dim() != target.dim() || live.std.numel() != target.dim() {
        return Err(Error::DimensionMismatch {
            context: "loss_bs".into(),
            lhs: live.dim(),
            rhs: target.dim(),
        });
    }
    let t_mean = tape.constant_from(1, target.dim(), target.mean.clone());
    let t_std = tape.constant_from(1, target.dim(), target.std.clone());
    let dm = tape.sub(live.mean, t_mean)?;
    let ds = tape.sub(live.std, t_std)?;
    let dm2 = tape.square(dm);
    let ds2 = tape.square(ds);
    let sm = tape.sum_all(dm2);
    let ss = tape.sum_all(ds2);
    let total = tape.add(sm, ss)?;
    Ok(tape.scale(total, 0.5))
}

/// The reward-channel counterpart of [`loss_bs`]; both sides must be 1-dim.
pub fn loss_br(tape: &mut Tape, live: &GaussianNode, target: &DiagGaussian) -> Result<Tx> {
    if live.dim() != 1 || target.dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "loss_br expects 1-dim reward distributions".into(),
            lhs: live.dim(),
            rhs: target.dim(),
        });
    }
    loss_bs(tape, live, target)
}

#[cfg(test)]
mod tests {
    use crate::numerics::Tensor;
    use crate::testutil::{finite_difference_grad, max_grad_error};

    use super::*;

    fn node(tape: &mut Tape, mean: Vec<f64>, std: Vec<f64>) -> GaussianNode {
        let m = tape.leaf(&Tensor::row(mean));
        let s = tape.leaf(&Tensor::row(std));
        GaussianNode { mean: m, std: s }
    }

    #[test]
    fn identical_distributions_score_zero() {
        let mut tape = Tape::new();
        let live = node(&mut tape, vec![0.3, -0.2], vec![0.5, 0.1]);
        let target = DiagGaussian::new(vec![0.3, -0.2], vec![0.5, 0.1]).unwrap();
        let loss = loss_bs(&mut tape, &live, &target).unwrap();
        assert_eq!(tape.scalar_value(loss), 0.0);
    }

    #[test]
    fn point_masses_one_apart_score_half() {
        let mut tape = Tape::new();
        let live = node(&mut tape, vec![1.0], vec![0.0]);
        let target = DiagGaussian::point_mass(vec![0.0]);
        let loss = loss_bs(&mut tape, &live, &target).unwrap();
        assert_eq!(tape.scalar_value(loss), 0.5);
    }

    #[test]
    fn reward_loss_means_one_apart_equal_std() {
        let mut tape = Tape::new();
        let live = node(&mut tape, vec![0.0], vec![0.3]);
        let target = DiagGaussian::new(vec![1.0], vec![0.3]).unwrap();
        let loss = loss_br(&mut tape, &live, &target).unwrap();
        assert_eq!(tape.scalar_value(loss), 0.5);
    }

    #[test]
    fn reward_loss_rejects_vector_inputs() {
        let mut tape = Tape::new();
        let live = node(&mut tape, vec![0.0, 1.0], vec![0.3, 0.3]);
        let target = DiagGaussian::new(vec![1.0, 0.0], vec![0.3, 0.3]).unwrap();
        assert!(loss_br(&mut tape, &live, &target).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let target = DiagGaussian::new(vec![0.4, -0.6, 0.1], vec![0.2, 0.9, 0.5]).unwrap();
        let mean0 = vec![0.1, 0.2, -0.3];
        let std0 = vec![0.7, 0.4, 0.3];

        let mut tape = Tape::new();
        let live = node(&mut tape, mean0.clone(), std0.clone());
        let loss = loss_bs(&mut tape, &live, &target).unwrap();
        tape.backward(loss).unwrap();
        let g_mean = tape.grad(live.mean).unwrap().to_vec();
        let g_std = tape.grad(live.std).unwrap().to_vec();

        let target2 = target.clone();
        let std1 = std0.clone();
        let mut f_mean = move |m: &[f64]| {
            let mut t = Tape::new();
            let live = node(&mut t, m.to_vec(), std1.clone());
            let l = loss_bs(&mut t, &live, &target2).unwrap();
            t.scalar_value(l)
        };
        let fd_mean = finite_difference_grad(&mut f_mean, &mean0, 1e-5);
        assert!(max_grad_error(&g_mean, &fd_mean, 1e-9) < 1e-4);

        let target3 = target.clone();
        let mut f_std = move |s: &[f64]| {
            let mut t = Tape::new();
            let live = node(&mut t, mean0.clone(), s.to_vec());
            let l = loss_bs(&mut t, &live, &target3).unwrap();
            t.scalar_value(l)
        };
        let fd_std = finite_difference_grad(&mut f_std, &std0, 1e-5);
        assert!(max_grad_error(&g_std, &fd_std, 1e-9) < 1e-4);
    }
}
