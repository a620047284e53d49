//! Causal state representation for perturbed, partially observable MDPs.
//!
//! The crate pairs a learned pipeline with exact oracles that verify its
//! governing inequalities numerically:
//!
//! - [`numerics`] — dense f64 tensors with reverse-mode autodiff, layer
//!   primitives and an Adam optimizer; the substrate for every network here.
//! - [`transport`] — Wasserstein distances: the diagonal-Gaussian closed form,
//!   exact discrete `W_p` by network simplex, and the 1D quantile evaluator.
//! - [`adm`] — the asynchronous diffusion model: variance-preserving schedule,
//!   offset forward/inverse processes, two-branch training loss and the
//!   classifier-free guided reverse sampler.
//! - [`bisim`] — bisimulation metrics twice over: an exact fixed-point solver
//!   on finite MDPs (with value-bound, contraction and model-error checks)
//!   and the differentiable consistency losses that train the encoder.
//! - [`encoder`] — the recurrent history encoder producing the noised causal
//!   state distribution.
//! - [`envs`] — synthetic perturbed POMDPs: a seeded finite family and the
//!   continuous noisy point-mass task with partial observation masks.
//! - [`agent`] — soft actor-critic operating on denoised causal states.
//! - [`harness`] — replay, the interleaved training loop, evaluation,
//!   verification suites and sweeps behind a config-file interface.

pub mod adm;
pub mod agent;
pub mod bisim;
pub mod encoder;
pub mod envs;
pub mod error;
pub mod harness;
pub mod numerics;
#[doc(hidden)]
pub mod testutil;
pub mod transport;

pub use error::{Error, Result};
pub use numerics::{ParamSet, Tape, Tensor, Tx};
pub use transport::{DiagGaussian, DiscreteDist};
