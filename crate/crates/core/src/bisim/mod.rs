//! Bisimulation metrics, twice over.
//!
//! The exact face: a fixed-point solver on finite MDPs whose iterates,
//! value bounds, contraction rates and model-error gaps are checked
//! numerically against their governing inequalities. The learned face: the
//! differentiable consistency losses coupling the recurrent encoder to the
//! diffusion heads.

mod losses;
mod mdp;
mod metric;

pub use losses::{loss_br, loss_bs, GaussianNode};
pub use mdp::{random_prob_vector, FiniteMDP, RewardDist};
pub use metric::{
    bisim_iterates, exact_bisim, policy_evaluation, value_iteration, verify_contraction,
    verify_model_error_bound, verify_value_bound, BisimMetric, ContractionReport,
    ModelErrorReport, ValueBoundReport,
};
