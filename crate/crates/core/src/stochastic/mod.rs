//! Monte-Carlo estimators on seeded Brownian ensembles.

mod drift;
mod ensemble;
mod minimize;
mod xtilde;

pub use drift::{
    girsanov_density_mean, girsanov_logdensity, kl_estimate, kl_shift, mixture_drift, penalty_d, DriftProcessSpec,
};
pub use ensemble::{sample_ensemble, BrownianEnsemble};
pub use minimize::{minimize_action_mc, MinimizeReport, MinimizerConfig, SampleObjective};
pub use xtilde::{simulate_xtilde, BlowupSummary, XTildeSet, BLOWUP_THRESHOLD};
