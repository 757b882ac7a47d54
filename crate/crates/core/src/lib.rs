//! Contextual bandits that stay robust when the linear reward model is
//! misspecified.
//!
//! The crate provides:
//!
//! * [`env`]: the step-function, sensitivity-family and realizable-linear
//!   environments, with closed forms for their best linear approximations.
//! * [`linmodel`]: per-arm linear models, least-squares fits and the
//!   constrained regression oracle solved through its one-dimensional dual.
//! * [`falcon`]: the Epsilon-FALCON agent (epochs, exploration schedule,
//!   inverse-gap-weighted action kernel, constrained model update) and
//!   baseline agents.
//! * [`diag`]: Monte Carlo estimators of policy values, regret, inverse
//!   probabilities and the kernel inequalities used as run diagnostics.
//! * [`harness`]: configuration, single runs, multi-seed suites, comparison
//!   tables and the CSV artifacts they write.

pub mod diag;
pub mod env;
pub mod falcon;
pub mod harness;
pub mod linmodel;
pub mod rng;
pub mod stats;
