//! estimation toolkit for duration outcomes under a treatment that arrives
//! over time and an assignment regime that controls how fast it arrives.
//!
//! the library decomposes the regime effect on survival into a direct part
//! and a part mediated by treatment timing, working from discrete spell data
//! (one row per subject: regime, optional treatment time, exit or censor
//! time, binary covariates). three estimation routes are provided:
//!
//! * [`nonparam`]: product-limit curves and a plug-in g-computation
//!   decomposition built from period-by-period risk sets, plus
//!   principal-stratum (always/compliant/never survivor) quantities under
//!   rank invariance.
//! * [`phmodel`] + [`effects`]: a continuous-time proportional-hazard model
//!   with piecewise-constant baselines for both the exit and the treatment
//!   process, fitted jointly by maximum likelihood, with delta-method
//!   standard errors for the decomposition functionals.
//! * [`ddcsim`]: a dynamic-discrete-choice panel simulator (search model
//!   with stochastic treatment arrival) that serves as a ground-truth data
//!   generator for validating the estimators end to end.
//!
//! [`spells`] holds the data model: loading, validation, discretization to
//! a period grid, and risk-set tabulation.

pub mod ddcsim;
pub mod effects;
pub mod error;
pub mod nonparam;
pub mod phmodel;
pub mod spells;

pub use error::SurvError;
