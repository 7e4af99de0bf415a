//! model-based causal decomposition on top of a fitted hazard model:
//! treatment-time weights, the effect table with delta-method standard
//! errors, and substrata-conditional effects.
//!
//! every effect is a smooth functional of the packed parameter vector, so
//! standard errors come from numerically differentiating the functional
//! and sandwiching the fit covariance.

pub mod decompose;
pub mod substrata;
pub mod weights;

pub use decompose::{decompose, delta_se, DecomposeOptions, DecompositionResult, PerTimeEffect};
pub use substrata::{model_substrata_curves, substrata_effects, SubstrataCurves, SubstrataOptions};
pub use weights::{compute_weights, WeightVector, WeightWindow};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// point estimate with its delta-method standard error and two-sided
/// normal p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub value: f64,
    pub std_error: f64,
    pub p_value: f64,
}

impl EffectEstimate {
    pub(crate) fn new(value: f64, std_error: f64) -> EffectEstimate {
        EffectEstimate {
            value,
            std_error,
            p_value: normal_p_value(value, std_error),
        }
    }
}

/// two-sided p-value against the standard normal; a degenerate (zero
/// standard error) estimate gets 1 when the value is 0 and 0 otherwise.
pub(crate) fn normal_p_value(value: f64, std_error: f64) -> f64 {
    if std_error == 0.0 {
        return if value == 0.0 { 1.0 } else { 0.0 };
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    2.0 * (1.0 - normal.cdf((value / std_error).abs()))
}
