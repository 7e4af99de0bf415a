//! model-implied survival and treatment-time quantities for a covariate
//! profile. everything integrates the fitted piecewise-constant rates
//! along the requested treatment path.

use serde::{Deserialize, Serialize};

use super::{treated_switch_time, HazardParams};
use crate::error::{Result, SurvError};

/// counterfactual treatment assignment for a prediction: never treated,
/// or treated in period s (the treated exit rate applies from continuous
/// time s-1 onward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TreatmentPath {
    Never,
    At(f64),
}

fn check_profile(params: &HazardParams, x: &[f64], z: u8) -> Result<()> {
    if x.len() != params.n_covariates() {
        return Err(SurvError::Config(format!(
            "profile has {} covariates, model expects {}",
            x.len(),
            params.n_covariates()
        )));
    }
    if z > 1 {
        return Err(SurvError::Config(format!("regime must be 0 or 1, got {z}")));
    }
    Ok(())
}

fn dot(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// integrated exit rate over (t1, t2] along the given treatment path,
/// excluding the covariate factor.
fn exit_integral_baseline(params: &HazardParams, z: usize, path: TreatmentPath, t1: f64, t2: f64) -> f64 {
    let spec = &params.exit_spec;
    let mut total = 0.0;
    let switch = match path {
        TreatmentPath::Never => f64::INFINITY,
        TreatmentPath::At(s) => treated_switch_time(s),
    };
    let untreated_hi = t2.min(switch);
    let treated_lo = t1.max(switch);
    for j in 0..spec.n_segments() {
        if untreated_hi > t1 {
            total += spec.overlap(j, t1, untreated_hi) * params.log_exit[j][z][0].exp();
        }
        if t2 > treated_lo {
            total += spec.overlap(j, treated_lo, t2) * params.log_exit[j][z][1].exp();
        }
    }
    total
}

/// integrated treatment rate over (0, t], excluding the covariate factor.
fn treat_integral_baseline(params: &HazardParams, z: usize, t: f64) -> f64 {
    let spec = &params.treat_spec;
    (0..spec.n_segments())
        .map(|j| spec.overlap(j, 0.0, t) * params.log_treat[j][z].exp())
        .sum()
}

/// conditional survival of the exit process over (tau1, tau2]:
/// `Pr(T > tau2 | T > tau1)` for the profile and treatment path.
pub fn predict_survival(
    params: &HazardParams,
    x: &[f64],
    z: u8,
    path: TreatmentPath,
    tau1: f64,
    tau2: f64,
) -> Result<f64> {
    check_profile(params, x, z)?;
    if !(tau1 >= 0.0) || !(tau2 >= tau1) {
        return Err(SurvError::Config(format!(
            "need 0 <= tau1 <= tau2, got ({tau1}, {tau2})"
        )));
    }
    if let TreatmentPath::At(s) = path {
        if !(s > 0.0) {
            return Err(SurvError::Config(format!("treatment time must be positive, got {s}")));
        }
    }
    let base = exit_integral_baseline(params, z as usize, path, tau1, tau2);
    Ok((-base * dot(x, &params.beta_exit).exp()).exp())
}

/// cumulative treatment hazard for the profile: the integrated treatment
/// rate over (0, t] including the covariate factor.
pub fn cumulative_treatment_hazard(params: &HazardParams, x: &[f64], z: u8, t: f64) -> Result<f64> {
    check_profile(params, x, z)?;
    if !(t >= 0.0) {
        return Err(SurvError::Config(format!("time must be non-negative, got {t}")));
    }
    Ok(treat_integral_baseline(params, z as usize, t) * dot(x, &params.beta_treat).exp())
}

/// sub-density of the treatment time at continuous time s: the treatment
/// rate at s times the probability of still being untreated,
/// `theta_S(s) exp(-Lambda_S(s))`. exit risk does not enter; this is the
/// marginal law of the treatment process.
pub fn predict_treatment_density(params: &HazardParams, x: &[f64], z: u8, s: f64) -> Result<f64> {
    check_profile(params, x, z)?;
    if !(s > 0.0) {
        return Err(SurvError::Config(format!("treatment time must be positive, got {s}")));
    }
    let ex = dot(x, &params.beta_treat).exp();
    let rate = params.log_treat[params.treat_spec.segment_of(s)][z as usize].exp() * ex;
    let cum = treat_integral_baseline(params, z as usize, s) * ex;
    Ok(rate * (-cum).exp())
}

/// probability that treatment arrives in period s (the interval (s-1, s]):
/// the treatment-time mass `exp(-Lambda_S(s-1)) - exp(-Lambda_S(s))`.
pub fn predict_treatment_mass(params: &HazardParams, x: &[f64], z: u8, s: u32) -> Result<f64> {
    check_profile(params, x, z)?;
    if s == 0 {
        return Err(SurvError::Config("period index starts at 1".into()));
    }
    let ex = dot(x, &params.beta_treat).exp();
    let hi = treat_integral_baseline(params, z as usize, s as f64) * ex;
    let lo = treat_integral_baseline(params, z as usize, (s - 1) as f64) * ex;
    Ok((-lo).exp() - (-hi).exp())
}
