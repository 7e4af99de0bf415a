//! stratum-conditional effects at a treatment period s. the shares and
//! the matched period s' come from the untreated survival curves; the
//! conditional effects follow from the indicator-branch formulas, with
//! the complier interaction recovered by rescaling the unconditional
//! interaction by Pr(cs).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};
use crate::nonparam::substrata::{
    match_sprime, substrata_probabilities, SPrime, SubstrataEstimates,
};
use crate::nonparam::CurveSource;
use crate::phmodel::{predict_survival, FitResult, TreatmentPath};
use crate::spells::Dataset;

use super::weights::collect_patterns;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubstrataOptions {
    /// Pr(cs) below this flags the complier effect as unstable
    pub cs_floor: f64,
}

impl Default for SubstrataOptions {
    fn default() -> Self {
        SubstrataOptions { cs_floor: 1e-3 }
    }
}

/// survival product over periods u..=tau of the untreated curve.
fn untreated_tail(source: &dyn CurveSource, z: u8, u: u32, tau: u32) -> Result<f64> {
    let mut prod = 1.0;
    for t in u..=tau {
        prod *= source.p_untreated(t, z)?;
    }
    Ok(prod)
}

/// survival product over periods s..=tau within the treated-at-s stratum.
fn treated_tail(source: &dyn CurveSource, z: u8, s: u32, tau: u32) -> Result<f64> {
    let mut prod = 1.0;
    for t in s..=tau {
        prod *= source.p_treated(t, z, s)?;
    }
    Ok(prod)
}

/// stratum-conditional effects at treatment period s and horizon tau.
///
/// `beta_zs` is the unconditional interaction at s (from the g-computation
/// table or the model decomposition); when supplied and Pr(cs) > 0 it is
/// rescaled into the per-complier effect.
pub fn substrata_effects(
    source: &dyn CurveSource,
    s: u32,
    tau: u32,
    beta_zs: Option<f64>,
    opts: &SubstrataOptions,
) -> Result<SubstrataEstimates> {
    if s == 0 || s > tau {
        return Err(SurvError::Config(format!(
            "need 1 <= s <= tau, got s {s}, tau {tau}"
        )));
    }
    let probs = substrata_probabilities(source, s)?;
    let s_prime = match_sprime(source, s, tau)?;
    let high = probs.higher_survival_regime;
    let low = 1 - high;

    // conditional survival past tau among always-survivors: the lower
    // regime continues from s, the higher regime from the matched s'
    // (certain survival when the match lies beyond the horizon)
    let tail_low = untreated_tail(source, low, s, tau)?;
    let tail_high = match s_prime {
        SPrime::Within(u) => untreated_tail(source, high, u, tau)?,
        SPrime::BeyondTau => 1.0,
    };
    let surv_as = |z: u8| if z == low { tail_low } else { tail_high };

    let beta0_as = surv_as(low);
    let beta_z_as = surv_as(1) - surv_as(0);

    let beta_s_as = if source.has_stratum(low, s) {
        Some(treated_tail(source, low, s, tau)? - tail_low)
    } else {
        None
    };

    let complier_defined = probs.pr_cs > 0.0;
    let cs_unstable = complier_defined && probs.pr_cs < opts.cs_floor;
    let beta_zs_cs = match (beta_zs, complier_defined) {
        (Some(b), true) => Some(b / probs.pr_cs),
        _ => None,
    };

    Ok(SubstrataEstimates {
        s,
        tau,
        probs,
        s_prime,
        beta0_as,
        beta_z_as,
        beta_s_as,
        beta_zs_cs,
        complier_defined,
        cs_unstable,
    })
}

/// population survival curves implied by a fitted model, averaged over the
/// dataset's covariate distribution with plain sample shares. implements
/// the curve interface consumed by the substrata routines for one
/// treatment period s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubstrataCurves {
    pub s: u32,
    pub tau: u32,
    /// p_untreated[z][t-1] for t = 1..=tau
    pub p_untreated: [Vec<f64>; 2],
    /// p_treated[z][t-s] for t = s..=tau, within the treated-at-s stratum
    pub p_treated: [Vec<f64>; 2],
}

impl CurveSource for SubstrataCurves {
    fn p_untreated(&self, t: u32, z: u8) -> Result<f64> {
        if t < 1 || t > self.tau {
            return Err(SurvError::Estimation(format!(
                "period {t} outside the tabulated range 1..={}",
                self.tau
            )));
        }
        Ok(self.p_untreated[z as usize][(t - 1) as usize])
    }

    fn p_treated(&self, t: u32, z: u8, s: u32) -> Result<f64> {
        if s != self.s || t < s || t > self.tau {
            return Err(SurvError::Estimation(format!(
                "treated curve tabulated only for stratum {} over {}..={}",
                self.s, self.s, self.tau
            )));
        }
        Ok(self.p_treated[z as usize][(t - s) as usize])
    }

    fn q_treatment(&self, _t: u32, _z: u8) -> Result<f64> {
        Err(SurvError::Estimation(
            "treatment process not represented in tabulated survival curves".into(),
        ))
    }

    fn has_stratum(&self, _z: u8, s: u32) -> bool {
        s == self.s
    }
}

/// tabulates the model-implied population curves needed for substrata
/// analysis at treatment period s: never-treated and treated-at-s
/// survival, averaged over covariate patterns with sample shares.
pub fn model_substrata_curves(
    fit: &FitResult,
    dataset: &Dataset,
    s: u32,
    tau: u32,
) -> Result<SubstrataCurves> {
    if s == 0 || s > tau {
        return Err(SurvError::Config(format!(
            "need 1 <= s <= tau, got s {s}, tau {tau}"
        )));
    }
    if dataset.covariate_names.len() != fit.params.n_covariates() {
        return Err(SurvError::Config(format!(
            "fit expects {} covariates, dataset has {}",
            fit.params.n_covariates(),
            dataset.covariate_names.len()
        )));
    }
    let pats = collect_patterns(dataset);
    if pats.patterns.is_empty() {
        return Err(SurvError::Config("dataset has no spells".into()));
    }
    let total: f64 = pats.counts.iter().sum();

    let population = |z: u8, path: TreatmentPath, u: f64| -> Result<f64> {
        let mut acc = 0.0;
        for (x, count) in pats.patterns.iter().zip(&pats.counts) {
            acc += count / total * predict_survival(&fit.params, x, z, path, 0.0, u)?;
        }
        Ok(acc)
    };

    let mut p_untreated = [Vec::new(), Vec::new()];
    let mut p_treated = [Vec::new(), Vec::new()];
    for z in 0..2u8 {
        let mut prev = 1.0;
        for t in 1..=tau {
            let cur = population(z, TreatmentPath::Never, f64::from(t))?;
            p_untreated[z as usize].push(cur / prev);
            prev = cur;
        }
        let path = TreatmentPath::At(f64::from(s));
        let mut prev = population(z, path, f64::from(s - 1))?;
        for t in s..=tau {
            let cur = population(z, path, f64::from(t))?;
            p_treated[z as usize].push(cur / prev);
            prev = cur;
        }
    }

    Ok(SubstrataCurves {
        s,
        tau,
        p_untreated,
        p_treated,
    })
}
