//! principal-stratum quantities under rank invariance of untreated
//! survival across regimes.
//!
//! at a treatment period s the untreated population splits into three
//! strata: subjects who would reach s under either regime (`as`), under
//! the higher-survival regime only (`cs`), and under neither (`ns`). rank
//! invariance makes the shares identified from the two untreated survival
//! curves, and maps the `as` stratum of one regime onto the survivors past
//! a matched period s' of the other: s' solves S_high(s') = S_low(s) on
//! the period grid.

use crate::error::{Result, SurvError};
use crate::nonparam::CurveSource;
use serde::{Deserialize, Serialize};

/// stratum shares at period s, with the direction of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstrataProbs {
    pub s: u32,
    /// share reaching s untreated under both regimes
    pub pr_as: f64,
    /// share reaching s untreated only under the higher-survival regime
    pub pr_cs: f64,
    /// share reaching s under neither regime
    pub pr_ns: f64,
    /// regime whose untreated survival at s is the larger one
    pub higher_survival_regime: u8,
}

/// matched period on the higher-survival regime's curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SPrime {
    /// nearest grid period with S_high(s') = S_low(s)
    Within(u32),
    /// the higher curve stays above the target through tau
    BeyondTau,
}

/// untreated survival into period u: P(T^{z,inf} >= u), the product of
/// per-period survival over 1..=u-1.
pub fn survival_into(source: &dyn CurveSource, z: u8, u: u32) -> Result<f64> {
    let mut prod = 1.0;
    for t in 1..u {
        prod *= source.p_untreated(t, z)?;
    }
    Ok(prod)
}

/// which regime has the higher untreated survival into s (ties go to 1,
/// matching the symmetric case where the split is immaterial).
fn direction(source: &dyn CurveSource, s: u32) -> Result<(u8, f64, f64)> {
    let s0 = survival_into(source, 0, s)?;
    let s1 = survival_into(source, 1, s)?;
    if s1 >= s0 {
        Ok((1, s1, s0))
    } else {
        Ok((0, s0, s1))
    }
}

/// stratum shares at s. the three shares sum to 1 by construction.
pub fn substrata_probabilities(source: &dyn CurveSource, s: u32) -> Result<SubstrataProbs> {
    if s == 0 {
        return Err(SurvError::Config("treatment period must be positive".into()));
    }
    let (high, surv_high, surv_low) = direction(source, s)?;
    Ok(SubstrataProbs {
        s,
        pr_as: surv_low,
        pr_cs: surv_high - surv_low,
        pr_ns: 1.0 - surv_high,
        higher_survival_regime: high,
    })
}

/// finds the grid period where the higher regime's untreated survival
/// falls to the lower regime's level at s: the nearest grid point by
/// absolute gap, ties toward the smaller period. if the higher curve is
/// still above the target at tau the crossing lies beyond the horizon and
/// the sentinel is returned.
pub fn match_sprime(source: &dyn CurveSource, s: u32, tau: u32) -> Result<SPrime> {
    if s == 0 || s > tau {
        return Err(SurvError::Config(format!(
            "need 1 <= s <= tau, got s {s}, tau {tau}"
        )));
    }
    let (high, _, target) = direction(source, s)?;
    let mut best_u = 1;
    let mut best_gap = f64::INFINITY;
    let mut surv = 1.0;
    for u in 1..=tau {
        if u > 1 {
            surv *= source.p_untreated(u - 1, high)?;
        }
        let gap = (surv - target).abs();
        if gap < best_gap {
            best_gap = gap;
            best_u = u;
        }
    }
    // `surv` is now S_high(tau); still above the target means the curve
    // has not crossed within the horizon
    if surv > target {
        Ok(SPrime::BeyondTau)
    } else {
        Ok(SPrime::Within(best_u))
    }
}

/// substrata output: shares, matched period, and the stratum-conditional
/// effects (assembled by the effects module).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrataEstimates {
    pub s: u32,
    pub tau: u32,
    pub probs: SubstrataProbs,
    pub s_prime: SPrime,
    /// untreated survival past tau among always-survivors, lower regime
    pub beta0_as: f64,
    /// regime contrast of untreated survival past tau among always-survivors
    pub beta_z_as: f64,
    /// treatment-at-s effect among always-survivors, lower regime
    pub beta_s_as: Option<f64>,
    /// interaction effect per compliant survivor; requires the treated
    /// strata and a non-degenerate cs share
    pub beta_zs_cs: Option<f64>,
    /// true when pr_cs is positive (complier quantities defined)
    pub complier_defined: bool,
    /// true when pr_cs sits below the instability floor
    pub cs_unstable: bool,
}
