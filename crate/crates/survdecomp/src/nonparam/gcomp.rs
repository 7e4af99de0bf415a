//! plug-in g-computation decomposition of the regime effect on survival.
//!
//! all quantities are products of per-period conditional probabilities
//! from a [`CurveSource`]. writing S_z(u) for the untreated survival
//! product and q_z(t) for the treatment probability:
//!
//! * `beta0`: untreated survival past tau in regime 0.
//! * `beta_z`: regime-1 minus regime-0 untreated survival past tau.
//! * `beta_s`: survival past tau when treated in period s under regime 0,
//!   minus `beta0`; the treated path couples the untreated prefix through
//!   s-1 with the treated-at-s stratum from s onward.
//! * `beta_zs`: the regime-1 analogue of `beta_s` minus `beta_s` itself.
//! * treatment-time masses `Pr(S^z = s)`: treatment probability in s times
//!   the probability of escaping treatment while alive through s-1.
//!
//! interval aggregates weight the per-s effects by the masses of the
//! weighting regime, normalized to sum 1 over s in (0, s_bar].

use crate::error::{Result, SurvError};
use crate::nonparam::{CellPolicy, CurveSource, EmpiricalSource};
use crate::spells::riskset::build_risk_sets;
use crate::spells::DiscreteDataset;
use serde::{Deserialize, Serialize};

/// per-treatment-time estimates. `mass[z]` is the estimated probability of
/// treatment occurring in period s under regime z; effects are `None` when
/// no subject enters the stratum and its weight is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcompPerS {
    pub s: u32,
    pub mass: [f64; 2],
    pub beta_s: Option<f64>,
    pub beta_zs: Option<f64>,
}

/// g-computation decomposition output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcompEstimates {
    pub tau: u32,
    pub s_bar: u32,
    /// regime whose treatment-time distribution weights the aggregates
    pub weight_regime: u8,
    pub beta0: f64,
    pub beta_z: f64,
    pub per_s: Vec<GcompPerS>,
    /// mass-weighted average of `beta_s` over s in (0, s_bar]; `None` when
    /// the weighting regime has no treatment mass there
    pub beta_interval: Option<f64>,
    pub beta_z_interval: Option<f64>,
    /// false when the data contain no treated spells at all
    pub treated_effects_available: bool,
    /// true when carry-forward bridged at least one empty cell
    pub carried_cells: bool,
}

impl GcompEstimates {
    /// total treatment probability by s_bar under regime z.
    pub fn cumulative_mass(&self, z: u8) -> f64 {
        self.per_s.iter().map(|p| p.mass[z as usize]).sum()
    }

    /// contrast of cumulative treatment probabilities by s_bar, baseline
    /// regime minus the other.
    pub fn alpha_z(&self, baseline_regime: u8) -> f64 {
        let b = baseline_regime as usize;
        self.cumulative_mass(b as u8) - self.cumulative_mass((1 - b) as u8)
    }
}

/// runs the decomposition on a discretized dataset.
pub fn gcomp_decomposition(
    dataset: &DiscreteDataset,
    s_bar: u32,
    tau: u32,
    weight_regime: u8,
    policy: CellPolicy,
) -> Result<GcompEstimates> {
    let table = build_risk_sets(dataset);
    let source = EmpiricalSource::new(&table, policy);
    gcomp_from_source(&source, s_bar, tau, weight_regime)
}

/// decomposition over any probability source (empirical or model-based).
pub fn gcomp_from_source(
    source: &dyn CurveSource,
    s_bar: u32,
    tau: u32,
    weight_regime: u8,
) -> Result<GcompEstimates> {
    if s_bar == 0 || s_bar > tau {
        return Err(SurvError::Config(format!(
            "need 1 <= s_bar <= tau, got s_bar {s_bar}, tau {tau}"
        )));
    }
    if weight_regime > 1 {
        return Err(SurvError::Config(format!(
            "weight regime must be 0 or 1, got {weight_regime}"
        )));
    }

    // untreated survival prefixes: prefix[z][u] = P(T >= u+1) over 1..=u
    let mut prefix = [vec![1.0f64], vec![1.0f64]];
    // treatment masses and escape products per regime
    let mut mass = [vec![0.0f64; s_bar as usize + 1], vec![0.0f64; s_bar as usize + 1]];
    for z in 0..2u8 {
        let mut escape = 1.0;
        for t in 1..=tau {
            let p = source.p_untreated(t, z)?;
            let prev = *prefix[z as usize].last().unwrap();
            prefix[z as usize].push(prev * p);
            if t <= s_bar {
                let q = source.q_treatment(t, z)?;
                mass[z as usize][t as usize] = q * escape;
                escape *= 1.0 - q;
            }
        }
    }
    let full0 = prefix[0][tau as usize];
    let full1 = prefix[1][tau as usize];

    let treated_path = |z: u8, s: u32| -> Result<f64> {
        let mut prod = prefix[z as usize][(s - 1) as usize];
        for t in s..=tau {
            prod *= source.p_treated(t, z, s)?;
        }
        Ok(prod)
    };

    let mut per_s = Vec::with_capacity(s_bar as usize);
    for s in 1..=s_bar {
        let m = [mass[0][s as usize], mass[1][s as usize]];
        let weighted = m[weight_regime as usize] > 0.0;
        let beta_s = if weighted || source.has_stratum(0, s) {
            Some(treated_path(0, s)? - full0)
        } else {
            None
        };
        let beta_zs = match beta_s {
            Some(bs) if weighted || source.has_stratum(1, s) => {
                Some(treated_path(1, s)? - full1 - bs)
            }
            _ => None,
        };
        per_s.push(GcompPerS {
            s,
            mass: m,
            beta_s,
            beta_zs,
        });
    }

    let wsum: f64 = per_s.iter().map(|p| p.mass[weight_regime as usize]).sum();
    let (beta_interval, beta_z_interval) = if wsum > 0.0 {
        let mut bi = 0.0;
        let mut bzi = 0.0;
        for p in &per_s {
            let w = p.mass[weight_regime as usize];
            if w > 0.0 {
                bi += w * p.beta_s.expect("weighted stratum computed");
                bzi += w * p.beta_zs.expect("weighted stratum computed");
            }
        }
        (Some(bi / wsum), Some(bzi / wsum))
    } else {
        (None, None)
    };

    let treated_effects_available = per_s
        .iter()
        .any(|p| p.beta_s.is_some() || p.mass[0] > 0.0 || p.mass[1] > 0.0);

    Ok(GcompEstimates {
        tau,
        s_bar,
        weight_regime,
        beta0: full0,
        beta_z: full1 - full0,
        per_s,
        beta_interval,
        beta_z_interval,
        treated_effects_available,
        carried_cells: source.carried(),
    })
}
