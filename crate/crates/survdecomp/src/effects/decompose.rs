//! the effect table: never-treated levels, regime effects, per-period
//! treatment effects and interactions, interval aggregates, and the
//! regime effect on treatment take-up, all with delta-method inference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::weights::{collect_patterns, raw_weight_row, PatternSet};
use super::EffectEstimate;
use crate::error::{Result, SurvError};
use crate::phmodel::{
    cumulative_treatment_hazard, predict_survival, FitResult, HazardParams, TreatmentPath,
};
use crate::spells::Dataset;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecomposeOptions {
    /// regime whose treatment process drives the weights
    pub weight_regime: u8,
    /// baseline regime b of the take-up contrast: alpha_z = F_b - F_{1-b}
    /// evaluated at s_bar
    pub alpha_baseline: u8,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            weight_regime: 1,
            alpha_baseline: 0,
        }
    }
}

/// treatment-period row of the effect table. `mass` is the normalized
/// weight of the period within (0, s_bar].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerTimeEffect {
    pub s: u32,
    pub mass: f64,
    pub beta_s: EffectEstimate,
    pub beta_zs: EffectEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub s_bar: u32,
    pub tau: u32,
    pub weight_regime: u8,
    pub alpha_baseline: u8,
    /// never-treated survival past tau under regime 0
    pub beta0: EffectEstimate,
    /// regime effect on never-treated survival
    pub beta_z: EffectEstimate,
    /// treatment effect aggregated over (0, s_bar], regime 0
    pub beta_interval: EffectEstimate,
    /// regime-treatment interaction aggregated over (0, s_bar]
    pub beta_z_interval: EffectEstimate,
    /// regime effect on the probability of treatment by s_bar
    pub alpha_z: EffectEstimate,
    pub per_s: Vec<PerTimeEffect>,
    pub n_spells: usize,
}

struct EffectConfig {
    s_bar: u32,
    tau: u32,
    weight_regime: u8,
    alpha_baseline: u8,
}

/// all point effects stacked in a fixed order:
/// [beta0, beta_z, beta_interval, beta_z_interval, alpha_z,
///  beta_s(1..=s_bar), beta_zs(1..=s_bar)], plus the period masses.
struct EffectPoint {
    stacked: Vec<f64>,
    masses: Vec<f64>,
}

fn effect_point(params: &HazardParams, pats: &PatternSet, cfg: &EffectConfig) -> Result<EffectPoint> {
    let tau = f64::from(cfg.tau);
    let n_pat = pats.patterns.len();
    let s_bar = cfg.s_bar as usize;

    let mut surv_never = [vec![0.0; n_pat], vec![0.0; n_pat]];
    for (pat, x) in pats.patterns.iter().enumerate() {
        for z in 0..2u8 {
            surv_never[z as usize][pat] =
                predict_survival(params, x, z, TreatmentPath::Never, 0.0, tau)?;
        }
    }

    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(s_bar);
    for s in 1..=cfg.s_bar {
        raw.push(raw_weight_row(params, pats, cfg.weight_regime, s)?);
    }
    let total: f64 = raw.iter().flatten().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SurvError::ZeroWeights { period: cfg.s_bar });
    }

    // pattern marginal of the interval weights, used for every effect
    // that does not single out a treatment period
    let vbar: Vec<f64> = (0..n_pat)
        .map(|pat| raw.iter().map(|row| row[pat]).sum::<f64>() / total)
        .collect();

    let beta0: f64 = vbar.iter().zip(&surv_never[0]).map(|(w, s)| w * s).sum();
    let beta_z: f64 = vbar
        .iter()
        .enumerate()
        .map(|(pat, w)| w * (surv_never[1][pat] - surv_never[0][pat]))
        .sum();

    let mut masses = Vec::with_capacity(s_bar);
    let mut beta_s_all = Vec::with_capacity(s_bar);
    let mut beta_zs_all = Vec::with_capacity(s_bar);
    let mut beta_interval = 0.0;
    let mut beta_z_interval = 0.0;
    for (row, s) in raw.iter().zip(1..=cfg.s_bar) {
        let mass_raw: f64 = row.iter().sum();
        let mass = mass_raw / total;
        masses.push(mass);
        let mut beta_s = 0.0;
        let mut beta_zs = 0.0;
        if mass_raw > 0.0 {
            for (pat, x) in pats.patterns.iter().enumerate() {
                let w = row[pat] / mass_raw;
                let treat0 =
                    predict_survival(params, x, 0, TreatmentPath::At(f64::from(s)), 0.0, tau)?;
                let treat1 =
                    predict_survival(params, x, 1, TreatmentPath::At(f64::from(s)), 0.0, tau)?;
                let eff0 = treat0 - surv_never[0][pat];
                let eff1 = treat1 - surv_never[1][pat];
                beta_s += w * eff0;
                beta_zs += w * (eff1 - eff0);
            }
        }
        beta_s_all.push(beta_s);
        beta_zs_all.push(beta_zs);
        beta_interval += mass * beta_s;
        beta_z_interval += mass * beta_zs;
    }

    let b = cfg.alpha_baseline;
    let mut alpha_z = 0.0;
    for (pat, x) in pats.patterns.iter().enumerate() {
        let take = |z: u8| -> Result<f64> {
            Ok(1.0 - (-cumulative_treatment_hazard(params, x, z, f64::from(cfg.s_bar))?).exp())
        };
        alpha_z += vbar[pat] * (take(b)? - take(1 - b)?);
    }

    let mut stacked = vec![beta0, beta_z, beta_interval, beta_z_interval, alpha_z];
    stacked.extend_from_slice(&beta_s_all);
    stacked.extend_from_slice(&beta_zs_all);
    Ok(EffectPoint { stacked, masses })
}

/// step size for differentiating effect functionals.
fn effect_step(theta: f64) -> f64 {
    (1e-6_f64).max(1e-6 * theta.abs())
}

fn covariance_matrix(fit: &FitResult) -> DMatrix<f64> {
    let n = fit.covariance.len();
    DMatrix::from_fn(n, n, |i, j| fit.covariance[i][j])
}

/// full causal decomposition at horizon tau for treatment periods
/// (0, s_bar]. standard errors differentiate each effect through both the
/// predictions and the weights.
pub fn decompose(
    fit: &FitResult,
    dataset: &Dataset,
    s_bar: u32,
    tau: u32,
    opts: &DecomposeOptions,
) -> Result<DecompositionResult> {
    if s_bar < 1 || tau < s_bar {
        return Err(SurvError::Config(format!(
            "need 1 <= s_bar <= tau, got s_bar {s_bar}, tau {tau}"
        )));
    }
    if opts.weight_regime > 1 || opts.alpha_baseline > 1 {
        return Err(SurvError::Config("regime switches must be 0 or 1".into()));
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
        return Err(SurvError::ZeroWeights { period: s_bar });
    }
    let cfg = EffectConfig {
        s_bar,
        tau,
        weight_regime: opts.weight_regime,
        alpha_baseline: opts.alpha_baseline,
    };

    let point = effect_point(&fit.params, &pats, &cfg)?;
    let n_effects = point.stacked.len();

    // jacobian of the stacked effect vector in packed-parameter order
    let theta = fit.params.pack();
    let mut jac = DMatrix::<f64>::zeros(n_effects, theta.len());
    for i in 0..theta.len() {
        let h = effect_step(theta[i]);
        let mut up = theta.clone();
        up[i] += h;
        let mut dn = theta.clone();
        dn[i] -= h;
        let pu = effect_point(&fit.params.with_packed(&up), &pats, &cfg)?;
        let pd = effect_point(&fit.params.with_packed(&dn), &pats, &cfg)?;
        for r in 0..n_effects {
            let d = (pu.stacked[r] - pd.stacked[r]) / (2.0 * h);
            if !d.is_finite() {
                return Err(SurvError::Estimation(format!(
                    "non-finite effect gradient at parameter {i}"
                )));
            }
            jac[(r, i)] = d;
        }
    }

    let sigma = covariance_matrix(fit);
    let ses: Vec<f64> = (0..n_effects)
        .map(|r| {
            let g = jac.row(r).transpose();
            (&sigma * &g).dot(&g).max(0.0).sqrt()
        })
        .collect();

    let est = |ix: usize| EffectEstimate::new(point.stacked[ix], ses[ix]);
    let per_s = (0..s_bar as usize)
        .map(|k| PerTimeEffect {
            s: k as u32 + 1,
            mass: point.masses[k],
            beta_s: est(5 + k),
            beta_zs: est(5 + s_bar as usize + k),
        })
        .collect();

    Ok(DecompositionResult {
        s_bar,
        tau,
        weight_regime: opts.weight_regime,
        alpha_baseline: opts.alpha_baseline,
        beta0: est(0),
        beta_z: est(1),
        beta_interval: est(2),
        beta_z_interval: est(3),
        alpha_z: est(4),
        per_s,
        n_spells: dataset.records.len(),
    })
}

/// delta-method inference for an arbitrary scalar functional of the
/// parameters: value, standard error sqrt(g' Sigma g), and two-sided
/// normal p-value.
pub fn delta_se<F>(fit: &FitResult, functional: F) -> Result<EffectEstimate>
where
    F: Fn(&HazardParams) -> Result<f64>,
{
    let value = functional(&fit.params)?;
    let theta = fit.params.pack();
    let mut grad = DVector::<f64>::zeros(theta.len());
    for i in 0..theta.len() {
        let h = effect_step(theta[i]);
        let mut up = theta.clone();
        up[i] += h;
        let mut dn = theta.clone();
        dn[i] -= h;
        let d = (functional(&fit.params.with_packed(&up))? - functional(&fit.params.with_packed(&dn))?)
            / (2.0 * h);
        if !d.is_finite() {
            return Err(SurvError::Estimation(format!(
                "non-finite gradient of the effect functional at parameter {i}"
            )));
        }
        grad[i] = d;
    }
    let sigma = covariance_matrix(fit);
    let se = (&sigma * &grad).dot(&grad).max(0.0).sqrt();
    Ok(EffectEstimate::new(value, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phmodel::{fit, FitOptions, PiecewiseSpec};
    use crate::spells::{Dataset, SpellRecord};

    fn rec(id: String, z: u8, s: Option<f64>, exit: Option<f64>, cens: Option<f64>, x: Vec<f64>) -> SpellRecord {
        SpellRecord {
            id,
            regime: z,
            treat_time: s,
            exit_time: exit,
            censor_time: cens,
            covariates: x,
        }
    }

    /// panel with events in every cell of a single-segment spec.
    fn panel(n: usize) -> Dataset {
        let recs: Vec<SpellRecord> = (0..n)
            .map(|i| {
                let z = (i % 2) as u8;
                let exit = 1.0 + (i % 10) as f64;
                let s = if i % 3 == 0 { Some(1.0 + (i % 4) as f64) } else { None };
                let s = s.filter(|v| *v <= exit);
                rec(format!("r{i}"), z, s, Some(exit), None, vec![])
            })
            .collect();
        Dataset::new(recs, vec![]).unwrap()
    }

    fn fitted(n: usize) -> (FitResult, Dataset) {
        let data = panel(n);
        let spec = PiecewiseSpec::equal_width(30.0, 1).unwrap();
        let fr = fit(&data, spec.clone(), spec, &FitOptions::default()).unwrap();
        (fr, data)
    }

    #[test]
    fn interval_aggregate_is_the_mass_weighted_sum() {
        let (fr, data) = fitted(60);
        let d = decompose(&fr, &data, 4, 8, &DecomposeOptions::default()).unwrap();
        let mass_total: f64 = d.per_s.iter().map(|p| p.mass).sum();
        assert!((mass_total - 1.0).abs() < 1e-10);
        let agg: f64 = d.per_s.iter().map(|p| p.mass * p.beta_s.value).sum();
        assert!((agg - d.beta_interval.value).abs() < 1e-10);
        let agg_z: f64 = d.per_s.iter().map(|p| p.mass * p.beta_zs.value).sum();
        assert!((agg_z - d.beta_z_interval.value).abs() < 1e-10);
    }

    #[test]
    fn null_treatment_gives_zero_treated_effects() {
        let (mut fr, data) = fitted(60);
        // force the treated exit baseline to equal the untreated one
        for seg in &mut fr.params.log_exit {
            seg[0][1] = seg[0][0];
            seg[1][1] = seg[1][0];
        }
        let d = decompose(&fr, &data, 3, 8, &DecomposeOptions::default()).unwrap();
        assert!(d.beta_interval.value.abs() < 1e-12);
        assert!(d.beta_z_interval.value.abs() < 1e-12);
        for p in &d.per_s {
            assert!(p.beta_s.value.abs() < 1e-12);
            assert!(p.beta_zs.value.abs() < 1e-12);
        }
    }

    #[test]
    fn regime_symmetric_parameters_give_zero_regime_effects() {
        let (mut fr, data) = fitted(60);
        for seg in &mut fr.params.log_exit {
            seg[1] = seg[0];
        }
        for seg in &mut fr.params.log_treat {
            seg[1] = seg[0];
        }
        let d = decompose(&fr, &data, 3, 8, &DecomposeOptions::default()).unwrap();
        assert!(d.beta_z.value.abs() < 1e-12);
        assert!(d.alpha_z.value.abs() < 1e-12);
        assert!(d.beta_z_interval.value.abs() < 1e-12);
    }

    #[test]
    fn effects_are_probability_shaped() {
        let (fr, data) = fitted(80);
        let d = decompose(&fr, &data, 5, 10, &DecomposeOptions::default()).unwrap();
        assert!(d.beta0.value >= 0.0 && d.beta0.value <= 1.0);
        let treated_level = d.beta0.value + d.beta_z.value;
        assert!((0.0..=1.0).contains(&treated_level));
        assert!(d.beta0.std_error >= 0.0);
        assert!(d.beta_z.std_error >= 0.0);
        assert!((0.0..=1.0).contains(&d.beta0.p_value));
    }

    #[test]
    fn delta_se_is_exact_for_linear_functionals() {
        let (fr, _) = fitted(60);
        // c'theta with c selecting two parameters
        let est = delta_se(&fr, |p: &HazardParams| {
            let th = p.pack();
            Ok(2.0 * th[0] - th[3])
        })
        .unwrap();
        let want = (4.0 * fr.covariance[0][0] + fr.covariance[3][3] - 4.0 * fr.covariance[0][3])
            .max(0.0)
            .sqrt();
        assert!((est.std_error - want).abs() < 1e-6 * (1.0 + want));
    }

    #[test]
    fn delta_se_of_a_constant_is_zero() {
        let (fr, _) = fitted(60);
        let est = delta_se(&fr, |_| Ok(0.75)).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.value, 0.75);
    }

    #[test]
    fn domain_checks() {
        let (fr, data) = fitted(60);
        assert!(decompose(&fr, &data, 0, 8, &DecomposeOptions::default()).is_err());
        assert!(decompose(&fr, &data, 9, 8, &DecomposeOptions::default()).is_err());
        let bad = DecomposeOptions { weight_regime: 2, alpha_baseline: 0 };
        assert!(decompose(&fr, &data, 3, 8, &bad).is_err());
    }
}
