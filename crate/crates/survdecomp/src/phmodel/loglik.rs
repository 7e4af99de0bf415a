//! public log-likelihood entry points. these rebuild the collapsed
//! statistics on every call; `fit` keeps its own copy so the optimizer
//! never pays the collapse twice.

use super::suffstat::{eval, SuffStats};
use super::HazardParams;
use crate::error::{Result, SurvError};
use crate::spells::Dataset;

fn check_dims(params: &HazardParams, dataset: &Dataset) -> Result<()> {
    if params.n_covariates() != dataset.covariate_names.len() {
        return Err(SurvError::Config(format!(
            "parameter set expects {} covariates, dataset has {}",
            params.n_covariates(),
            dataset.covariate_names.len()
        )));
    }
    Ok(())
}

/// joint log-likelihood of the exit and treatment processes.
pub fn log_likelihood(params: &HazardParams, dataset: &Dataset) -> Result<f64> {
    check_dims(params, dataset)?;
    let stats = SuffStats::build(dataset, &params.exit_spec, &params.treat_spec);
    Ok(eval(&stats, params).0)
}

/// log-likelihood together with its analytic gradient in packed order
/// (see [`HazardParams::pack`]).
pub fn log_likelihood_gradient(params: &HazardParams, dataset: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_dims(params, dataset)?;
    let stats = SuffStats::build(dataset, &params.exit_spec, &params.treat_spec);
    Ok(eval(&stats, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phmodel::PiecewiseSpec;
    use crate::spells::{Dataset, SpellRecord};

    #[test]
    fn likelihood_is_invariant_to_record_order() {
        let recs: Vec<SpellRecord> = (0..20)
            .map(|i| SpellRecord {
                id: format!("r{i}"),
                regime: (i % 2) as u8,
                treat_time: if i % 3 == 0 { Some(1.0 + (i % 5) as f64) } else { None },
                exit_time: if i % 4 == 0 { None } else { Some(6.0 + (i % 7) as f64) },
                censor_time: if i % 4 == 0 { Some(9.0) } else { None },
                covariates: vec![f64::from(u8::from(i % 2 == 0))],
            })
            .map(|mut r| {
                if let (Some(s), Some(e)) = (r.treat_time, r.exit_time) {
                    if s > e {
                        r.treat_time = Some(e);
                    }
                }
                r
            })
            .collect();
        let names = vec!["even".to_string()];
        let forward = Dataset::new(recs.clone(), names.clone()).unwrap();
        let mut rev = recs;
        rev.reverse();
        let reversed = Dataset::new(rev, names).unwrap();

        let spec = PiecewiseSpec::equal_width(4.0, 3).unwrap();
        let mut params = HazardParams::zeroed(spec.clone(), spec, 1);
        let theta: Vec<f64> = (0..params.n_params()).map(|i| -2.0 + 0.1 * i as f64).collect();
        params = params.with_packed(&theta);

        let a = log_likelihood(&params, &forward).unwrap();
        let b = log_likelihood(&params, &reversed).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn covariate_width_mismatch_is_a_config_error() {
        let data = Dataset::new(
            vec![SpellRecord {
                id: "a".into(),
                regime: 0,
                treat_time: None,
                exit_time: Some(2.0),
                censor_time: None,
                covariates: vec![],
            }],
            vec![],
        )
        .unwrap();
        let spec = PiecewiseSpec::equal_width(5.0, 1).unwrap();
        let params = HazardParams::zeroed(spec.clone(), spec, 2);
        assert!(matches!(
            log_likelihood(&params, &data),
            Err(SurvError::Config(_))
        ));
    }
}
