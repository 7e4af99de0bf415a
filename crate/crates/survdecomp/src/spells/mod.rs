//! spell-level data model: one record per subject carrying the regime
//! indicator, an optional treatment time, exactly one terminal event (exit
//! or censoring), and a fixed-width vector of binary covariates.
//!
//! times are positive reals in arbitrary units; [`discretize`] maps them
//! onto an integer period grid (period = ceil(time / unit)), after which
//! the risk-set machinery in [`riskset`] applies. conventions throughout:
//! treatment occurring in the same period as the terminal event precedes
//! it, and a record censored in period t counts as surviving period t.

pub mod io;
pub mod riskset;

use crate::error::{Result, SurvError};
use serde::{Deserialize, Serialize};

/// one subject's spell, times in the raw units of the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpellRecord {
    pub id: String,
    /// assignment regime, 0 or 1
    pub regime: u8,
    /// time of treatment onset, if treated while under observation
    pub treat_time: Option<f64>,
    /// time of the terminal exit event; mutually exclusive with `censor_time`
    pub exit_time: Option<f64>,
    /// right-censoring time; mutually exclusive with `exit_time`
    pub censor_time: Option<f64>,
    /// binary covariate values, same length and order for every record
    pub covariates: Vec<f64>,
}

impl SpellRecord {
    /// terminal time (exit or censor), assuming the record is validated.
    pub fn terminal_time(&self) -> f64 {
        self.exit_time.or(self.censor_time).unwrap_or(f64::NAN)
    }

    /// checks record-level invariants; returns the violation text if any.
    pub fn violation(&self, expected_covariates: usize) -> Option<String> {
        if self.regime > 1 {
            return Some(format!("regime must be 0 or 1, got {}", self.regime));
        }
        match (self.exit_time, self.censor_time) {
            (None, None) => return Some("neither exit nor censor time present".into()),
            (Some(_), Some(_)) => return Some("both exit and censor time present".into()),
            _ => {}
        }
        let terminal = self.terminal_time();
        if !(terminal > 0.0) || !terminal.is_finite() {
            return Some(format!("terminal time must be positive, got {terminal}"));
        }
        if let Some(s) = self.treat_time {
            if !(s > 0.0) || !s.is_finite() {
                return Some(format!("treatment time must be positive, got {s}"));
            }
            if s > terminal {
                return Some("treatment after terminal event".into());
            }
        }
        if self.covariates.len() != expected_covariates {
            return Some(format!(
                "expected {} covariates, got {}",
                expected_covariates,
                self.covariates.len()
            ));
        }
        if let Some(bad) = self.covariates.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Some(format!("covariate value {bad} is not a binary indicator"));
        }
        None
    }
}

/// validated collection of spells with a shared covariate layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub(crate) records: Vec<SpellRecord>,
    pub(crate) covariate_names: Vec<String>,
}

impl Dataset {
    /// builds a dataset, validating every record. fails on the first
    /// violation; use [`io::load_spells`] for collect-and-report loading.
    pub fn new(records: Vec<SpellRecord>, covariate_names: Vec<String>) -> Result<Self> {
        let width = covariate_names.len();
        for r in &records {
            if let Some(reason) = r.violation(width) {
                return Err(SurvError::BadRecord {
                    id: r.id.clone(),
                    detail: reason,
                });
            }
        }
        Ok(Dataset {
            records,
            covariate_names,
        })
    }

    pub fn records(&self) -> &[SpellRecord] {
        &self.records
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// period grid for discretization: period k covers time ((k-1)*unit, k*unit].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub unit: f64,
    pub horizon: u32,
}

impl TimeGrid {
    pub fn new(unit: f64, horizon: u32) -> Result<Self> {
        if !(unit > 0.0) || !unit.is_finite() {
            return Err(SurvError::Config(format!(
                "grid unit must be positive, got {unit}"
            )));
        }
        if horizon == 0 {
            return Err(SurvError::Config("grid horizon must be at least 1".into()));
        }
        Ok(TimeGrid { unit, horizon })
    }

    /// maps a positive time to its period index (1-based).
    pub fn period_of(&self, time: f64) -> u32 {
        (time / self.unit).ceil() as u32
    }
}

/// spell with times resolved to integer periods on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSpell {
    pub id: String,
    pub regime: u8,
    pub treat_period: Option<u32>,
    pub exit_period: Option<u32>,
    pub censor_period: Option<u32>,
    pub covariates: Vec<f64>,
}

impl DiscreteSpell {
    pub fn terminal_period(&self) -> u32 {
        self.exit_period.or(self.censor_period).unwrap_or(0)
    }
}

/// dataset mapped onto a period grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDataset {
    pub grid: TimeGrid,
    pub(crate) spells: Vec<DiscreteSpell>,
    pub(crate) covariate_names: Vec<String>,
}

impl DiscreteDataset {
    pub fn spells(&self) -> &[DiscreteSpell] {
        &self.spells
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn len(&self) -> usize {
        self.spells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spells.is_empty()
    }

    /// re-expresses periods as times in period units, for estimators that
    /// work in continuous time. the mapping is the identity on period data.
    pub fn to_continuous(&self) -> Dataset {
        let records = self
            .spells
            .iter()
            .map(|s| SpellRecord {
                id: s.id.clone(),
                regime: s.regime,
                treat_time: s.treat_period.map(f64::from),
                exit_time: s.exit_period.map(f64::from),
                censor_time: s.censor_period.map(f64::from),
                covariates: s.covariates.clone(),
            })
            .collect();
        Dataset {
            records,
            covariate_names: self.covariate_names.clone(),
        }
    }
}

/// maps every time in the dataset to its grid period. monotone in the
/// input times; a time landing exactly on a boundary belongs to the period
/// it closes. times beyond `grid.horizon * grid.unit` are an error naming
/// the record.
pub fn discretize(dataset: &Dataset, grid: TimeGrid) -> Result<DiscreteDataset> {
    let mut spells = Vec::with_capacity(dataset.len());
    for r in dataset.records() {
        let map_time = |t: f64| -> Result<u32> {
            let p = grid.period_of(t);
            if p > grid.horizon {
                Err(SurvError::BadRecord {
                    id: r.id.clone(),
                    detail: format!(
                        "time {t} maps to period {p}, beyond grid horizon {}",
                        grid.horizon
                    ),
                })
            } else {
                Ok(p)
            }
        };
        spells.push(DiscreteSpell {
            id: r.id.clone(),
            regime: r.regime,
            treat_period: r.treat_time.map(map_time).transpose()?,
            exit_period: r.exit_time.map(map_time).transpose()?,
            censor_period: r.censor_time.map(map_time).transpose()?,
            covariates: r.covariates.clone(),
        });
    }
    Ok(DiscreteDataset {
        grid,
        spells,
        covariate_names: dataset.covariate_names().to_vec(),
    })
}

/// builds a discrete dataset directly from period data (periods must
/// already satisfy the record invariants).
pub fn from_periods(
    spells: Vec<DiscreteSpell>,
    covariate_names: Vec<String>,
    grid: TimeGrid,
) -> Result<DiscreteDataset> {
    for s in &spells {
        let rec = SpellRecord {
            id: s.id.clone(),
            regime: s.regime,
            treat_time: s.treat_period.map(f64::from),
            exit_time: s.exit_period.map(f64::from),
            censor_time: s.censor_period.map(f64::from),
            covariates: s.covariates.clone(),
        };
        if let Some(reason) = rec.violation(covariate_names.len()) {
            return Err(SurvError::BadRecord {
                id: s.id.clone(),
                detail: reason,
            });
        }
        if s.terminal_period() > grid.horizon {
            return Err(SurvError::BadRecord {
                id: s.id.clone(),
                detail: format!(
                    "terminal period {} beyond grid horizon {}",
                    s.terminal_period(),
                    grid.horizon
                ),
            });
        }
    }
    Ok(DiscreteDataset {
        grid,
        spells,
        covariate_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, z: u8, s: Option<f64>, exit: Option<f64>, cens: Option<f64>) -> SpellRecord {
        SpellRecord {
            id: id.into(),
            regime: z,
            treat_time: s,
            exit_time: exit,
            censor_time: cens,
            covariates: vec![],
        }
    }

    #[test]
    fn boundary_time_closes_its_period() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        assert_eq!(grid.period_of(3.1), 2);
        assert_eq!(grid.period_of(4.0), 2);
        assert_eq!(grid.period_of(4.0001), 3);
    }

    #[test]
    fn unit_one_is_identity_on_integer_times() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        for t in 1..=100u32 {
            assert_eq!(grid.period_of(f64::from(t)), t);
        }
    }

    #[test]
    fn rejects_treatment_after_terminal() {
        let r = rec("a", 0, Some(5.0), Some(3.0), None);
        assert_eq!(
            r.violation(0).as_deref(),
            Some("treatment after terminal event")
        );
    }

    #[test]
    fn rejects_double_or_missing_terminal() {
        assert!(rec("a", 0, None, Some(3.0), Some(4.0)).violation(0).is_some());
        assert!(rec("a", 0, None, None, None).violation(0).is_some());
        assert!(rec("a", 0, None, Some(3.0), None).violation(0).is_none());
    }

    #[test]
    fn treatment_equal_to_exit_is_valid() {
        assert!(rec("a", 1, Some(3.0), Some(3.0), None).violation(0).is_none());
    }

    #[test]
    fn discretize_errors_beyond_horizon() {
        let ds = Dataset::new(vec![rec("late", 0, None, Some(25.0), None)], vec![]).unwrap();
        let err = discretize(&ds, TimeGrid::new(1.0, 20).unwrap()).unwrap_err();
        assert!(err.to_string().contains("late"));
    }

    #[test]
    fn non_binary_covariate_is_a_violation() {
        let mut r = rec("a", 0, None, Some(3.0), None);
        r.covariates = vec![0.5];
        assert!(r.violation(1).unwrap().contains("binary"));
    }
}
