//! nonparametric estimation: product-limit survival curves and the
//! period-level conditional probabilities feeding the plug-in
//! decomposition and substrata quantities.
//!
//! all estimators consume a [`CurveSource`]: a provider of per-period
//! conditional probabilities. [`EmpiricalSource`] backs it with risk-set
//! counts; the model route supplies fitted analogues of the same
//! quantities, so the downstream algebra is written once.

pub mod gcomp;
pub mod substrata;

pub use gcomp::{gcomp_decomposition, GcompEstimates, GcompPerS};
pub use substrata::{match_sprime, substrata_probabilities, SPrime, SubstrataEstimates, SubstrataProbs};

use crate::error::{Result, StratumLabel, SurvError};
use crate::spells::riskset::{build_risk_sets, RiskSetTable};
use crate::spells::DiscreteDataset;
use serde::{Deserialize, Serialize};
use std::cell::{Cell, RefCell};
use std::collections::HashMap;

/// what to do when a conditional probability has an empty risk set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CellPolicy {
    /// fail with the offending (period, regime, stratum)
    #[default]
    Error,
    /// reuse the last estimable value of the same probability stream and
    /// flag the output
    CarryForward,
}

/// per-period conditional probabilities for the exit and treatment
/// processes. `t` is 1-based; period-0 factors are identically 1 and are
/// not represented.
pub trait CurveSource {
    /// probability of surviving period t given untreated, alive, and under
    /// observation entering t, in regime z
    fn p_untreated(&self, t: u32, z: u8) -> Result<f64>;
    /// same, within the stratum treated in period s (defined for t >= s)
    fn p_treated(&self, t: u32, z: u8, s: u32) -> Result<f64>;
    /// probability of treatment in period t given untreated and alive
    /// entering t, in regime z
    fn q_treatment(&self, t: u32, z: u8) -> Result<f64>;
    /// whether any subject enters the treated-at-s stratum in regime z
    fn has_stratum(&self, z: u8, s: u32) -> bool;
    /// true if any empty cell was bridged by carry-forward so far
    fn carried(&self) -> bool {
        false
    }
}

#[derive(Hash, PartialEq, Eq, Clone, Copy)]
enum StreamKey {
    Untreated(u8),
    Treated(u8, u32),
    Treatment(u8),
}

/// risk-set-backed probability source with a configurable empty-cell
/// policy. carry-forward memory is per probability stream (fixed regime
/// and stratum), so products must visit periods in ascending order.
pub struct EmpiricalSource<'a> {
    table: &'a RiskSetTable,
    policy: CellPolicy,
    carried: Cell<bool>,
    last: RefCell<HashMap<StreamKey, f64>>,
}

impl<'a> EmpiricalSource<'a> {
    pub fn new(table: &'a RiskSetTable, policy: CellPolicy) -> Self {
        EmpiricalSource {
            table,
            policy,
            carried: Cell::new(false),
            last: RefCell::new(HashMap::new()),
        }
    }

    pub fn table(&self) -> &RiskSetTable {
        self.table
    }

    fn resolve(
        &self,
        key: StreamKey,
        numerator: u64,
        denominator: u64,
        fallback: f64,
        cell: (u32, u8, StratumLabel),
    ) -> Result<f64> {
        if denominator == 0 {
            match self.policy {
                CellPolicy::Error => Err(SurvError::EmptyCell {
                    period: cell.0,
                    regime: cell.1,
                    stratum: cell.2,
                }),
                CellPolicy::CarryForward => {
                    self.carried.set(true);
                    Ok(*self.last.borrow().get(&key).unwrap_or(&fallback))
                }
            }
        } else {
            let value = numerator as f64 / denominator as f64;
            self.last.borrow_mut().insert(key, value);
            Ok(value)
        }
    }
}

impl CurveSource for EmpiricalSource<'_> {
    fn p_untreated(&self, t: u32, z: u8) -> Result<f64> {
        let denom = self.table.exit_risk_untreated(t, z);
        let events = self.table.exits_untreated(t, z);
        self.resolve(
            StreamKey::Untreated(z),
            denom - events,
            denom,
            1.0,
            (t, z, StratumLabel::Untreated),
        )
    }

    fn p_treated(&self, t: u32, z: u8, s: u32) -> Result<f64> {
        let (denom, events) = match self.table.treated_stratum(z, s) {
            Some(stratum) => (stratum.at_risk(t), stratum.exits(t)),
            None => (0, 0),
        };
        self.resolve(
            StreamKey::Treated(z, s),
            denom - events,
            denom,
            1.0,
            (t, z, StratumLabel::TreatedAt(s)),
        )
    }

    fn q_treatment(&self, t: u32, z: u8) -> Result<f64> {
        let denom = self.table.at_risk(t, z);
        let events = self.table.treatments(t, z);
        self.resolve(
            StreamKey::Treatment(z),
            events,
            denom,
            0.0,
            (t, z, StratumLabel::TreatmentProcess),
        )
    }

    fn has_stratum(&self, z: u8, s: u32) -> bool {
        self.table.treated_stratum(z, s).is_some()
    }

    fn carried(&self) -> bool {
        self.carried.get()
    }
}

/// product-limit survival curve. `values[i]` is the estimated probability
/// of surviving past `periods[i]`; `at_risk[i]` counts subjects entering
/// that period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub periods: Vec<u32>,
    pub values: Vec<f64>,
    pub at_risk: Vec<u64>,
}

/// which spells a curve is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StratumSelector {
    /// restrict to one regime; `None` pools both
    pub regime: Option<u8>,
}

impl std::fmt::Display for StratumSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.regime {
            Some(z) => write!(f, "regime {z}"),
            None => write!(f, "all regimes"),
        }
    }
}

/// product-limit estimate of exit-free survival. with
/// `censor_at_treatment` set, a spell stops contributing when treated (the
/// treatment period itself is excluded, since treatment precedes the exit
/// decision within a period); otherwise treated spells contribute their
/// full observed history.
pub fn kaplan_meier(
    dataset: &DiscreteDataset,
    selector: StratumSelector,
    censor_at_treatment: bool,
) -> Result<SurvivalCurve> {
    let table = build_risk_sets(dataset);
    let regimes: Vec<u8> = match selector.regime {
        Some(z) if z <= 1 => vec![z],
        Some(z) => {
            return Err(SurvError::Config(format!(
                "selector regime must be 0 or 1, got {z}"
            )))
        }
        None => vec![0, 1],
    };

    let pool = |t: u32| -> (u64, u64) {
        let mut risk = 0;
        let mut deaths = 0;
        for &z in &regimes {
            risk += table.exit_risk_untreated(t, z);
            deaths += table.exits_untreated(t, z);
            if !censor_at_treatment {
                for stratum in table.treated_strata(z) {
                    risk += stratum.at_risk(t);
                    deaths += stratum.exits(t);
                }
            }
        }
        (risk, deaths)
    };

    if pool(1).0 == 0 {
        return Err(SurvError::EmptyStratum {
            selector: selector.to_string(),
        });
    }

    let mut periods = vec![0];
    let mut values = vec![1.0];
    let mut at_risk = vec![pool(1).0];
    let mut surv = 1.0;
    for t in 1..=table.horizon {
        let (risk, deaths) = pool(t);
        if risk == 0 {
            break;
        }
        surv *= 1.0 - deaths as f64 / risk as f64;
        periods.push(t);
        values.push(surv);
        at_risk.push(risk);
    }
    Ok(SurvivalCurve {
        periods,
        values,
        at_risk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spells::{from_periods, DiscreteSpell, TimeGrid};

    fn spell(id: &str, z: u8, s: Option<u32>, exit: Option<u32>, cens: Option<u32>) -> DiscreteSpell {
        DiscreteSpell {
            id: id.into(),
            regime: z,
            treat_period: s,
            exit_period: exit,
            censor_period: cens,
            covariates: vec![],
        }
    }

    #[test]
    fn product_limit_hand_example() {
        // 4 at risk; death at 1, censor at 2, death at 3, survivor to 4:
        // S(1) = 3/4, S(2) = 3/4, S(3) = 3/4 * 1/2 = 0.375
        let ds = from_periods(
            vec![
                spell("a", 0, None, Some(1), None),
                spell("b", 0, None, None, Some(2)),
                spell("c", 0, None, Some(3), None),
                spell("d", 0, None, None, Some(4)),
            ],
            vec![],
            TimeGrid::new(1.0, 6).unwrap(),
        )
        .unwrap();
        let curve = kaplan_meier(&ds, StratumSelector { regime: Some(0) }, false).unwrap();
        assert_eq!(curve.periods, vec![0, 1, 2, 3, 4]);
        assert_eq!(curve.at_risk, vec![4, 4, 3, 2, 1]);
        let expect = [1.0, 0.75, 0.75, 0.375, 0.375];
        for (v, e) in curve.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn censor_at_treatment_drops_treated_history() {
        // treated spell dies later; with the flag its death must not count
        let ds = from_periods(
            vec![
                spell("a", 0, Some(2), Some(3), None),
                spell("b", 0, None, Some(4), None),
                spell("c", 0, None, None, Some(4)),
            ],
            vec![],
            TimeGrid::new(1.0, 5).unwrap(),
        )
        .unwrap();
        let with_flag = kaplan_meier(&ds, StratumSelector { regime: Some(0) }, true).unwrap();
        // untreated pool: the treated spell leaves at its treatment period,
        // so its period-3 death never counts; the untreated death at 4 does
        assert_eq!(with_flag.periods, vec![0, 1, 2, 3, 4]);
        let expect = [1.0, 1.0, 1.0, 1.0, 0.5];
        for (v, e) in with_flag.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
        let without = kaplan_meier(&ds, StratumSelector { regime: Some(0) }, false).unwrap();
        let last = *without.values.last().unwrap();
        assert!((last - (2.0 / 3.0) * 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_stratum_is_an_error() {
        let ds = from_periods(
            vec![spell("a", 0, None, Some(1), None)],
            vec![],
            TimeGrid::new(1.0, 3).unwrap(),
        )
        .unwrap();
        let err = kaplan_meier(&ds, StratumSelector { regime: Some(1) }, false).unwrap_err();
        assert!(err.to_string().contains("regime 1"));
    }

    #[test]
    fn carry_forward_bridges_and_flags() {
        let ds = from_periods(
            vec![spell("a", 0, None, Some(2), None)],
            vec![],
            TimeGrid::new(1.0, 4).unwrap(),
        )
        .unwrap();
        let table = build_risk_sets(&ds);
        let src = EmpiricalSource::new(&table, CellPolicy::CarryForward);
        assert_eq!(src.p_untreated(1, 0).unwrap(), 1.0);
        assert_eq!(src.p_untreated(2, 0).unwrap(), 0.0);
        // period 3 has nobody left; carry the period-2 value
        assert_eq!(src.p_untreated(3, 0).unwrap(), 0.0);
        assert!(src.carried());

        let strict = EmpiricalSource::new(&table, CellPolicy::Error);
        assert!(strict.p_untreated(3, 0).is_err());
        assert!(!strict.carried());
    }
}
