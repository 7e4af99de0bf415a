//! period-by-period risk sets for the treatment and exit processes.
//!
//! counting conventions, per regime z and period t:
//!
//! * `at_risk(t, z)`: subjects untreated before t, alive entering t, and
//!   uncensored entering t. this is the pool exposed to the period-t
//!   treatment draw (subjects treated or dying in t are still members,
//!   because treatment precedes the exit decision within a period).
//! * `treatments(t, z)`: members of that pool treated in t.
//! * `exits_untreated(t, z)` / `censored_untreated(t, z)`: members exiting
//!   or censored in t while still untreated. a record censored in t counts
//!   as surviving period t and leaves the pool afterwards.
//! * per treated stratum s: `treated_at_risk(z, s, t)` for t >= s, with the
//!   subject entering the stratum in the treatment period itself, and the
//!   matching exit/censor counts.
//!
//! the pools obey the flow identity
//! `at_risk(t+1) = at_risk(t) - exits(t) - censorings(t) - treatments(t)`.

use crate::spells::DiscreteDataset;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// per-period counts for one treated stratum (all subjects treated in
/// period `s`), indexed by t - s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatedStratum {
    pub s: u32,
    at_risk: Vec<u64>,
    exits: Vec<u64>,
    censored: Vec<u64>,
}

impl TreatedStratum {
    fn new(s: u32, horizon: u32) -> Self {
        let len = (horizon - s + 1) as usize;
        TreatedStratum {
            s,
            at_risk: vec![0; len],
            exits: vec![0; len],
            censored: vec![0; len],
        }
    }

    fn slot(&self, t: u32) -> Option<usize> {
        if t < self.s {
            None
        } else {
            let ix = (t - self.s) as usize;
            (ix < self.at_risk.len()).then_some(ix)
        }
    }

    pub fn at_risk(&self, t: u32) -> u64 {
        self.slot(t).map_or(0, |ix| self.at_risk[ix])
    }

    pub fn exits(&self, t: u32) -> u64 {
        self.slot(t).map_or(0, |ix| self.exits[ix])
    }

    pub fn censored(&self, t: u32) -> u64 {
        self.slot(t).map_or(0, |ix| self.censored[ix])
    }
}

/// full risk-set tabulation over periods 1..=horizon for both regimes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskSetTable {
    pub horizon: u32,
    at_risk: [Vec<u64>; 2],
    treatments: [Vec<u64>; 2],
    exits_untreated: [Vec<u64>; 2],
    censored_untreated: [Vec<u64>; 2],
    treated: [BTreeMap<u32, TreatedStratum>; 2],
}

impl RiskSetTable {
    fn ix(t: u32) -> usize {
        (t - 1) as usize
    }

    /// untreated, alive, uncensored pool entering period t (the treatment
    /// risk set).
    pub fn at_risk(&self, t: u32, z: u8) -> u64 {
        self.at_risk[z as usize].get(Self::ix(t)).copied().unwrap_or(0)
    }

    pub fn treatments(&self, t: u32, z: u8) -> u64 {
        self.treatments[z as usize].get(Self::ix(t)).copied().unwrap_or(0)
    }

    pub fn exits_untreated(&self, t: u32, z: u8) -> u64 {
        self.exits_untreated[z as usize]
            .get(Self::ix(t))
            .copied()
            .unwrap_or(0)
    }

    pub fn censored_untreated(&self, t: u32, z: u8) -> u64 {
        self.censored_untreated[z as usize]
            .get(Self::ix(t))
            .copied()
            .unwrap_or(0)
    }

    /// pool exposed to the period-t exit decision while untreated: the
    /// treatment pool minus the subjects treated in t.
    pub fn exit_risk_untreated(&self, t: u32, z: u8) -> u64 {
        self.at_risk(t, z) - self.treatments(t, z)
    }

    pub fn treated_stratum(&self, z: u8, s: u32) -> Option<&TreatedStratum> {
        self.treated[z as usize].get(&s)
    }

    pub fn treated_strata(&self, z: u8) -> impl Iterator<Item = &TreatedStratum> {
        self.treated[z as usize].values()
    }
}

/// tabulates risk sets from a discretized dataset.
pub fn build_risk_sets(dataset: &DiscreteDataset) -> RiskSetTable {
    let horizon = dataset.grid.horizon;
    let len = horizon as usize;
    let mut table = RiskSetTable {
        horizon,
        at_risk: [vec![0; len], vec![0; len]],
        treatments: [vec![0; len], vec![0; len]],
        exits_untreated: [vec![0; len], vec![0; len]],
        censored_untreated: [vec![0; len], vec![0; len]],
        treated: [BTreeMap::new(), BTreeMap::new()],
    };

    for spell in dataset.spells() {
        let z = spell.regime as usize;
        let terminal = spell.terminal_period();
        let treat = spell.treat_period;
        let died = spell.exit_period.is_some();

        let untreated_through = treat.map_or(terminal, |s| s.saturating_sub(1));
        for t in 1..=untreated_through.min(terminal) {
            table.at_risk[z][RiskSetTable::ix(t)] += 1;
        }
        match treat {
            Some(s) => {
                table.at_risk[z][RiskSetTable::ix(s)] += 1;
                table.treatments[z][RiskSetTable::ix(s)] += 1;
                let stratum = table.treated[z]
                    .entry(s)
                    .or_insert_with(|| TreatedStratum::new(s, horizon));
                for t in s..=terminal {
                    stratum.at_risk[(t - s) as usize] += 1;
                }
                let slot = (terminal - s) as usize;
                if died {
                    stratum.exits[slot] += 1;
                } else {
                    stratum.censored[slot] += 1;
                }
            }
            None => {
                let slot = RiskSetTable::ix(terminal);
                if died {
                    table.exits_untreated[z][slot] += 1;
                } else {
                    table.censored_untreated[z][slot] += 1;
                }
            }
        }
    }
    table
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

    /// six spells, counts tallied by hand:
    ///   p1 z=0 dies at 3 untreated
    ///   p2 z=0 treated at 2, dies at 4
    ///   p3 z=0 censored at 2 untreated
    ///   p4 z=0 treated at 3, censored at 3
    ///   p5 z=0 dies at 1 untreated
    ///   p6 z=1 treated at 1, dies at 1
    fn hand_dataset() -> DiscreteDataset {
        from_periods(
            vec![
                spell("p1", 0, None, Some(3), None),
                spell("p2", 0, Some(2), Some(4), None),
                spell("p3", 0, None, None, Some(2)),
                spell("p4", 0, Some(3), None, Some(3)),
                spell("p5", 0, None, Some(1), None),
                spell("p6", 1, Some(1), Some(1), None),
            ],
            vec![],
            TimeGrid::new(1.0, 5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn hand_counted_pools() {
        let t = build_risk_sets(&hand_dataset());

        assert_eq!(t.at_risk(1, 0), 5);
        assert_eq!(t.exits_untreated(1, 0), 1);
        assert_eq!(t.at_risk(2, 0), 4);
        assert_eq!(t.treatments(2, 0), 1);
        assert_eq!(t.exit_risk_untreated(2, 0), 3);
        assert_eq!(t.censored_untreated(2, 0), 1);
        assert_eq!(t.at_risk(3, 0), 2);
        assert_eq!(t.treatments(3, 0), 1);
        assert_eq!(t.exit_risk_untreated(3, 0), 1);
        assert_eq!(t.exits_untreated(3, 0), 1);
        assert_eq!(t.at_risk(4, 0), 0);

        let s2 = t.treated_stratum(0, 2).unwrap();
        assert_eq!(s2.at_risk(2), 1);
        assert_eq!(s2.at_risk(4), 1);
        assert_eq!(s2.exits(4), 1);
        let s3 = t.treated_stratum(0, 3).unwrap();
        assert_eq!(s3.at_risk(3), 1);
        assert_eq!(s3.censored(3), 1);
        assert_eq!(s3.at_risk(4), 0);

        assert_eq!(t.at_risk(1, 1), 1);
        assert_eq!(t.treatments(1, 1), 1);
        assert_eq!(t.exit_risk_untreated(1, 1), 0);
        let s1 = t.treated_stratum(1, 1).unwrap();
        assert_eq!(s1.at_risk(1), 1);
        assert_eq!(s1.exits(1), 1);
    }

    #[test]
    fn flow_identity_holds() {
        let t = build_risk_sets(&hand_dataset());
        for z in 0..2u8 {
            for period in 1..t.horizon {
                let outflow = t.exits_untreated(period, z)
                    + t.censored_untreated(period, z)
                    + t.treatments(period, z);
                assert_eq!(
                    t.at_risk(period + 1, z),
                    t.at_risk(period, z) - outflow,
                    "flow identity broken at period {period}, regime {z}"
                );
            }
        }
    }
}
