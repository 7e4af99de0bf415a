//! forward simulation of agent panels and the censoring protocol. every
//! agent draws from its own counter-based substream, so panels are
//! bit-identical across runs and agent order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::reservation::ReservationTable;
use super::DdcConfig;
use crate::error::{Result, SurvError};
use crate::spells::{Dataset, SpellRecord};

/// one simulated agent. periods are 1-based; `None` exit with `None`
/// censor means the agent was still waiting when the panel ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAgent {
    pub id: u64,
    pub regime: u8,
    pub a: u32,
    pub e: u32,
    pub treat_period: Option<u32>,
    pub exit_period: Option<u32>,
    pub censor_period: Option<u32>,
    pub accepted_offer: Option<f64>,
}

impl SimAgent {
    pub fn is_treated(&self) -> bool {
        self.treat_period.is_some()
    }
}

/// simulated panel; `censored` records whether [`apply_censoring`] has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPanel {
    pub horizon: u32,
    pub censored: bool,
    pub agents: Vec<SimAgent>,
}

/// covariate layout for export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportCovariates {
    /// ability entered as dummies a2..a_max against the a_min base level;
    /// effort stays latent
    ADummies,
    /// no covariates
    None,
}

/// substream offsets; agent streams are 1 + id, the censoring stage uses
/// its own stream, and reservation draws live at or above 2^32.
const CENSOR_STREAM: u64 = u64::MAX - 1;

/// runs the per-period search model forward for every agent. each period
/// an untreated agent first draws treatment onset, then offers arrive
/// when a Poisson count is at least one, and an arriving offer is
/// accepted when it clears the reservation value for the agent's current
/// treated state.
pub fn simulate_panel(cfg: &DdcConfig, table: &ReservationTable) -> Result<SimPanel> {
    cfg.validate()?;
    let mut agents = Vec::with_capacity(cfg.n_agents);
    for id in 0..cfg.n_agents as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1 + id);
        let regime = (id % 2) as u8;
        let a = rng.gen_range(cfg.a_min..=cfg.a_max);
        let e = rng.gen_range(cfg.e_min..=cfg.e_max);
        let cell = table.cell(a, e).ok_or_else(|| {
            SurvError::Config(format!("reservation table has no cell for a={a}, e={e}"))
        })?;

        let pi = cfg.pi[usize::from(regime)];
        let poisson_mean = cfg.poisson_mean(a, e);
        let mut agent = SimAgent {
            id,
            regime,
            a,
            e,
            treat_period: None,
            exit_period: None,
            censor_period: None,
            accepted_offer: None,
        };
        for t in 1..=cfg.horizon {
            if agent.treat_period.is_none() && rng.gen_bool(pi) {
                agent.treat_period = Some(t);
            }
            let treated = agent.treat_period.is_some();
            let arrived = if poisson_mean > 0.0 {
                let count: f64 = Poisson::new(poisson_mean)
                    .map_err(|_| {
                        SurvError::Config(format!("bad offer arrival mean {poisson_mean}"))
                    })?
                    .sample(&mut rng);
                count >= 1.0
            } else {
                false
            };
            if !arrived {
                continue;
            }
            let offer = Normal::new(cfg.offer_mean(a, treated), cfg.sigma_xi)
                .map_err(|_| SurvError::Config(format!("bad offer spread {}", cfg.sigma_xi)))?
                .sample(&mut rng);
            let reservation = if treated {
                cell.w_post.value
            } else {
                cell.w_pre[usize::from(regime)].value
            };
            if offer >= reservation {
                agent.exit_period = Some(t);
                agent.accepted_offer = Some(offer);
                break;
            }
        }
        agents.push(agent);
    }
    Ok(SimPanel {
        horizon: cfg.horizon,
        censored: false,
        agents,
    })
}

/// two-stage censoring. first every spell still open after the
/// administrative cutoff is censored there; then a seeded random share of
/// the remaining exits is censored at a uniform period strictly before
/// the exit (spells exiting in period 1 have no room and are skipped).
/// treatment onsets after a censoring point are erased.
pub fn apply_censoring(panel: SimPanel, cfg: &DdcConfig) -> Result<SimPanel> {
    cfg.validate()?;
    if panel.censored {
        return Err(SurvError::Config("censoring already applied to this panel".into()));
    }
    let cutoff = cfg.admin_censor;
    let mut agents = panel.agents;
    for agent in &mut agents {
        let open = match agent.exit_period {
            Some(t) => t > cutoff,
            None => true,
        };
        if open {
            agent.censor_period = Some(cutoff.min(panel.horizon));
            agent.exit_period = None;
            agent.accepted_offer = None;
            if agent.treat_period.map_or(false, |s| s > cutoff.min(panel.horizon)) {
                agent.treat_period = None;
            }
        }
    }

    let remaining: Vec<usize> = agents
        .iter()
        .enumerate()
        .filter(|(_, ag)| ag.exit_period.is_some())
        .map(|(i, _)| i)
        .collect();
    let target = (cfg.random_censor_share * remaining.len() as f64).round() as usize;
    let mut eligible: Vec<usize> = remaining
        .iter()
        .copied()
        .filter(|i| agents[*i].exit_period.unwrap() >= 2)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(CENSOR_STREAM);
    eligible.shuffle(&mut rng);
    for i in eligible.into_iter().take(target) {
        let exit = agents[i].exit_period.unwrap();
        let c = rng.gen_range(1..=exit - 1);
        agents[i].censor_period = Some(c);
        agents[i].exit_period = None;
        agents[i].accepted_offer = None;
        if agents[i].treat_period.map_or(false, |s| s > c) {
            agents[i].treat_period = None;
        }
    }
    Ok(SimPanel {
        horizon: panel.horizon,
        censored: true,
        agents,
    })
}

/// exports a panel as a spell dataset with period numbers as times.
/// agents still waiting at the panel end come out censored at the
/// horizon. ability enters as dummies against the lowest level; effort
/// is deliberately withheld so estimators face unobserved heterogeneity.
pub fn to_dataset(panel: &SimPanel, cfg: &DdcConfig, covariates: ExportCovariates) -> Result<Dataset> {
    let names: Vec<String> = match covariates {
        ExportCovariates::ADummies => {
            ((cfg.a_min + 1)..=cfg.a_max).map(|v| format!("a{v}")).collect()
        }
        ExportCovariates::None => Vec::new(),
    };
    let records = panel
        .agents
        .iter()
        .map(|agent| {
            let (exit_time, censor_time) = match (agent.exit_period, agent.censor_period) {
                (Some(t), _) => (Some(f64::from(t)), None),
                (None, Some(c)) => (None, Some(f64::from(c))),
                (None, None) => (None, Some(f64::from(panel.horizon))),
            };
            let values = match covariates {
                ExportCovariates::ADummies => ((cfg.a_min + 1)..=cfg.a_max)
                    .map(|v| if agent.a == v { 1.0 } else { 0.0 })
                    .collect(),
                ExportCovariates::None => Vec::new(),
            };
            SpellRecord {
                id: agent.id.to_string(),
                regime: agent.regime,
                treat_time: agent.treat_period.map(f64::from),
                exit_time,
                censor_time,
                covariates: values,
            }
        })
        .collect();
    Dataset::new(records, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddcsim::reservation::solve_reservation_table;

    fn small_config() -> DdcConfig {
        DdcConfig {
            n_agents: 400,
            horizon: 200,
            seed: 11,
            ..DdcConfig::default()
        }
    }

    #[test]
    fn panels_are_bit_identical_across_runs() {
        let cfg = small_config();
        let table = solve_reservation_table(&cfg).unwrap();
        let one = simulate_panel(&cfg, &table).unwrap();
        let two = simulate_panel(&cfg, &table).unwrap();
        assert_eq!(one, two);

        let mut other_seed = cfg.clone();
        other_seed.seed = 12;
        let table2 = solve_reservation_table(&other_seed).unwrap();
        let three = simulate_panel(&other_seed, &table2).unwrap();
        assert_ne!(one, three);
    }

    #[test]
    fn regimes_split_exactly_in_half() {
        let cfg = small_config();
        let table = solve_reservation_table(&cfg).unwrap();
        let panel = simulate_panel(&cfg, &table).unwrap();
        let ones = panel.agents.iter().filter(|a| a.regime == 1).count();
        assert_eq!(ones, cfg.n_agents / 2);
    }

    #[test]
    fn no_treatment_and_no_arrivals_means_nobody_moves() {
        let mut cfg = small_config();
        cfg.pi = [0.0, 0.0];
        cfg.beta_lambda_a = 0.0;
        cfg.beta_lambda_e = 0.0;
        let table = solve_reservation_table(&cfg).unwrap();
        let panel = simulate_panel(&cfg, &table).unwrap();
        for agent in &panel.agents {
            assert_eq!(agent.treat_period, None);
            assert_eq!(agent.exit_period, None);
        }
    }

    #[test]
    fn forced_acceptance_exits_at_the_arrival_rate() {
        // reservation at -inf accepts every arriving offer, so the exit
        // hazard must match the analytic arrival probability
        let mut cfg = small_config();
        cfg.n_agents = 4000;
        cfg.horizon = 40;
        cfg.pi = [0.0, 0.0];
        cfg.a_min = 3;
        cfg.a_max = 3;
        cfg.e_min = 2;
        cfg.e_max = 2;
        let mut table = solve_reservation_table(&cfg).unwrap();
        for cell in table.cells_mut() {
            cell.w_post.value = f64::NEG_INFINITY;
            cell.w_pre[0].value = f64::NEG_INFINITY;
            cell.w_pre[1].value = f64::NEG_INFINITY;
        }
        let panel = simulate_panel(&cfg, &table).unwrap();
        let p = cfg.arrival_prob(3, 2);

        let mut at_risk = 0usize;
        let mut exits = 0usize;
        for agent in &panel.agents {
            let t = agent.exit_period.unwrap_or(cfg.horizon + 1);
            at_risk += t.min(cfg.horizon) as usize;
            if agent.exit_period.is_some() {
                exits += 1;
            }
        }
        let hazard = exits as f64 / at_risk as f64;
        let se = (p * (1.0 - p) / at_risk as f64).sqrt();
        assert!(
            (hazard - p).abs() < 4.0 * se,
            "hazard {hazard} vs arrival probability {p} (se {se})"
        );
    }

    #[test]
    fn admin_censoring_clears_everything_beyond_the_cutoff() {
        let cfg = small_config();
        let table = solve_reservation_table(&cfg).unwrap();
        let raw = simulate_panel(&cfg, &table).unwrap();
        let censored = apply_censoring(raw.clone(), &cfg).unwrap();
        assert!(censored.censored);
        for (before, after) in raw.agents.iter().zip(&censored.agents) {
            match before.exit_period {
                Some(t) if t <= cfg.admin_censor => {
                    // survives administrative censoring; may still be hit
                    // by the random stage
                    if after.exit_period.is_some() {
                        assert_eq!(after.exit_period, Some(t));
                    } else {
                        let c = after.censor_period.unwrap();
                        assert!(c >= 1 && c < t);
                    }
                }
                _ => {
                    assert_eq!(after.exit_period, None);
                    assert_eq!(after.censor_period, Some(cfg.admin_censor));
                    assert_eq!(after.accepted_offer, None);
                    if let Some(s) = after.treat_period {
                        assert!(s <= cfg.admin_censor);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_share_censoring_only_applies_the_administrative_cut() {
        let mut cfg = small_config();
        cfg.random_censor_share = 0.0;
        let table = solve_reservation_table(&cfg).unwrap();
        let raw = simulate_panel(&cfg, &table).unwrap();
        let censored = apply_censoring(raw.clone(), &cfg).unwrap();
        for (before, after) in raw.agents.iter().zip(&censored.agents) {
            if let Some(t) = before.exit_period {
                if t <= cfg.admin_censor {
                    assert_eq!(after.exit_period, Some(t));
                    assert_eq!(after.accepted_offer, before.accepted_offer);
                }
            }
        }
    }

    #[test]
    fn full_share_censors_every_remaining_exit_with_room() {
        let mut cfg = small_config();
        cfg.random_censor_share = 1.0;
        let table = solve_reservation_table(&cfg).unwrap();
        let raw = simulate_panel(&cfg, &table).unwrap();
        let censored = apply_censoring(raw, &cfg).unwrap();
        for agent in &censored.agents {
            if let Some(t) = agent.exit_period {
                // only period-1 exits may survive a full censoring sweep
                assert_eq!(t, 1);
            }
        }
    }

    #[test]
    fn double_censoring_is_rejected() {
        let cfg = small_config();
        let table = solve_reservation_table(&cfg).unwrap();
        let panel = simulate_panel(&cfg, &table).unwrap();
        let once = apply_censoring(panel, &cfg).unwrap();
        assert!(apply_censoring(once, &cfg).is_err());
    }

    #[test]
    fn export_round_trips_through_the_spell_invariants() {
        let cfg = small_config();
        let table = solve_reservation_table(&cfg).unwrap();
        let panel = apply_censoring(simulate_panel(&cfg, &table).unwrap(), &cfg).unwrap();
        let ds = to_dataset(&panel, &cfg, ExportCovariates::ADummies).unwrap();
        assert_eq!(ds.len(), cfg.n_agents);
        assert_eq!(
            ds.covariate_names(),
            ["a2", "a3", "a4", "a5", "a6"]
        );
        for rec in ds.records() {
            let dummies: f64 = rec.covariates.iter().sum();
            assert!(dummies == 0.0 || dummies == 1.0);
        }

        // an uncensored panel exports still-waiting agents at the horizon
        let raw = simulate_panel(&cfg, &table).unwrap();
        let ds = to_dataset(&raw, &cfg, ExportCovariates::None).unwrap();
        let open = raw.agents.iter().filter(|a| a.exit_period.is_none()).count();
        let at_horizon = ds
            .records()
            .iter()
            .filter(|r| r.censor_time == Some(f64::from(cfg.horizon)))
            .count();
        assert_eq!(open, at_horizon);
    }
}
