//! collapses a dataset into sufficient statistics for the joint
//! likelihood. with piecewise-constant baselines the log-likelihood only
//! depends on event counts and integrated exposure per (baseline cell,
//! covariate pattern), so evaluation cost is independent of sample size.

use std::collections::HashMap;

use super::{treated_switch_time, HazardParams, PiecewiseSpec};
use crate::spells::Dataset;

/// aggregated event counts and exposures. cell indices are
/// `(segment * 2 + z) * 2 + d` for the exit process and `segment * 2 + z`
/// for the treatment process; within a cell, values are stored per
/// covariate pattern.
#[derive(Debug, Clone)]
pub(crate) struct SuffStats {
    pub patterns: Vec<Vec<f64>>,
    pub n_exit_cells: usize,
    pub n_treat_cells: usize,
    /// indexed cell * n_patterns + pattern
    pub exit_events: Vec<f64>,
    pub exit_exposure: Vec<f64>,
    pub treat_events: Vec<f64>,
    pub treat_exposure: Vec<f64>,
}

impl SuffStats {
    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn build(dataset: &Dataset, exit_spec: &PiecewiseSpec, treat_spec: &PiecewiseSpec) -> SuffStats {
        let mut key_to_pattern: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut patterns: Vec<Vec<f64>> = Vec::new();

        // (cell, pattern, amount) triples buffered until the pattern count
        // is known, then scattered into the flat matrices.
        struct Hit {
            cell: usize,
            pattern: usize,
            events: f64,
            exposure: f64,
        }
        let mut exit_hits: Vec<Hit> = Vec::new();
        let mut treat_hits: Vec<Hit> = Vec::new();

        let n_exit_cells = 4 * exit_spec.n_segments();
        let n_treat_cells = 2 * treat_spec.n_segments();

        for rec in &dataset.records {
            let key: Vec<u64> = rec.covariates.iter().map(|v| v.to_bits()).collect();
            let pattern = *key_to_pattern.entry(key).or_insert_with(|| {
                patterns.push(rec.covariates.clone());
                patterns.len() - 1
            });

            let z = rec.regime as usize;
            let terminal = rec.exit_time.or(rec.censor_time).expect("validated terminal");
            let died = rec.exit_time.is_some();

            let switch = rec.treat_time.map(treated_switch_time);
            let untreated_end = switch.unwrap_or(terminal).min(terminal);

            // exit process: untreated stretch, then treated stretch
            for j in 0..exit_spec.n_segments() {
                let len = exit_spec.overlap(j, 0.0, untreated_end);
                if len > 0.0 {
                    exit_hits.push(Hit {
                        cell: (j * 2 + z) * 2,
                        pattern,
                        events: 0.0,
                        exposure: len,
                    });
                }
                if switch.is_some() {
                    let len = exit_spec.overlap(j, untreated_end, terminal);
                    if len > 0.0 {
                        exit_hits.push(Hit {
                            cell: (j * 2 + z) * 2 + 1,
                            pattern,
                            events: 0.0,
                            exposure: len,
                        });
                    }
                }
            }
            if died {
                let j = exit_spec.segment_of(terminal);
                let d = usize::from(switch.is_some());
                exit_hits.push(Hit {
                    cell: (j * 2 + z) * 2 + d,
                    pattern,
                    events: 1.0,
                    exposure: 0.0,
                });
            }

            // treatment process: at risk while untreated and in the panel
            let treat_end = rec.treat_time.unwrap_or(terminal).min(terminal);
            for j in 0..treat_spec.n_segments() {
                let len = treat_spec.overlap(j, 0.0, treat_end);
                if len > 0.0 {
                    treat_hits.push(Hit {
                        cell: j * 2 + z,
                        pattern,
                        events: 0.0,
                        exposure: len,
                    });
                }
            }
            if let Some(s) = rec.treat_time {
                treat_hits.push(Hit {
                    cell: treat_spec.segment_of(s) * 2 + z,
                    pattern,
                    events: 1.0,
                    exposure: 0.0,
                });
            }
        }

        let n_patterns = patterns.len();
        let mut stats = SuffStats {
            patterns,
            n_exit_cells,
            n_treat_cells,
            exit_events: vec![0.0; n_exit_cells * n_patterns],
            exit_exposure: vec![0.0; n_exit_cells * n_patterns],
            treat_events: vec![0.0; n_treat_cells * n_patterns],
            treat_exposure: vec![0.0; n_treat_cells * n_patterns],
        };
        for h in exit_hits {
            let ix = h.cell * n_patterns + h.pattern;
            stats.exit_events[ix] += h.events;
            stats.exit_exposure[ix] += h.exposure;
        }
        for h in treat_hits {
            let ix = h.cell * n_patterns + h.pattern;
            stats.treat_events[ix] += h.events;
            stats.treat_exposure[ix] += h.exposure;
        }
        stats
    }

    /// total events and exposure for one exit cell across patterns.
    pub fn exit_cell_totals(&self, cell: usize) -> (f64, f64) {
        let n = self.n_patterns();
        let ev = self.exit_events[cell * n..(cell + 1) * n].iter().sum();
        let ex = self.exit_exposure[cell * n..(cell + 1) * n].iter().sum();
        (ev, ex)
    }

    /// total events and exposure for one treatment cell across patterns.
    pub fn treat_cell_totals(&self, cell: usize) -> (f64, f64) {
        let n = self.n_patterns();
        let ev = self.treat_events[cell * n..(cell + 1) * n].iter().sum();
        let ex = self.treat_exposure[cell * n..(cell + 1) * n].iter().sum();
        (ev, ex)
    }
}

/// evaluates the joint log-likelihood and its gradient with respect to the
/// packed parameter vector, working entirely on the collapsed statistics.
pub(crate) fn eval(stats: &SuffStats, params: &HazardParams) -> (f64, Vec<f64>) {
    let n_pat = stats.n_patterns();
    let p = params.n_covariates();
    let offset_treat = stats.n_exit_cells;
    let offset_beta_exit = stats.n_exit_cells + stats.n_treat_cells;
    let offset_beta_treat = offset_beta_exit + p;

    let mut ll = 0.0;
    let mut grad = vec![0.0; params.n_params()];

    let linear = |beta: &[f64]| -> Vec<f64> {
        stats
            .patterns
            .iter()
            .map(|x| x.iter().zip(beta).map(|(xi, bi)| xi * bi).sum::<f64>())
            .collect()
    };
    let xb_exit = linear(&params.beta_exit);
    let xb_treat = linear(&params.beta_treat);
    let ex_exit: Vec<f64> = xb_exit.iter().map(|v| v.exp()).collect();
    let ex_treat: Vec<f64> = xb_treat.iter().map(|v| v.exp()).collect();

    for cell in 0..stats.n_exit_cells {
        let j = cell / 4;
        let z = (cell / 2) % 2;
        let d = cell % 2;
        let log_lambda = params.log_exit[j][z][d];
        let lambda = log_lambda.exp();
        for pat in 0..n_pat {
            let ix = cell * n_pat + pat;
            let ev = stats.exit_events[ix];
            let exposure = stats.exit_exposure[ix];
            if ev == 0.0 && exposure == 0.0 {
                continue;
            }
            let risk = exposure * lambda * ex_exit[pat];
            ll += ev * (log_lambda + xb_exit[pat]) - risk;
            let score = ev - risk;
            grad[cell] += score;
            for k in 0..p {
                grad[offset_beta_exit + k] += stats.patterns[pat][k] * score;
            }
        }
    }

    for cell in 0..stats.n_treat_cells {
        let j = cell / 2;
        let z = cell % 2;
        let log_lambda = params.log_treat[j][z];
        let lambda = log_lambda.exp();
        for pat in 0..n_pat {
            let ix = cell * n_pat + pat;
            let ev = stats.treat_events[ix];
            let exposure = stats.treat_exposure[ix];
            if ev == 0.0 && exposure == 0.0 {
                continue;
            }
            let risk = exposure * lambda * ex_treat[pat];
            ll += ev * (log_lambda + xb_treat[pat]) - risk;
            let score = ev - risk;
            grad[offset_treat + cell] += score;
            for k in 0..p {
                grad[offset_beta_treat + k] += stats.patterns[pat][k] * score;
            }
        }
    }

    (ll, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spells::{Dataset, SpellRecord};

    fn rec(id: &str, z: u8, s: Option<f64>, exit: Option<f64>, cens: Option<f64>, x: Vec<f64>) -> SpellRecord {
        SpellRecord {
            id: id.into(),
            regime: z,
            treat_time: s,
            exit_time: exit,
            censor_time: cens,
            covariates: x,
        }
    }

    #[test]
    fn exposures_split_at_the_treatment_switch() {
        // treated in period 3 (switch at continuous time 2), dies at 7;
        // untreated exit exposure (0,2], treated exposure (2,7].
        let data = Dataset::new(
            vec![rec("a", 0, Some(3.0), Some(7.0), None, vec![1.0])],
            vec!["x".into()],
        )
        .unwrap();
        let spec = PiecewiseSpec::equal_width(5.0, 2).unwrap();
        let st = SuffStats::build(&data, &spec, &spec);

        // exit cells: (seg*2 + z)*2 + d, one pattern
        let cell = |j: usize, z: usize, d: usize| (j * 2 + z) * 2 + d;
        assert_eq!(st.exit_exposure[cell(0, 0, 0)], 2.0);
        assert_eq!(st.exit_exposure[cell(0, 0, 1)], 3.0);
        assert_eq!(st.exit_exposure[cell(1, 0, 1)], 2.0);
        assert_eq!(st.exit_events[cell(1, 0, 1)], 1.0);
        assert_eq!(st.exit_events[cell(0, 0, 0)], 0.0);

        // treatment process: exposure (0,3], event in segment 0
        assert_eq!(st.treat_exposure[0], 3.0);
        assert_eq!(st.treat_events[0], 1.0);
    }

    #[test]
    fn treatment_in_period_one_is_all_treated_exposure() {
        let data = Dataset::new(
            vec![rec("a", 1, Some(1.0), None, Some(4.0), vec![])],
            vec![],
        )
        .unwrap();
        let spec = PiecewiseSpec::equal_width(10.0, 1).unwrap();
        let st = SuffStats::build(&data, &spec, &spec);
        let cell = |j: usize, z: usize, d: usize| (j * 2 + z) * 2 + d;
        // switch at max(1-1, 0) = 0: no untreated exit exposure at all
        assert_eq!(st.exit_exposure[cell(0, 1, 0)], 0.0);
        assert_eq!(st.exit_exposure[cell(0, 1, 1)], 4.0);
        assert_eq!(st.exit_events.iter().sum::<f64>(), 0.0);
        // treatment exposure runs through the event time
        assert_eq!(st.treat_exposure[1], 1.0);
        assert_eq!(st.treat_events[1], 1.0);
    }

    #[test]
    fn patterns_are_pooled_with_counts() {
        let data = Dataset::new(
            vec![
                rec("a", 0, None, Some(2.0), None, vec![1.0, 0.0]),
                rec("b", 0, None, Some(3.0), None, vec![1.0, 0.0]),
                rec("c", 1, None, None, Some(5.0), vec![0.0, 1.0]),
            ],
            vec!["u".into(), "v".into()],
        )
        .unwrap();
        let spec = PiecewiseSpec::equal_width(10.0, 1).unwrap();
        let st = SuffStats::build(&data, &spec, &spec);
        assert_eq!(st.n_patterns(), 2);
        let cell = |j: usize, z: usize, d: usize| (j * 2 + z) * 2 + d;
        assert_eq!(st.exit_exposure[cell(0, 0, 0) * 2], 5.0);
        assert_eq!(st.exit_events[cell(0, 0, 0) * 2], 2.0);
        assert_eq!(st.exit_exposure[cell(0, 1, 0) * 2 + 1], 5.0);
    }

    #[test]
    fn gradient_matches_finite_differences_on_a_small_panel() {
        let data = Dataset::new(
            vec![
                rec("a", 0, Some(2.0), Some(6.0), None, vec![1.0, 0.0]),
                rec("b", 0, None, Some(4.0), None, vec![0.0, 1.0]),
                rec("c", 1, Some(5.0), None, Some(9.0), vec![1.0, 1.0]),
                rec("d", 1, None, Some(11.0), None, vec![0.0, 0.0]),
            ],
            vec!["u".into(), "v".into()],
        )
        .unwrap();
        let exit_spec = PiecewiseSpec::equal_width(5.0, 2).unwrap();
        let treat_spec = PiecewiseSpec::equal_width(4.0, 2).unwrap();
        let st = SuffStats::build(&data, &exit_spec, &treat_spec);

        let mut params = HazardParams::zeroed(exit_spec, treat_spec, 2);
        let theta: Vec<f64> = (0..params.n_params())
            .map(|i| -1.5 + 0.13 * i as f64)
            .collect();
        params = params.with_packed(&theta);

        let (_, grad) = eval(&st, &params);
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            up[i] += h;
            let mut dn = theta.clone();
            dn[i] -= h;
            let (lu, _) = eval(&st, &params.with_packed(&up));
            let (ld, _) = eval(&st, &params.with_packed(&dn));
            let fd = (lu - ld) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "component {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
    }
}
