//! plain-text rendering of estimation output: aligned effect tables with
//! standard errors in parentheses and p-values in brackets, two-column
//! survival-curve files, and the simulation summary.

use std::fmt::Write as _;
use std::path::Path;

use survdecomp::ddcsim::{DdcConfig, SimPanel};
use survdecomp::effects::{DecompositionResult, EffectEstimate};
use survdecomp::nonparam::{GcompEstimates, SPrime, SubstrataEstimates, SurvivalCurve};
use survdecomp::phmodel::FitResult;
use survdecomp::spells::Dataset;

/// tab-separated curve file; survival values keep their shortest exact
/// decimal form so the file re-parses to the same floats.
pub fn curve_tsv(curve: &SurvivalCurve) -> String {
    let mut out = String::from("period\tsurvival\n");
    for (t, v) in curve.periods.iter().zip(&curve.values) {
        let _ = writeln!(out, "{t}\t{v}");
    }
    out
}

pub fn simulation_summary(panel: &SimPanel, cfg: &DdcConfig, out: &Path) -> String {
    let n = panel.agents.len();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "simulated {n} agents over {} periods (seed {})",
        panel.horizon, cfg.seed
    );
    for z in 0..=1u8 {
        let total = panel.agents.iter().filter(|a| a.regime == z).count();
        let treated = panel
            .agents
            .iter()
            .filter(|a| a.regime == z && a.is_treated())
            .count();
        let exits = panel
            .agents
            .iter()
            .filter(|a| a.regime == z && a.exit_period.is_some())
            .count();
        let _ = writeln!(s, "  regime {z}: {total} spells, {treated} treated, {exits} exits");
    }
    if panel.censored {
        let admin = panel
            .agents
            .iter()
            .filter(|a| a.censor_period == Some(cfg.admin_censor))
            .count();
        let random = panel
            .agents
            .iter()
            .filter(|a| matches!(a.censor_period, Some(c) if c != cfg.admin_censor))
            .count();
        let pct = |k: usize| 100.0 * k as f64 / n as f64;
        let _ = writeln!(
            s,
            "  censoring: {:.1}% administrative at period {}, {:.1}% random",
            pct(admin),
            cfg.admin_censor,
            pct(random)
        );
    } else {
        let _ = writeln!(s, "  censoring: none");
    }
    let _ = writeln!(s, "wrote {}", out.display());
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:>10.6}"),
        None => format!("{:>10}", "n/a"),
    }
}

pub fn gcomp_table(est: &GcompEstimates, alpha_baseline: u8) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "g-computation decomposition (s_bar {}, tau {}, weights from regime {})",
        est.s_bar, est.tau, est.weight_regime
    );
    let _ = writeln!(s);
    let rows = [
        (
            "beta_0".to_string(),
            fmt_opt(Some(est.beta0)),
            format!("untreated survival past {}, regime 0", est.tau),
        ),
        (
            "beta_z".to_string(),
            fmt_opt(Some(est.beta_z)),
            "regime effect on untreated survival".to_string(),
        ),
        (
            format!("beta_(0,{}]", est.s_bar),
            fmt_opt(est.beta_interval),
            "treatment effect, mass-weighted".to_string(),
        ),
        (
            format!("beta_z(0,{}]", est.s_bar),
            fmt_opt(est.beta_z_interval),
            "interaction, mass-weighted".to_string(),
        ),
        (
            "alpha_z".to_string(),
            fmt_opt(Some(est.alpha_z(alpha_baseline))),
            format!("take-up contrast by {}, baseline regime {}", est.s_bar, alpha_baseline),
        ),
    ];
    let w = rows.iter().map(|r| r.0.len()).max().unwrap();
    for (label, value, note) in &rows {
        let _ = writeln!(s, "  {label:<w$}  {value}   {note}");
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "  cumulative treatment mass by {}: {:.4} (regime 0), {:.4} (regime 1)",
        est.s_bar,
        est.cumulative_mass(0),
        est.cumulative_mass(1)
    );
    if !est.treated_effects_available {
        let _ = writeln!(s, "  note: no treated spells, treatment effects unavailable");
    }
    if est.carried_cells {
        let _ = writeln!(s, "  note: at least one empty cell carried forward");
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "  {:>4}  {:>9}  {:>9}  {:>10}  {:>10}",
        "s", "mass_z0", "mass_z1", "beta_s", "beta_zs"
    );
    for p in &est.per_s {
        let _ = writeln!(
            s,
            "  {:>4}  {:>9.6}  {:>9.6}  {}  {}",
            p.s,
            p.mass[0],
            p.mass[1],
            fmt_opt(p.beta_s),
            fmt_opt(p.beta_zs)
        );
    }
    s
}

pub fn fit_table(fit: &FitResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "piecewise-hazard fit");
    let _ = writeln!(
        s,
        "  {} spells, {} exit events, {} treatment events",
        fit.n_spells, fit.n_exit_events, fit.n_treat_events
    );
    let _ = writeln!(
        s,
        "  log-likelihood {:.6} after {} iterations (gradient norm {:.3e})",
        fit.loglik, fit.iterations, fit.grad_norm
    );
    let _ = writeln!(s);
    let w = fit
        .param_names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(0)
        .max("parameter".len());
    let _ = writeln!(s, "  {:<w$}  {:>12}  {:>12}", "parameter", "estimate", "std error");
    let theta = fit.params.pack();
    for ((name, est), se) in fit.param_names.iter().zip(&theta).zip(&fit.std_errors) {
        let _ = writeln!(s, "  {name:<w$}  {est:>12.6}  {se:>12.6}");
    }
    if !fit.unidentified.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "  pinned at zero (no events or no exposure): {}",
            fit.unidentified.join(", ")
        );
    }
    s
}

fn effect_row(s: &mut String, w: usize, label: &str, e: &EffectEstimate, note: &str) {
    let _ = writeln!(
        s,
        "  {label:<w$}  {:>10.6}  ({:.6})  [{:.4}]   {note}",
        e.value, e.std_error, e.p_value
    );
}

pub fn decomposition_table(
    res: &DecompositionResult,
    data: &Dataset,
    strata: Option<&SubstrataEstimates>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "causal decomposition (s_bar {}, tau {}, weights from regime {})",
        res.s_bar, res.tau, res.weight_regime
    );
    let _ = writeln!(s, "  standard errors in parentheses, p-values in brackets");
    let _ = writeln!(s);
    let ib = format!("beta_(0,{}]", res.s_bar);
    let izb = format!("beta_z(0,{}]", res.s_bar);
    let w = ["beta_0", "beta_z", &ib, &izb, "alpha_z"]
        .iter()
        .map(|l| l.len())
        .max()
        .unwrap();
    effect_row(
        &mut s,
        w,
        "beta_0",
        &res.beta0,
        &format!("untreated survival past {}, regime 0", res.tau),
    );
    effect_row(&mut s, w, "beta_z", &res.beta_z, "regime effect on untreated survival");
    effect_row(&mut s, w, &ib, &res.beta_interval, "treatment effect, mass-weighted");
    effect_row(&mut s, w, &izb, &res.beta_z_interval, "interaction, mass-weighted");
    effect_row(
        &mut s,
        w,
        "alpha_z",
        &res.alpha_z,
        &format!(
            "take-up contrast by {}, baseline regime {}",
            res.s_bar, res.alpha_baseline
        ),
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "  per-period effects (mass from regime {})", res.weight_regime);
    let _ = writeln!(
        s,
        "  {:>4}  {:>9}  {:>10}  {:>10}  {:>10}  {:>10}",
        "s", "mass", "beta_s", "(se)", "beta_zs", "(se)"
    );
    for p in &res.per_s {
        let _ = writeln!(
            s,
            "  {:>4}  {:>9.6}  {:>10.6}  ({:.6})  {:>10.6}  ({:.6})",
            p.s, p.mass, p.beta_s.value, p.beta_s.std_error, p.beta_zs.value, p.beta_zs.std_error
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "  sample");
    let _ = writeln!(
        s,
        "  {:<8}  {:>8}  {:>10}  {:>8}",
        "regime", "treated", "untreated", "total"
    );
    let mut all_treated = 0;
    let mut all_untreated = 0;
    for z in 0..=1u8 {
        let total = data.records().iter().filter(|r| r.regime == z).count();
        let treated = data
            .records()
            .iter()
            .filter(|r| r.regime == z && r.treat_time.is_some())
            .count();
        all_treated += treated;
        all_untreated += total - treated;
        let _ = writeln!(s, "  {z:<8}  {treated:>8}  {:>10}  {total:>8}", total - treated);
    }
    let _ = writeln!(
        s,
        "  {:<8}  {all_treated:>8}  {all_untreated:>10}  {:>8}",
        "all",
        all_treated + all_untreated
    );
    if let Some(est) = strata {
        let _ = writeln!(s);
        s.push_str(&substrata_block(est));
    }
    s
}

fn substrata_block(est: &SubstrataEstimates) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "  substrata at s = {} (tau {})", est.s, est.tau);
    let matched = match est.s_prime {
        SPrime::Within(u) => u.to_string(),
        SPrime::BeyondTau => format!("beyond {}", est.tau),
    };
    let _ = writeln!(
        s,
        "  Pr(as) {:.4}   Pr(cs) {:.4}   Pr(ns) {:.4}   higher-survival regime {}, matched period {}",
        est.probs.pr_as, est.probs.pr_cs, est.probs.pr_ns, est.probs.higher_survival_regime, matched
    );
    let low = 1 - est.probs.higher_survival_regime;
    let _ = writeln!(
        s,
        "  beta_0|as   {:>10.6}   untreated survival past {} among always-survivors, regime {low}",
        est.beta0_as, est.tau
    );
    let _ = writeln!(
        s,
        "  beta_z|as   {:>10.6}   regime contrast among always-survivors",
        est.beta_z_as
    );
    let _ = writeln!(
        s,
        "  beta_s|as   {}   treatment-at-{} effect among always-survivors, regime {low}",
        fmt_opt(est.beta_s_as),
        est.s
    );
    let cs_note = if est.beta_zs_cs.is_none() {
        "   (complier share degenerate or interaction unavailable)".to_string()
    } else if est.cs_unstable {
        "   interaction per compliant survivor (unstable: Pr(cs) below floor)".to_string()
    } else {
        "   interaction per compliant survivor".to_string()
    };
    let _ = writeln!(s, "  beta_zs|cs  {}{cs_note}", fmt_opt(est.beta_zs_cs));
    s
}

pub fn substrata_table(est: &SubstrataEstimates) -> String {
    format!("principal-stratum summary\n\n{}", substrata_block(est))
}
