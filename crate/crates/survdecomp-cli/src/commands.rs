//! subcommand implementations. each returns `Ok(())` only after every
//! requested output has been written in full.

use std::fs;
use std::path::Path;

use survdecomp::ddcsim::{
    apply_censoring, simulate_panel, solve_reservation_table, to_dataset, DdcConfig,
    ExportCovariates,
};
use survdecomp::effects::{self, DecomposeOptions, SubstrataOptions};
use survdecomp::error::{Result, SurvError};
use survdecomp::nonparam::{self, CellPolicy, EmpiricalSource, StratumSelector, SurvivalCurve};
use survdecomp::phmodel::{self, FitOptions, PiecewiseSpec};
use survdecomp::spells::io::{load_spells, write_spells, SpellSchema};
use survdecomp::spells::riskset::build_risk_sets;
use survdecomp::spells::{discretize, Dataset, DiscreteDataset, TimeGrid};

use crate::report;
use crate::{
    Covariates, DecomposeArgs, FitArgs, Format, GcompArgs, InputArgs, KmArgs, SimulateArgs,
    SpecArgs, SubstrataArgs,
};

/// keeps the error class while naming the file that failed.
fn with_path(err: SurvError, path: &Path) -> SurvError {
    match err {
        SurvError::Io(io) => SurvError::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

/// reads a spell file and places it on a period grid. the grid horizon
/// defaults to the latest terminal event in the file.
fn load_discrete(args: &InputArgs) -> Result<(Dataset, DiscreteDataset)> {
    let schema = match &args.schema {
        Some(path) => SpellSchema::from_json_file(path).map_err(|e| with_path(e, path))?,
        None => SpellSchema::default(),
    };
    let (data, load) = load_spells(&args.input, &schema).map_err(|e| with_path(e, &args.input))?;
    if !load.rejections.is_empty() {
        eprintln!(
            "warning: rejected {} of {} rows",
            load.rejections.len(),
            load.rows_read
        );
    }
    if data.is_empty() {
        return Err(SurvError::EmptyStratum {
            selector: "all spells".into(),
        });
    }
    let horizon = match args.horizon {
        Some(h) => h,
        None => {
            let latest = data
                .records()
                .iter()
                .map(|r| r.terminal_time())
                .fold(0.0, f64::max);
            (latest / args.unit).ceil().max(1.0) as u32
        }
    };
    let grid = TimeGrid::new(args.unit, horizon)?;
    let discrete = discretize(&data, grid)?;
    Ok((data, discrete))
}

/// regime contrasts need observations from both arms.
fn require_both_regimes(data: &Dataset) -> Result<()> {
    let n1 = data.records().iter().filter(|r| r.regime == 1).count();
    if n1 == 0 || n1 == data.len() {
        let missing = if n1 == 0 { 1 } else { 0 };
        return Err(SurvError::Estimation(format!(
            "both regimes required: no spells in regime {missing}"
        )));
    }
    Ok(())
}

fn check_regime_switch(value: u8, flag: &str) -> Result<()> {
    if value > 1 {
        return Err(SurvError::Config(format!(
            "--{flag} must be 0 or 1, got {value}"
        )));
    }
    Ok(())
}

fn parse_starts(text: &str, which: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|e| {
                SurvError::Config(format!("{which} segment start `{}`: {e}", tok.trim()))
            })
        })
        .collect()
}

/// baseline specs from flags; explicit starts win over the equal-width
/// shorthand.
fn build_specs(args: &SpecArgs) -> Result<(PiecewiseSpec, PiecewiseSpec)> {
    let exit = match &args.exit_starts {
        Some(text) => PiecewiseSpec::new(parse_starts(text, "exit")?)?,
        None => PiecewiseSpec::equal_width(args.width, args.segments)?,
    };
    let treat = match &args.treat_starts {
        Some(text) => PiecewiseSpec::new(parse_starts(text, "treatment")?)?,
        None => PiecewiseSpec::equal_width(args.width, args.segments)?,
    };
    Ok((exit, treat))
}

fn fit_options(args: &SpecArgs) -> FitOptions {
    FitOptions {
        max_iterations: args.max_iterations,
        grad_tol: args.grad_tol,
        rel_obj_tol: args.rel_obj_tol,
    }
}

fn cell_policy(carry_forward: bool) -> CellPolicy {
    if carry_forward {
        CellPolicy::CarryForward
    } else {
        CellPolicy::Error
    }
}

/// writes the finished report to the requested path, or stdout when no
/// path was given.
fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| with_path(e.into(), path))?;
            serde_json::from_str::<DdcConfig>(&text)?
        }
        None => DdcConfig::default(),
    };
    if let Some(n) = args.n_agents {
        cfg.n_agents = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;

    let table = solve_reservation_table(&cfg)?;
    if let Some(path) = &args.reservation_out {
        fs::write(path, to_json(&table)?)?;
    }
    let panel = simulate_panel(&cfg, &table)?;
    let panel = if args.no_censoring {
        panel
    } else {
        apply_censoring(panel, &cfg)?
    };
    let covs = match args.covariates {
        Covariates::ADummies => ExportCovariates::ADummies,
        Covariates::None => ExportCovariates::None,
    };
    let data = to_dataset(&panel, &cfg, covs)?;
    write_spells(&data, &args.out, &SpellSchema::default())?;
    print!("{}", report::simulation_summary(&panel, &cfg, &args.out));
    Ok(())
}

fn write_curve(dir: &Path, name: &str, curve: &SurvivalCurve) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, report::curve_tsv(curve))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn km(args: KmArgs) -> Result<()> {
    let (data, discrete) = load_discrete(&args.input)?;
    fs::create_dir_all(&args.out_dir)?;
    let pooled = nonparam::kaplan_meier(
        &discrete,
        StratumSelector { regime: None },
        args.censor_at_treatment,
    )?;
    write_curve(&args.out_dir, "km_all.tsv", &pooled)?;
    if args.by_regime {
        require_both_regimes(&data)?;
        for z in 0..=1u8 {
            let curve = nonparam::kaplan_meier(
                &discrete,
                StratumSelector { regime: Some(z) },
                args.censor_at_treatment,
            )?;
            write_curve(&args.out_dir, &format!("km_z{z}.tsv"), &curve)?;
        }
    }
    Ok(())
}

pub fn gcomp(args: GcompArgs) -> Result<()> {
    check_regime_switch(args.weight_regime, "weight-regime")?;
    check_regime_switch(args.alpha_baseline, "alpha-baseline")?;
    let (data, discrete) = load_discrete(&args.input)?;
    require_both_regimes(&data)?;
    let est = nonparam::gcomp_decomposition(
        &discrete,
        args.s_bar,
        args.tau,
        args.weight_regime,
        cell_policy(args.carry_forward),
    )?;
    let text = match args.format {
        Format::Json => to_json(&est)?,
        Format::Table => report::gcomp_table(&est, args.alpha_baseline),
    };
    emit(&text, args.out.as_deref())
}

pub fn fit(args: FitArgs) -> Result<()> {
    let (data, _) = load_discrete(&args.input)?;
    let (exit_spec, treat_spec) = build_specs(&args.spec)?;
    let fitted = phmodel::fit(&data, exit_spec, treat_spec, &fit_options(&args.spec))?;
    let text = match args.format {
        Format::Json => to_json(&fitted)?,
        Format::Table => report::fit_table(&fitted),
    };
    emit(&text, args.out.as_deref())
}

/// decomposition report plus the optional substrata block, as one JSON
/// object when serialized.
#[derive(serde::Serialize)]
struct DecomposePayload<'a> {
    decomposition: &'a effects::DecompositionResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    substrata: Option<&'a nonparam::SubstrataEstimates>,
}

pub fn decompose(args: DecomposeArgs) -> Result<()> {
    check_regime_switch(args.weight_regime, "weight-regime")?;
    check_regime_switch(args.alpha_baseline, "alpha-baseline")?;
    let (data, _) = load_discrete(&args.input)?;
    require_both_regimes(&data)?;
    let (exit_spec, treat_spec) = build_specs(&args.spec)?;
    let fitted = phmodel::fit(&data, exit_spec, treat_spec, &fit_options(&args.spec))?;
    let opts = DecomposeOptions {
        weight_regime: args.weight_regime,
        alpha_baseline: args.alpha_baseline,
    };
    let result = effects::decompose(&fitted, &data, args.s_bar, args.tau, &opts)?;
    let strata = match args.substrata_s {
        Some(s) => {
            let curves = effects::model_substrata_curves(&fitted, &data, s, args.tau)?;
            let beta_zs = result
                .per_s
                .iter()
                .find(|p| p.s == s)
                .map(|p| p.beta_zs.value);
            let opts = SubstrataOptions {
                cs_floor: args.cs_floor,
            };
            Some(effects::substrata_effects(&curves, s, args.tau, beta_zs, &opts)?)
        }
        None => None,
    };
    if let Some(path) = &args.fit_out {
        fs::write(path, to_json(&fitted)?)?;
    }
    let text = match args.format {
        Format::Json => to_json(&DecomposePayload {
            decomposition: &result,
            substrata: strata.as_ref(),
        })?,
        Format::Table => report::decomposition_table(&result, &data, strata.as_ref()),
    };
    emit(&text, args.out.as_deref())
}

pub fn substrata(args: SubstrataArgs) -> Result<()> {
    check_regime_switch(args.weight_regime, "weight-regime")?;
    let (data, discrete) = load_discrete(&args.input)?;
    require_both_regimes(&data)?;
    let policy = cell_policy(args.carry_forward);
    let table = build_risk_sets(&discrete);
    let source = EmpiricalSource::new(&table, policy);
    // the interaction handed to the complier effect comes from the same
    // nonparametric cells the curves are built on
    let gc =
        nonparam::gcomp_decomposition(&discrete, args.s, args.tau, args.weight_regime, policy)?;
    let beta_zs = gc
        .per_s
        .iter()
        .find(|p| p.s == args.s)
        .and_then(|p| p.beta_zs);
    let opts = SubstrataOptions {
        cs_floor: args.cs_floor,
    };
    let est = effects::substrata_effects(&source, args.s, args.tau, beta_zs, &opts)?;
    let text = match args.format {
        Format::Json => to_json(&est)?,
        Format::Table => report::substrata_table(&est),
    };
    emit(&text, args.out.as_deref())
}
