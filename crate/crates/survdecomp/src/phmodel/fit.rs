//! maximum-likelihood fitting with identifiability screening and a
//! curvature-based covariance estimate.

use std::collections::HashSet;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::optim::{bfgs, BfgsOptions};
use super::suffstat::{eval, SuffStats};
use super::{HazardParams, PiecewiseSpec};
use crate::error::{Result, SurvError};
use crate::spells::Dataset;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// stop when the gradient max-norm falls below this
    pub grad_tol: f64,
    /// stop when the relative objective change falls below this
    pub rel_obj_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            grad_tol: 1e-6,
            rel_obj_tol: 1e-9,
        }
    }
}

/// fitted model: point estimates, curvature-based covariance in packed
/// parameter order, and bookkeeping about the optimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: HazardParams,
    /// inverse observed information; rows and columns of dropped
    /// coefficients are zero
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub param_names: Vec<String>,
    /// coefficient names excluded from the fit (all-zero columns); their
    /// estimates are pinned at zero
    pub unidentified: Vec<String>,
    pub loglik: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub n_spells: usize,
    pub n_exit_events: usize,
    pub n_treat_events: usize,
}

impl FitResult {
    /// standard error looked up by parameter name.
    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|ix| self.std_errors[ix])
    }
}

/// step size for differentiating the analytic gradient a second time.
fn hessian_step(theta: f64) -> f64 {
    (1e-5_f64).max(1e-5 * theta.abs())
}

pub fn fit(
    dataset: &Dataset,
    exit_spec: PiecewiseSpec,
    treat_spec: PiecewiseSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    let p = dataset.covariate_names.len();
    let stats = SuffStats::build(dataset, &exit_spec, &treat_spec);
    let template = HazardParams::zeroed(exit_spec, treat_spec, p);
    let names = template.param_names(&dataset.covariate_names);
    let n_full = template.n_params();
    let offset_beta_exit = stats.n_exit_cells + stats.n_treat_cells;
    let offset_beta_treat = offset_beta_exit + p;

    // a baseline cell with no events or no exposure has no interior
    // maximizer; report every such cell by name
    let mut dead: Vec<String> = Vec::new();
    for cell in 0..stats.n_exit_cells {
        let (ev, ex) = stats.exit_cell_totals(cell);
        if ev == 0.0 || ex == 0.0 {
            dead.push(names[cell].clone());
        }
    }
    for cell in 0..stats.n_treat_cells {
        let (ev, ex) = stats.treat_cell_totals(cell);
        if ev == 0.0 || ex == 0.0 {
            dead.push(names[stats.n_exit_cells + cell].clone());
        }
    }
    if !dead.is_empty() {
        return Err(SurvError::Unidentified { names: dead });
    }

    // exactly duplicated covariate columns make the information singular
    for k in 0..p {
        for l in (k + 1)..p {
            let equal = dataset
                .records
                .iter()
                .all(|r| r.covariates[k].to_bits() == r.covariates[l].to_bits());
            if equal {
                return Err(SurvError::SingularInformation {
                    names: vec![
                        dataset.covariate_names[k].clone(),
                        dataset.covariate_names[l].clone(),
                    ],
                });
            }
        }
    }

    // all-zero columns carry no information; pin their coefficients at
    // zero and flag them instead of failing
    let mut dropped_cols: Vec<usize> = Vec::new();
    for k in 0..p {
        if dataset.records.iter().all(|r| r.covariates[k] == 0.0) {
            dropped_cols.push(k);
        }
    }
    let mut unidentified: Vec<String> = Vec::new();
    let mut dropped_ix: HashSet<usize> = HashSet::new();
    for &k in &dropped_cols {
        dropped_ix.insert(offset_beta_exit + k);
        dropped_ix.insert(offset_beta_treat + k);
        unidentified.push(names[offset_beta_exit + k].clone());
        unidentified.push(names[offset_beta_treat + k].clone());
    }
    let active: Vec<usize> = (0..n_full).filter(|ix| !dropped_ix.contains(ix)).collect();

    // occurrence/exposure rates start the baselines, coefficients start
    // at zero
    let mut start = template.clone();
    for cell in 0..stats.n_exit_cells {
        let (ev, ex) = stats.exit_cell_totals(cell);
        let j = cell / 4;
        let z = (cell / 2) % 2;
        let d = cell % 2;
        start.log_exit[j][z][d] = (ev / ex).ln();
    }
    for cell in 0..stats.n_treat_cells {
        let (ev, ex) = stats.treat_cell_totals(cell);
        start.log_treat[cell / 2][cell % 2] = (ev / ex).ln();
    }
    let start_full = start.pack();
    let start_active: Vec<f64> = active.iter().map(|&ix| start_full[ix]).collect();

    let expand = |reduced: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; n_full];
        for (i, &ix) in active.iter().enumerate() {
            full[ix] = reduced[i];
        }
        full
    };
    let grad_active = |reduced: &[f64]| -> (f64, Vec<f64>) {
        let params = template.with_packed(&expand(reduced));
        let (ll, g) = eval(&stats, &params);
        (ll, active.iter().map(|&ix| g[ix]).collect())
    };

    let objective = |reduced: &[f64]| {
        let (ll, g) = grad_active(reduced);
        (-ll, g.into_iter().map(|v| -v).collect())
    };
    let out = bfgs(
        objective,
        start_active,
        &BfgsOptions {
            max_iterations: opts.max_iterations,
            grad_tol: opts.grad_tol,
            rel_obj_tol: opts.rel_obj_tol,
        },
    )?;

    // observed information from central differences of the analytic
    // gradient, then symmetrized
    let m = active.len();
    let mut info = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let h = hessian_step(out.theta[i]);
        let mut up = out.theta.clone();
        up[i] += h;
        let mut dn = out.theta.clone();
        dn[i] -= h;
        let (_, gu) = grad_active(&up);
        let (_, gd) = grad_active(&dn);
        for r in 0..m {
            // information is minus the Hessian of the log-likelihood
            info[(r, i)] = -(gu[r] - gd[r]) / (2.0 * h);
        }
    }
    info = (&info + info.transpose()) * 0.5;

    let cov_active = match info.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => {
            let eig = SymmetricEigen::new(info);
            let (mut min_ix, mut min_val) = (0, f64::INFINITY);
            for (i, v) in eig.eigenvalues.iter().enumerate() {
                if *v < min_val {
                    min_val = *v;
                    min_ix = i;
                }
            }
            let dir = eig.eigenvectors.column(min_ix);
            let peak = dir.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let culprits: Vec<String> = dir
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() >= 0.5 * peak)
                .map(|(i, _)| names[active[i]].clone())
                .collect();
            return Err(SurvError::SingularInformation { names: culprits });
        }
    };

    let mut covariance = vec![vec![0.0; n_full]; n_full];
    for (i, &ix) in active.iter().enumerate() {
        for (j, &jx) in active.iter().enumerate() {
            covariance[ix][jx] = cov_active[(i, j)];
        }
    }
    let std_errors: Vec<f64> = (0..n_full).map(|ix| covariance[ix][ix].max(0.0).sqrt()).collect();

    let params = template.with_packed(&expand(&out.theta));
    let n_exit_events = (0..stats.n_exit_cells)
        .map(|c| stats.exit_cell_totals(c).0)
        .sum::<f64>() as usize;
    let n_treat_events = (0..stats.n_treat_cells)
        .map(|c| stats.treat_cell_totals(c).0)
        .sum::<f64>() as usize;

    Ok(FitResult {
        params,
        covariance,
        std_errors,
        param_names: names,
        unidentified,
        loglik: -out.value,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        n_spells: dataset.records.len(),
        n_exit_events,
        n_treat_events,
    })
}
