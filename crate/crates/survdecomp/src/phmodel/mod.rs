//! continuous-time proportional-hazard model with piecewise-constant
//! baselines for two competing processes on each spell:
//!
//! * exit: rate `lambda_T[segment(t), z, d] * exp(x' beta_T)`, where d
//!   indicates the treated state. a spell treated in period s switches
//!   baseline at continuous time s-1, so the treatment period itself runs
//!   at the treated rate (treatment precedes the exit decision within the
//!   period).
//! * treatment: rate `lambda_S[segment(t), z] * exp(x' beta_S)`, active
//!   while untreated.
//!
//! both processes enter one joint log-likelihood; events contribute the
//! log rate at the event time, exposure contributes the integrated rate.
//! time is measured in period units with period t covering (t-1, t], and
//! segments are left-open right-closed so an event at a boundary belongs
//! to the segment it closes.

pub mod fit;
pub mod loglik;
pub mod optim;
pub mod predict;
pub(crate) mod suffstat;

pub use fit::{fit, FitOptions, FitResult};
pub use loglik::{log_likelihood, log_likelihood_gradient};
pub use predict::{
    cumulative_treatment_hazard, predict_survival, predict_treatment_density,
    predict_treatment_mass, TreatmentPath,
};

use crate::error::{Result, SurvError};
use serde::{Deserialize, Serialize};

/// piecewise-constant baseline layout: segment j covers
/// (starts[j], starts[j+1]], the last segment is open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSpec {
    starts: Vec<f64>,
}

impl PiecewiseSpec {
    /// builds from segment start times; the first must be 0 and the rest
    /// strictly increasing.
    pub fn new(starts: Vec<f64>) -> Result<Self> {
        if starts.first() != Some(&0.0) {
            return Err(SurvError::Config(
                "first segment must start at 0".into(),
            ));
        }
        if starts.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(SurvError::Config(
                "segment starts must be finite and strictly increasing".into(),
            ));
        }
        Ok(PiecewiseSpec { starts })
    }

    /// convenience: interior cutpoints only, 0 prepended.
    pub fn from_cutpoints(cuts: &[f64]) -> Result<Self> {
        let mut starts = Vec::with_capacity(cuts.len() + 1);
        starts.push(0.0);
        starts.extend_from_slice(cuts);
        PiecewiseSpec::new(starts)
    }

    /// equal-width segments covering (0, width * count], last open-ended.
    pub fn equal_width(width: f64, count: usize) -> Result<Self> {
        if count == 0 || !(width > 0.0) {
            return Err(SurvError::Config(
                "need a positive width and at least one segment".into(),
            ));
        }
        PiecewiseSpec::new((0..count).map(|j| j as f64 * width).collect())
    }

    pub fn n_segments(&self) -> usize {
        self.starts.len()
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    /// segment containing time t under the (lo, hi] convention; t must be
    /// positive.
    pub fn segment_of(&self, t: f64) -> usize {
        match self.starts.iter().position(|s| *s >= t) {
            Some(pos) => pos.saturating_sub(1),
            None => self.starts.len() - 1,
        }
    }

    /// length of the overlap of (a, b] with segment j.
    pub fn overlap(&self, j: usize, a: f64, b: f64) -> f64 {
        let lo = self.starts[j].max(a);
        let hi = if j + 1 < self.starts.len() {
            self.starts[j + 1].min(b)
        } else {
            b
        };
        (hi - lo).max(0.0)
    }
}

/// full parameter set of the joint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardParams {
    pub exit_spec: PiecewiseSpec,
    pub treat_spec: PiecewiseSpec,
    /// log baseline exit rates, indexed [segment][z][treated-state]
    pub log_exit: Vec<[[f64; 2]; 2]>,
    /// log baseline treatment rates, indexed [segment][z]
    pub log_treat: Vec<[f64; 2]>,
    /// exit-process covariate coefficients
    pub beta_exit: Vec<f64>,
    /// treatment-process covariate coefficients
    pub beta_treat: Vec<f64>,
}

impl HazardParams {
    /// all-zero parameters (unit baseline rates) for the given layout.
    pub fn zeroed(exit_spec: PiecewiseSpec, treat_spec: PiecewiseSpec, covariates: usize) -> Self {
        let log_exit = vec![[[0.0; 2]; 2]; exit_spec.n_segments()];
        let log_treat = vec![[0.0; 2]; treat_spec.n_segments()];
        HazardParams {
            exit_spec,
            treat_spec,
            log_exit,
            log_treat,
            beta_exit: vec![0.0; covariates],
            beta_treat: vec![0.0; covariates],
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.beta_exit.len()
    }

    /// packed parameter count.
    pub fn n_params(&self) -> usize {
        4 * self.log_exit.len() + 2 * self.log_treat.len() + self.beta_exit.len() + self.beta_treat.len()
    }

    /// packs into one vector: exit baselines (segment-major, then z, then
    /// treated state), treatment baselines (segment-major, then z), exit
    /// coefficients, treatment coefficients.
    pub fn pack(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_params());
        for seg in &self.log_exit {
            for zrow in seg {
                theta.extend_from_slice(zrow);
            }
        }
        for seg in &self.log_treat {
            theta.extend_from_slice(seg);
        }
        theta.extend_from_slice(&self.beta_exit);
        theta.extend_from_slice(&self.beta_treat);
        theta
    }

    /// rebuilds a parameter set with the same layout from a packed vector.
    pub fn with_packed(&self, theta: &[f64]) -> HazardParams {
        assert_eq!(theta.len(), self.n_params(), "packed length mismatch");
        let mut out = self.clone();
        let mut ix = 0;
        for seg in &mut out.log_exit {
            for zrow in seg.iter_mut() {
                for v in zrow.iter_mut() {
                    *v = theta[ix];
                    ix += 1;
                }
            }
        }
        for seg in &mut out.log_treat {
            for v in seg.iter_mut() {
                *v = theta[ix];
                ix += 1;
            }
        }
        for v in &mut out.beta_exit {
            *v = theta[ix];
            ix += 1;
        }
        for v in &mut out.beta_treat {
            *v = theta[ix];
            ix += 1;
        }
        out
    }

    /// human-readable name per packed position.
    pub fn param_names(&self, covariate_names: &[String]) -> Vec<String> {
        let cov = |k: usize| {
            covariate_names
                .get(k)
                .cloned()
                .unwrap_or_else(|| format!("x{k}"))
        };
        let mut names = Vec::with_capacity(self.n_params());
        for j in 0..self.log_exit.len() {
            for z in 0..2 {
                for d in 0..2 {
                    let state = if d == 0 { "untreated" } else { "treated" };
                    names.push(format!("log lambda_exit[seg {j}, z={z}, {state}]"));
                }
            }
        }
        for j in 0..self.log_treat.len() {
            for z in 0..2 {
                names.push(format!("log lambda_treat[seg {j}, z={z}]"));
            }
        }
        for k in 0..self.beta_exit.len() {
            names.push(format!("beta_exit[{}]", cov(k)));
        }
        for k in 0..self.beta_treat.len() {
            names.push(format!("beta_treat[{}]", cov(k)));
        }
        names
    }
}

/// continuous time at which a spell treated in period s switches to the
/// treated exit baseline: the start of the treatment period.
pub(crate) fn treated_switch_time(s: f64) -> f64 {
    (s - 1.0).max(0.0)
}
