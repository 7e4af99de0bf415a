//! treatment-time weights: each spell contributes its fitted treatment
//! sub-density at s, normalized over spells (single-s mode) or over both
//! spells and periods 1..=s_bar (interval mode).
//!
//! spells sharing a covariate pattern get identical weights, so the table
//! is stored per pattern with multiplicities; a pattern's stored value is
//! the sum of its spells' weights.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};
use crate::phmodel::{predict_treatment_density, FitResult, HazardParams};
use crate::spells::Dataset;

/// unique covariate rows with multiplicities, in first-seen order.
#[derive(Debug, Clone)]
pub(crate) struct PatternSet {
    pub patterns: Vec<Vec<f64>>,
    pub counts: Vec<f64>,
}

pub(crate) fn collect_patterns(dataset: &Dataset) -> PatternSet {
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    let mut patterns: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for rec in &dataset.records {
        let key: Vec<u64> = rec.covariates.iter().map(|v| v.to_bits()).collect();
        let ix = *seen.entry(key).or_insert_with(|| {
            patterns.push(rec.covariates.clone());
            counts.push(0.0);
            patterns.len() - 1
        });
        counts[ix] += 1.0;
    }
    PatternSet { patterns, counts }
}

/// weight normalization window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightWindow {
    /// single treatment period; weights sum to 1 over spells
    At(u32),
    /// periods 1..=s_bar; weights sum to 1 over spells and periods jointly
    UpTo(u32),
}

/// normalized weight table. `values[row][pattern]` is the total weight of
/// all spells carrying that pattern in period `s_lo + row`; the whole
/// table sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub regime: u8,
    pub s_lo: u32,
    pub s_hi: u32,
    pub patterns: Vec<Vec<f64>>,
    pub counts: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl WeightVector {
    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    /// total weight mass of period s.
    pub fn period_mass(&self, s: u32) -> Option<f64> {
        if s < self.s_lo || s > self.s_hi {
            return None;
        }
        Some(self.values[(s - self.s_lo) as usize].iter().sum())
    }

    /// per-pattern weights renormalized within period s.
    pub fn conditional_row(&self, s: u32) -> Option<Vec<f64>> {
        let mass = self.period_mass(s)?;
        if mass <= 0.0 {
            return None;
        }
        let row = &self.values[(s - self.s_lo) as usize];
        Some(row.iter().map(|v| v / mass).collect())
    }
}

/// raw (unnormalized) weight of each pattern at period s: multiplicity
/// times the fitted treatment sub-density at s under the weight regime.
pub(crate) fn raw_weight_row(
    params: &HazardParams,
    pats: &PatternSet,
    regime: u8,
    s: u32,
) -> Result<Vec<f64>> {
    pats.patterns
        .iter()
        .zip(&pats.counts)
        .map(|(x, count)| Ok(count * predict_treatment_density(params, x, regime, s as f64)?))
        .collect()
}

/// fitted treatment-time weights for the dataset's covariate profiles.
pub fn compute_weights(
    fit: &FitResult,
    dataset: &Dataset,
    window: WeightWindow,
    regime: u8,
) -> Result<WeightVector> {
    if regime > 1 {
        return Err(SurvError::Config(format!("regime must be 0 or 1, got {regime}")));
    }
    let (s_lo, s_hi) = match window {
        WeightWindow::At(s) if s >= 1 => (s, s),
        WeightWindow::UpTo(s_bar) if s_bar >= 1 => (1, s_bar),
        _ => return Err(SurvError::Config("weight window must start at period 1 or later".into())),
    };
    let pats = collect_patterns(dataset);
    if pats.patterns.is_empty() {
        return Err(SurvError::ZeroWeights { period: s_lo });
    }
    let mut values: Vec<Vec<f64>> = Vec::with_capacity((s_hi - s_lo + 1) as usize);
    for s in s_lo..=s_hi {
        values.push(raw_weight_row(&fit.params, &pats, regime, s)?);
    }
    let total: f64 = values.iter().flatten().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SurvError::ZeroWeights { period: s_hi });
    }
    for row in &mut values {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(WeightVector {
        regime,
        s_lo,
        s_hi,
        patterns: pats.patterns,
        counts: pats.counts,
        values,
    })
}
