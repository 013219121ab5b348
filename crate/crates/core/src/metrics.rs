//! Selection-quality metrics: false discovery proportion, power, pairwise
//! Jaccard stability, and per-group aggregation with standard errors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trial's selection against the ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_id: usize,
    pub method_name: String,
    pub q: f64,
    pub selected: BTreeSet<usize>,
    pub truth: BTreeSet<usize>,
}

/// False discovery proportion `|selected \ truth| / max(1, |selected|)`.
pub fn fdp(selected: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> f64 {
    let false_pos = selected.difference(truth).count();
    false_pos as f64 / (selected.len().max(1)) as f64
}

/// Fraction of true signals recovered.
pub fn power(selected: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let hits = selected.intersection(truth).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean pairwise Jaccard similarity across selections; a pair of empty sets
/// counts as 1 (perfectly stable emptiness).
pub fn jaccard_stability(selections: &[BTreeSet<usize>]) -> Result<f64> {
    let n = selections.len();
    if n < 2 {
        return Err(Error::TooFewTrials { n });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = &selections[i];
            let b = &selections[j];
            let union = a.union(b).count();
            total += if union == 0 {
                1.0
            } else {
                a.intersection(b).count() as f64 / union as f64
            };
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Aggregate over one (method, q) group of trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub q: f64,
    pub power: f64,
    pub power_se: f64,
    pub fdr: f64,
    pub fdr_se: f64,
    pub stability: f64,
    pub n_trials: usize,
    /// Set when the standard errors are degenerate (single trial).
    pub se_degenerate: bool,
}

impl MethodSummary {
    /// Header for the aggregate CSV rows.
    pub const CSV_HEADER: &'static str =
        "method,q,power,power_se,fdr,fdr_se,stability,n_trials";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.q,
            self.power,
            self.power_se,
            self.fdr,
            self.fdr_se,
            self.stability,
            self.n_trials
        )
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64, bool) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0, true);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt(), false)
}

/// Means, standard errors (sample std over sqrt(trials)), and stability for
/// a homogeneous group of outcomes (same method and q).
pub fn aggregate(outcomes: &[TrialOutcome]) -> Result<MethodSummary> {
    let first = outcomes.first().ok_or(Error::TooFewTrials { n: 0 })?;
    debug_assert!(outcomes
        .iter()
        .all(|o| o.method_name == first.method_name && o.q == first.q));
    let mut powers = Vec::with_capacity(outcomes.len());
    let mut fdps = Vec::with_capacity(outcomes.len());
    let mut selections = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        powers.push(power(&o.selected, &o.truth)?);
        fdps.push(fdp(&o.selected, &o.truth));
        selections.push(o.selected.clone());
    }
    let (power_mean, power_se, deg1) = mean_and_se(&powers);
    let (fdr_mean, fdr_se, deg2) = mean_and_se(&fdps);
    let stability = if selections.len() >= 2 {
        jaccard_stability(&selections)?
    } else {
        1.0
    };
    Ok(MethodSummary {
        method: first.method_name.clone(),
        q: first.q,
        power: power_mean,
        power_se,
        fdr: fdr_mean,
        fdr_se,
        stability,
        n_trials: outcomes.len(),
        se_degenerate: deg1 || deg2,
    })
}
