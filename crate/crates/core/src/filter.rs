//! Knockoff statistics, the data-dependent selection threshold, and the
//! selected set.
//!
//! The statistic for feature `j` is the persistence-score difference
//! `W_j = S_j - S_{j+p}`; the threshold is the standard knockoff/knockoff+
//! rule, with `offset = 1` giving finite-sample FDR control.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grip::PersistenceScores;

/// Signed importance statistics plus the filter settings.
#[derive(Debug, Clone)]
pub struct KnockoffStats {
    pub w: Array1<f64>,
    /// Target FDR in (0, 1).
    pub q: f64,
    /// 0 for the knockoff rule, 1 for knockoff+.
    pub offset: u8,
}

impl KnockoffStats {
    pub fn new(w: Array1<f64>, q: f64, offset: u8) -> Result<Self> {
        // The boundary q = 1 is admitted for tie-handling checks.
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::DimensionMismatch(format!(
                "target FDR must be in (0, 1], got {q}"
            )));
        }
        if offset > 1 {
            return Err(Error::DimensionMismatch(
                "offset must be 0 (knockoff) or 1 (knockoff+)".into(),
            ));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData("knockoff statistics".into()));
        }
        Ok(Self { w, q, offset })
    }
}

/// Threshold, selected indices (0-based, ascending), and the statistics that
/// produced them.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub threshold: f64,
    pub selected: Vec<usize>,
    pub stats: KnockoffStats,
}

/// JSON rendering of a selection; indices are 1-based and an infinite
/// threshold serializes as null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResultJson {
    pub w: Vec<f64>,
    pub tau: Option<f64>,
    pub selected: Vec<usize>,
    pub q: f64,
    pub offset: u8,
}

impl SelectionResult {
    pub fn to_json_struct(&self) -> SelectionResultJson {
        SelectionResultJson {
            w: self.stats.w.to_vec(),
            tau: if self.threshold.is_finite() {
                Some(self.threshold)
            } else {
                None
            },
            selected: self.selected.iter().map(|&j| j + 1).collect(),
            q: self.stats.q,
            offset: self.stats.offset,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_struct())
            .expect("selection serialization cannot fail")
    }
}

/// Paired score differences `w_j = s_j - s_{j+p}` for `j = 0..p`.
pub fn knockoff_stats(scores: &PersistenceScores, p: usize) -> Result<Array1<f64>> {
    let s = &scores.s_hat;
    if s.len() != 2 * p {
        return Err(Error::LengthMismatch {
            left: s.len(),
            right: 2 * p,
        });
    }
    Ok(Array1::from_iter((0..p).map(|j| s[j] - s[j + p])))
}

/// Data-dependent threshold
/// `tau = min { t in {|w_j| : w_j != 0} :
///              (offset + #{j : w_j <= -t}) / max(1, #{j : w_j >= t}) <= q }`,
/// or +inf when no candidate passes (empty selection).
pub fn knockoff_threshold(stats: &KnockoffStats) -> f64 {
    let mut candidates: Vec<f64> = stats
        .w
        .iter()
        .filter(|&&v| v != 0.0)
        .map(|v| v.abs())
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let offset = stats.offset as f64;
    for &t in &candidates {
        let neg = stats.w.iter().filter(|&&v| v <= -t).count() as f64;
        let pos = stats.w.iter().filter(|&&v| v >= t).count() as f64;
        if (offset + neg) / pos.max(1.0) <= stats.q {
            return t;
        }
    }
    f64::INFINITY
}

/// Applies the threshold: the selection is `{j : w_j >= tau}` (ties at the
/// threshold are included).
pub fn select(stats: KnockoffStats) -> SelectionResult {
    let threshold = knockoff_threshold(&stats);
    let selected: Vec<usize> = stats
        .w
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= threshold)
        .map(|(j, _)| j)
        .collect();
    SelectionResult {
        threshold,
        selected,
        stats,
    }
}

/// Exhaustive-scan reference for the threshold; used by tests and the
/// acceptance suite as an independent oracle.
pub fn knockoff_threshold_bruteforce(w: &ArrayView1<'_, f64>, q: f64, offset: u8) -> f64 {
    let mut ts: Vec<f64> = w.iter().filter(|&&v| v != 0.0).map(|v| v.abs()).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let mut best = f64::INFINITY;
    for &t in ts.iter().rev() {
        let neg = w.iter().filter(|&&v| v <= -t).count() as f64;
        let pos = w.iter().filter(|&&v| v >= t).count() as f64;
        if (offset as f64 + neg) / pos.max(1.0) <= q {
            best = t;
        } else {
            // Keep scanning: the ratio is not monotone in t.
            continue;
        }
    }
    best
}
