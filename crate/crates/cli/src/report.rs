//! Result persistence: aggregate CSV, per-trial CSV, and the full JSON
//! record. CSV content is built as strings so callers can byte-compare runs.

use std::path::Path;

use grip_core::metrics::{MethodSummary, TrialOutcome};

use crate::pipeline::{ResultRecord, TrialRecord};
use crate::PipelineError;

/// Aggregate rows, one per (method, q).
pub fn results_csv_string(summaries: &[MethodSummary]) -> String {
    let mut out = String::from(MethodSummary::CSV_HEADER);
    out.push('\n');
    for s in summaries {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

/// Aggregate rows prefixed by a sweep key column (used by parameter sweeps).
pub fn sweep_csv_string(key_name: &str, rows: &[(String, MethodSummary)]) -> String {
    let mut out = format!("{key_name},{}\n", MethodSummary::CSV_HEADER);
    for (key, s) in rows {
        out.push_str(key);
        out.push(',');
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

fn sanitize(err: &str) -> String {
    err.replace([',', '\n', '\r'], ";")
}

/// Per-trial rows; failed trials carry the error string and empty metrics.
pub fn trials_csv_string(trials: &[TrialRecord]) -> String {
    let mut out = String::from("trial_id,method,q,power,fdp,n_selected,selected,error\n");
    for t in trials {
        if let Some(err) = &t.error {
            out.push_str(&format!("{},,,,,,,{}\n", t.trial_id, sanitize(err)));
            continue;
        }
        for o in &t.outcomes {
            out.push_str(&trial_row(o));
            out.push('\n');
        }
    }
    out
}

fn trial_row(o: &TrialOutcome) -> String {
    let power = if o.truth.is_empty() {
        String::new()
    } else {
        grip_core::metrics::power(&o.selected, &o.truth)
            .map(|v| v.to_string())
            .unwrap_or_default()
    };
    let fdp = if o.truth.is_empty() {
        String::new()
    } else {
        grip_core::metrics::fdp(&o.selected, &o.truth).to_string()
    };
    let selected: Vec<String> = o.selected.iter().map(|j| (j + 1).to_string()).collect();
    format!(
        "{},{},{},{},{},{},{},",
        o.trial_id,
        o.method_name,
        o.q,
        power,
        fdp,
        o.selected.len(),
        selected.join("|")
    )
}

pub fn write_results_csv(path: &Path, summaries: &[MethodSummary]) -> Result<(), PipelineError> {
    std::fs::write(path, results_csv_string(summaries))
        .map_err(|e| PipelineError::Io(format!("writing {}: {e}", path.display())))
}

pub fn write_trials_csv(path: &Path, trials: &[TrialRecord]) -> Result<(), PipelineError> {
    std::fs::write(path, trials_csv_string(trials))
        .map_err(|e| PipelineError::Io(format!("writing {}: {e}", path.display())))
}

pub fn write_record_json(path: &Path, records: &[ResultRecord]) -> Result<(), PipelineError> {
    let json = if records.len() == 1 {
        serde_json::to_string_pretty(&records[0])
    } else {
        serde_json::to_string_pretty(records)
    }
    .map_err(|e| PipelineError::Io(format!("serializing record: {e}")))?;
    std::fs::write(path, json)
        .map_err(|e| PipelineError::Io(format!("writing {}: {e}", path.display())))
}
