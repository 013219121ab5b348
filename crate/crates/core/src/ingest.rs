//! Tabular preprocessing for real-data runs: mixed-type imputation and
//! standardization, redundancy pre-screening, correlation clustering,
//! binary-design filtering, response transformation, and CSV ingestion.
//!
//! Everything here is deterministic; ties break toward the lexicographically
//! smallest value or the lowest column index.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Binary,
}

#[derive(Debug, Clone)]
pub enum ColumnValues {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: ColumnValues,
}

/// Column-typed tabular data with missing entries.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    pub columns: Vec<Column>,
    pub n_rows: usize,
}

impl TabularDataset {
    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() || self.n_rows == 0 {
            return Err(Error::EmptyDataset);
        }
        for c in &self.columns {
            let len = match &c.values {
                ColumnValues::Numeric(v) => v.len(),
                ColumnValues::Categorical(v) => v.len(),
            };
            if len != self.n_rows {
                return Err(Error::LengthMismatch {
                    left: len,
                    right: self.n_rows,
                });
            }
            if c.kind == ColumnKind::Categorical
                && matches!(c.values, ColumnValues::Numeric(_))
            {
                return Err(Error::DimensionMismatch(format!(
                    "column {} marked categorical but holds numbers",
                    c.name
                )));
            }
        }
        Ok(())
    }
}

const STD_GUARD: f64 = 1e-8;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn standardize_column(col: &mut [f64]) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + STD_GUARD;
    for v in col.iter_mut() {
        *v = (*v - mean) / denom;
    }
}

/// Mixed-type preprocessing: numeric columns get median imputation and
/// standardization, categorical columns most-frequent imputation and one-hot
/// encoding, then every resulting feature is standardized once more with a
/// guarded denominator.
pub fn preprocess_mixed(t: &TabularDataset) -> Result<(Array2<f64>, Vec<String>)> {
    t.validate()?;
    let n = t.n_rows;
    let mut feature_cols: Vec<(String, Vec<f64>)> = Vec::new();
    for c in &t.columns {
        match (&c.kind, &c.values) {
            (ColumnKind::Numeric | ColumnKind::Binary, ColumnValues::Numeric(vals)) => {
                let mut present: Vec<f64> = vals.iter().filter_map(|v| *v).collect();
                present.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let fill = if present.is_empty() {
                    log::warn!("column {} is entirely missing; imputing 0", c.name);
                    0.0
                } else {
                    median(&present)
                };
                let mut col: Vec<f64> = vals.iter().map(|v| v.unwrap_or(fill)).collect();
                standardize_column(&mut col);
                feature_cols.push((c.name.clone(), col));
            }
            (ColumnKind::Categorical, ColumnValues::Categorical(vals)) => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for v in vals.iter().flatten() {
                    *counts.entry(v.as_str()).or_insert(0) += 1;
                }
                if counts.is_empty() {
                    return Err(Error::DimensionMismatch(format!(
                        "categorical column {} is entirely missing",
                        c.name
                    )));
                }
                // Most frequent level; BTreeMap order breaks ties toward the
                // lexicographically smallest.
                let mode = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(k, _)| k.to_string())
                    .unwrap();
                let filled: Vec<&str> = vals
                    .iter()
                    .map(|v| v.as_deref().unwrap_or(mode.as_str()))
                    .collect();
                let levels: Vec<&str> = counts.keys().copied().collect();
                for level in levels {
                    let col: Vec<f64> = filled
                        .iter()
                        .map(|&v| if v == level { 1.0 } else { 0.0 })
                        .collect();
                    feature_cols.push((format!("{}={}", c.name, level), col));
                }
            }
            _ => {
                return Err(Error::DimensionMismatch(format!(
                    "column {} kind/value mismatch",
                    c.name
                )))
            }
        }
    }
    let p = feature_cols.len();
    let mut x = Array2::<f64>::zeros((n, p));
    let mut names = Vec::with_capacity(p);
    for (j, (name, mut col)) in feature_cols.into_iter().enumerate() {
        // Global feature-wise standardization pass.
        standardize_column(&mut col);
        for (i, v) in col.into_iter().enumerate() {
            x[[i, j]] = v;
        }
        names.push(name);
    }
    Ok((x, names))
}

/// Pearson correlation with degenerate columns treated as uncorrelated.
fn safe_abs_corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va < 1e-24 || vb < 1e-24 {
        return 0.0;
    }
    (cov / (va.sqrt() * vb.sqrt())).abs()
}

fn columns_of(x: &ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.column(j).to_vec()).collect()
}

/// Greedy left-to-right redundancy screen: a column is dropped when its
/// absolute correlation with an already retained column exceeds the
/// threshold (within floating-point tolerance).
pub fn dedup_features(
    x: &ArrayView2<'_, f64>,
    names: &[String],
    threshold: f64,
) -> (Array2<f64>, Vec<String>, Vec<String>) {
    assert!(threshold > 0.0 && threshold <= 1.0);
    let cols = columns_of(x);
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..cols.len() {
        let redundant = kept
            .iter()
            .any(|&k| safe_abs_corr(&cols[j], &cols[k]) > threshold - 1e-12);
        if redundant {
            dropped.push(names[j].clone());
        } else {
            kept.push(j);
        }
    }
    let mut out = Array2::<f64>::zeros((x.nrows(), kept.len()));
    let mut out_names = Vec::with_capacity(kept.len());
    for (dst, &src) in kept.iter().enumerate() {
        out.column_mut(dst).assign(&x.column(src));
        out_names.push(names[src].clone());
    }
    (out, out_names, dropped)
}

/// One cluster of correlated features and its retained representative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureCluster {
    pub representative: String,
    pub members: Vec<String>,
}

/// Complete-linkage agglomerative clustering on `d = 1 - |corr|`, cut at
/// distance `1 - threshold`; one representative (largest variance, ties to
/// the lowest index) is retained per cluster.
pub fn cluster_representatives(
    x: &ArrayView2<'_, f64>,
    names: &[String],
    threshold: f64,
) -> (Array2<f64>, Vec<String>, Vec<FeatureCluster>) {
    assert!(threshold > 0.0 && threshold < 1.0);
    let p = x.ncols();
    let cols = columns_of(x);
    let cutoff = 1.0 - threshold;
    let mut dist = vec![vec![0.0f64; p]; p];
    for i in 0..p {
        for j in (i + 1)..p {
            let d = 1.0 - safe_abs_corr(&cols[i], &cols[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    // Naive complete-linkage merging; p after dedup is moderate.
    let mut clusters: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let mut complete = 0.0f64;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        complete = complete.max(dist[i][j]);
                    }
                }
                let better = match best {
                    None => true,
                    Some((_, _, d)) => complete < d,
                };
                if better {
                    best = Some((a, b, complete));
                }
            }
        }
        match best {
            Some((a, b, d)) if d <= cutoff + 1e-12 => {
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
                clusters[a].sort_unstable();
            }
            _ => break,
        }
    }
    clusters.sort_by_key(|c| c[0]);

    let variance = |j: usize| -> f64 {
        let col = &cols[j];
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    };
    let mut reps = Vec::with_capacity(clusters.len());
    let mut map = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let mut rep = cluster[0];
        let mut best_var = variance(rep);
        for &j in &cluster[1..] {
            let v = variance(j);
            if v > best_var {
                best_var = v;
                rep = j;
            }
        }
        reps.push(rep);
        map.push(FeatureCluster {
            representative: names[rep].clone(),
            members: cluster.iter().map(|&j| names[j].clone()).collect(),
        });
    }
    let mut out = Array2::<f64>::zeros((x.nrows(), reps.len()));
    let mut out_names = Vec::with_capacity(reps.len());
    for (dst, &src) in reps.iter().enumerate() {
        out.column_mut(dst).assign(&x.column(src));
        out_names.push(names[src].clone());
    }
    (out, out_names, map)
}

/// Binary-design filtering: rejects non-{0,1} entries, drops rare columns
/// (sum below `min_count`) and exact duplicates (first kept).
pub fn filter_binary_design(
    x: &ArrayView2<'_, f64>,
    names: &[String],
    min_count: usize,
) -> Result<(Array2<f64>, Vec<String>)> {
    let (n, p) = x.dim();
    for j in 0..p {
        if x.column(j).iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::NotBinary {
                column: names.get(j).cloned().unwrap_or_else(|| j.to_string()),
            });
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    let mut seen: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        let col: Vec<f64> = x.column(j).to_vec();
        let sum: f64 = col.iter().sum();
        if (sum as usize) < min_count {
            continue;
        }
        if seen.iter().any(|s| s == &col) {
            continue;
        }
        seen.push(col);
        kept.push(j);
    }
    let mut out = Array2::<f64>::zeros((n, kept.len()));
    let mut out_names = Vec::with_capacity(kept.len());
    for (dst, &src) in kept.iter().enumerate() {
        out.column_mut(dst).assign(&x.column(src));
        out_names.push(names[src].clone());
    }
    Ok((out, out_names))
}

/// Optional log transform followed by guarded standardization.
pub fn transform_response(y_raw: &Array1<f64>, log_transform: bool) -> Result<Array1<f64>> {
    if y_raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut y = y_raw.clone();
    if log_transform {
        for (i, v) in y_raw.iter().enumerate() {
            if *v <= 0.0 {
                return Err(Error::NonPositiveForLog {
                    index: i,
                    value: *v,
                });
            }
        }
        y.mapv_inplace(f64::ln);
    }
    let mut buf: Vec<f64> = y.to_vec();
    standardize_column(&mut buf);
    Ok(Array1::from_vec(buf))
}

/// Reads a design CSV with a header row. Non-missing cells that all parse as
/// numbers make a numeric column (binary when the values are only 0/1);
/// anything else is categorical. Empty cells and the given sentinel are
/// missing.
pub fn read_design_csv(path: &Path, missing_sentinel: &str) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::DimensionMismatch(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::DimensionMismatch(format!("bad header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record =
            record.map_err(|e| Error::DimensionMismatch(format!("bad csv record: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::LengthMismatch {
                left: record.len(),
                right: headers.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let trimmed = field.trim();
            if trimmed.is_empty() || trimmed == missing_sentinel {
                cells[j].push(None);
            } else {
                cells[j].push(Some(trimmed.to_string()));
            }
        }
    }
    let n_rows = cells.first().map_or(0, Vec::len);
    if n_rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut columns = Vec::with_capacity(headers.len());
    for (name, raw) in headers.into_iter().zip(cells) {
        let parsed: Option<Vec<Option<f64>>> = raw
            .iter()
            .map(|v| match v {
                None => Some(None),
                Some(s) => s.parse::<f64>().ok().map(Some),
            })
            .collect();
        match parsed {
            Some(nums) => {
                let binary = nums
                    .iter()
                    .flatten()
                    .all(|&v| v == 0.0 || v == 1.0);
                columns.push(Column {
                    name,
                    kind: if binary {
                        ColumnKind::Binary
                    } else {
                        ColumnKind::Numeric
                    },
                    values: ColumnValues::Numeric(nums),
                });
            }
            None => {
                columns.push(Column {
                    name,
                    kind: ColumnKind::Categorical,
                    values: ColumnValues::Categorical(raw),
                });
            }
        }
    }
    Ok(TabularDataset { columns, n_rows })
}

/// Reads a response vector from a CSV: either the single column or the named
/// one. Missing entries come back as `None` so callers can drop those rows.
pub fn read_response_csv(path: &Path, column: Option<&str>) -> Result<Vec<Option<f64>>> {
    let data = read_design_csv(path, "NA")?;
    let col = match column {
        Some(name) => data
            .columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::DimensionMismatch(format!("no column named {name}")))?,
        None => {
            if data.columns.len() != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "response csv has {} columns; name one",
                    data.columns.len()
                )));
            }
            &data.columns[0]
        }
    };
    match &col.values {
        ColumnValues::Numeric(v) => Ok(v.clone()),
        ColumnValues::Categorical(_) => Err(Error::DimensionMismatch(format!(
            "response column {} is not numeric",
            col.name
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn numeric_col(name: &str, vals: Vec<Option<f64>>) -> Column {
        Column {
            name: name.into(),
            kind: ColumnKind::Numeric,
            values: ColumnValues::Numeric(vals),
        }
    }

    #[test]
    fn preprocess_numeric_median_and_standardize() {
        let t = TabularDataset {
            columns: vec![numeric_col(
                "a",
                vec![Some(1.0), Some(2.0), None, Some(3.0)],
            )],
            n_rows: 4,
        };
        let (x, names) = preprocess_mixed(&t).unwrap();
        assert_eq!(names, vec!["a"]);
        let mean = x.column(0).sum() / 4.0;
        assert!(mean.abs() < 1e-8);
        let std = (x.column(0).iter().map(|v| v * v).sum::<f64>() / 4.0).sqrt();
        assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn preprocess_categorical_one_hot() {
        let t = TabularDataset {
            columns: vec![Column {
                name: "c".into(),
                kind: ColumnKind::Categorical,
                values: ColumnValues::Categorical(vec![
                    Some("x".into()),
                    Some("y".into()),
                    None,
                    Some("z".into()),
                    Some("x".into()),
                ]),
            }],
            n_rows: 5,
        };
        let (x, names) = preprocess_mixed(&t).unwrap();
        assert_eq!(names, vec!["c=x", "c=y", "c=z"]);
        assert_eq!(x.ncols(), 3);
        // Missing imputed to the mode "x"; one-hot columns then standardized.
        assert!(x.column(0).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn preprocess_constant_column_is_zero() {
        let t = TabularDataset {
            columns: vec![numeric_col("k", vec![Some(7.0); 5])],
            n_rows: 5,
        };
        let (x, _) = preprocess_mixed(&t).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dedup_drops_duplicates() {
        let x = array![
            [1.0, 1.0, 0.0],
            [2.0, 2.0, 1.0],
            [3.0, 3.0, 0.0],
            [4.0, 4.0, 1.0]
        ];
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let (out, kept, dropped) = dedup_features(&x.view(), &names, 0.98);
        assert_eq!(kept, vec!["a", "c"]);
        assert_eq!(dropped, vec!["b"]);
        assert_eq!(out.ncols(), 2);

        // Orthogonal columns survive.
        let x2 = array![[1.0, 0.0], [-1.0, 0.5], [1.0, -0.5], [-1.0, 0.0]];
        let names2: Vec<String> = ["u", "v"].iter().map(|s| s.to_string()).collect();
        let (_, kept2, dropped2) = dedup_features(&x2.view(), &names2, 0.98);
        assert_eq!(kept2.len(), 2);
        assert!(dropped2.is_empty());
    }

    #[test]
    fn dedup_threshold_one_keeps_near_duplicates() {
        let x = array![[1.0, 1.1], [2.0, 2.05], [3.0, 3.2], [4.0, 3.9]];
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let (_, kept, _) = dedup_features(&x.view(), &names, 1.0);
        assert_eq!(kept.len(), 2);

        let dup = array![[1.0, 1.0], [2.0, 2.0], [5.0, 5.0]];
        let (_, kept_dup, dropped_dup) = dedup_features(&dup.view(), &names, 1.0);
        assert_eq!(kept_dup, vec!["a"]);
        assert_eq!(dropped_dup, vec!["b"]);
    }

    #[test]
    fn dedup_is_idempotent() {
        let x = array![
            [1.0, 1.0, 0.3],
            [2.0, 2.0, -0.4],
            [3.0, 3.1, 0.9],
            [4.0, 4.0, 0.1]
        ];
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let (x1, n1, _) = dedup_features(&x.view(), &names, 0.98);
        let (x2, n2, dropped) = dedup_features(&x1.view(), &n1, 0.98);
        assert_eq!(n1, n2);
        assert!(dropped.is_empty());
        assert_eq!(x1, x2);
    }

    fn corr_pair(rho: f64, n: usize, phase: f64) -> (Vec<f64>, Vec<f64>) {
        // Deterministic correlated pair via sinusoids.
        let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7 + phase).sin()).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| {
                rho * (i as f64 * 0.7 + phase).sin()
                    + (1.0 - rho * rho).sqrt() * (i as f64 * 1.3 + 2.0 + phase).cos()
            })
            .collect();
        (a, b)
    }

    #[test]
    fn clustering_merges_and_picks_high_variance() {
        let n = 200;
        let (a, b) = corr_pair(0.97, n, 0.0);
        let c: Vec<f64> = (0..n).map(|i| (i as f64 * 2.9 + 1.0).cos()).collect();
        let mut x = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            x[[i, 0]] = a[i];
            x[[i, 1]] = b[i] * 3.0; // higher variance member
            x[[i, 2]] = c[i];
        }
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let (out, kept, map) = cluster_representatives(&x.view(), &names, 0.90);
        assert_eq!(kept, vec!["b", "c"]);
        assert_eq!(out.ncols(), 2);
        assert_eq!(map[0].members, vec!["a", "b"]);
        assert_eq!(map[0].representative, "b");
    }

    #[test]
    fn clustering_all_far_apart_is_identity() {
        let n = 300;
        let mut x = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            x[[i, 0]] = (i as f64 * 0.31).sin();
            x[[i, 1]] = (i as f64 * 1.11 + 0.5).cos();
            x[[i, 2]] = (i as f64 * 2.17 + 1.5).sin();
        }
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let (_, kept, map) = cluster_representatives(&x.view(), &names, 0.90);
        assert_eq!(kept.len(), 3);
        assert!(map.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn clustering_complete_linkage_three_way() {
        // Three mutually highly correlated columns collapse to one cluster
        // only because every pairwise distance is below the cutoff.
        let n = 400;
        let base: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            let bump = (i as f64 * 5.1).cos() * 0.1;
            x[[i, 0]] = base[i];
            x[[i, 1]] = base[i] + bump * 0.5;
            x[[i, 2]] = base[i] - bump * 0.5;
        }
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let (_, kept, map) = cluster_representatives(&x.view(), &names, 0.90);
        assert_eq!(kept.len(), 1);
        assert_eq!(map[0].members.len(), 3);
    }

    #[test]
    fn binary_filter_examples() {
        let x = array![
            [0.0, 1.0, 1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0, 1.0, 0.0],
            [0.0, 1.0, 1.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0]
        ];
        let names: Vec<String> = ["z", "a", "dup_a", "two", "three"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (out, kept) = filter_binary_design(&x.view(), &names, 3).unwrap();
        // "z" is all zeros, "dup_a" duplicates "a", "two" has sum 2.
        assert_eq!(kept, vec!["a"]);
        assert_eq!(out.ncols(), 1);
        assert_eq!(out.nrows(), 4);

        let bad = array![[0.0, 0.5], [1.0, 1.0]];
        assert!(matches!(
            filter_binary_design(&bad.view(), &names[..2].to_vec(), 1),
            Err(Error::NotBinary { .. })
        ));
    }

    #[test]
    fn binary_filter_boundary_count() {
        let x = array![
            [1.0, 1.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [0.0, 0.0]
        ];
        let names: Vec<String> = ["two", "three"].iter().map(|s| s.to_string()).collect();
        let (_, kept) = filter_binary_design(&x.view(), &names, 3).unwrap();
        assert_eq!(kept, vec!["three"]);
    }

    #[test]
    fn response_transform_examples() {
        let e = std::f64::consts::E;
        let y = array![1.0, e, e * e];
        let out = transform_response(&y, true).unwrap();
        assert_abs_diff_eq!(out[0], -1.2247, epsilon = 1e-3);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out[2], 1.2247, epsilon = 1e-3);

        let constant = array![3.0, 3.0, 3.0];
        let out = transform_response(&constant, false).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));

        let bad = array![1.0, -2.0];
        assert!(matches!(
            transform_response(&bad, true),
            Err(Error::NonPositiveForLog { index: 1, .. })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = std::env::temp_dir();
        let path = dir.join("grip_core_ingest_test.csv");
        std::fs::write(&path, "a,b,c\n1.0,x,0\n2.5,y,1\n,x,1\n4.0,,0\n").unwrap();
        let data = read_design_csv(&path, "NA").unwrap();
        assert_eq!(data.n_rows, 4);
        assert_eq!(data.columns.len(), 3);
        assert_eq!(data.columns[0].kind, ColumnKind::Numeric);
        assert_eq!(data.columns[1].kind, ColumnKind::Categorical);
        assert_eq!(data.columns[2].kind, ColumnKind::Binary);
        let (x, names) = preprocess_mixed(&data).unwrap();
        assert_eq!(x.nrows(), 4);
        assert!(names.contains(&"b=x".to_string()));
        std::fs::remove_file(&path).ok();
    }
}
