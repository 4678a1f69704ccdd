//! Dataset JSON, trace CSV and factor CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::harness::regression::{RegressionDataset, DATASET_SCHEMA_VERSION};
use crate::linalg::DenseMatrix;
use crate::solver::IterationRecord;
use crate::{Error, Result};

pub const TRACE_HEADER: &str = "k,time_s,f,obj_err,delta,gamma,backtracks,inner_iters";

/// 17 significant digits; round-trips every finite `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn dataset_to_string(data: &RegressionDataset) -> Result<String> {
    let mut s = serde_json::to_string_pretty(data)?;
    s.push('\n');
    Ok(s)
}

pub fn save_dataset(path: &Path, data: &RegressionDataset) -> Result<()> {
    fs::write(path, dataset_to_string(data)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<RegressionDataset> {
    let data: RegressionDataset = serde_json::from_str(&fs::read_to_string(path)?)?;
    if data.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "dataset schema version {} (expected {DATASET_SCHEMA_VERSION})",
            data.schema_version
        )));
    }
    data.params.validate()?;
    if data.x.len() != data.params.m || data.y.len() != data.params.m {
        return Err(Error::Format("covariate/observation count differs from M".into()));
    }
    Ok(data)
}

/// Trace CSV with `obj_err = f - f_lower`.
pub fn trace_to_csv(records: &[IterationRecord], f_lower: f64) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            fmt_float(r.elapsed),
            fmt_float(r.f),
            fmt_float(r.f - f_lower),
            fmt_float(r.delta),
            fmt_float(r.gamma),
            r.backtracks,
            r.inner_iterations
        );
    }
    out
}

pub fn write_trace_csv(path: &Path, records: &[IterationRecord], f_lower: f64) -> Result<()> {
    fs::write(path, trace_to_csv(records, f_lower))?;
    Ok(())
}

/// Parses a trace CSV. The number of inner solves is not stored and is
/// reported as one per record.
pub fn parse_trace_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        other => {
            return Err(Error::Format(format!("unexpected trace header {other:?}")));
        }
    }
    let bad = |n: usize, what: &str| Error::Format(format!("line {}: bad {what}", n + 2));
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 8 {
                return Err(bad(n, "column count"));
            }
            let float = |i: usize, what: &str| cols[i].parse::<f64>().map_err(|_| bad(n, what));
            let int = |i: usize, what: &str| cols[i].parse::<usize>().map_err(|_| bad(n, what));
            Ok(IterationRecord {
                k: int(0, "k")?,
                elapsed: float(1, "time_s")?,
                f: float(2, "f")?,
                delta: float(4, "delta")?,
                gamma: float(5, "gamma")?,
                backtracks: int(6, "backtracks")?,
                inner_iterations: int(7, "inner_iters")?,
                inner_solves: 1,
            })
        })
        .collect()
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    parse_trace_csv(&fs::read_to_string(path)?)
}

/// Strips the timing column so runs can be compared byte for byte.
pub fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            let mut cols: Vec<&str> = line.split(',').collect();
            if cols.len() > 1 {
                cols.remove(1);
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_float(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, f: f64) -> IterationRecord {
        IterationRecord {
            k,
            f,
            delta: 0.1 / 3.0,
            gamma: 0.5,
            backtracks: 1,
            inner_iterations: 17,
            inner_solves: 1,
            elapsed: 0.25,
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let recs = vec![rec(0, std::f64::consts::PI), rec(1, 1e-300), rec(2, -2.5e17)];
        let csv = trace_to_csv(&recs, 0.0);
        assert!(csv.starts_with(TRACE_HEADER));
        assert_eq!(parse_trace_csv(&csv).unwrap(), recs);
    }

    #[test]
    fn strip_timing_drops_second_column() {
        assert_eq!(strip_timing("a,b,c\n1,2,3"), "a,c\n1,3");
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(parse_trace_csv("k,f\n0,1").is_err());
        let csv = format!("{TRACE_HEADER}\n0,1,2,3,4,5,x,7\n");
        assert!(parse_trace_csv(&csv).is_err());
    }
}
