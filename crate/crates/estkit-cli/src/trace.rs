//! Per-step trace records and their CSV / JSON-lines encodings.
//!
//! CSV columns: `t`, `truth_0..`, `est_0..`, `covdiag_0..`, then the extras
//! in alphabetical order. Every record of a trace has the same shape.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    /// Empty when the scenario has no ground truth.
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub cov_diag: Vec<f64>,
    pub extras: BTreeMap<String, f64>,
}

impl TraceRecord {
    pub fn new(t: f64) -> Self {
        Self { t, truth: Vec::new(), estimate: Vec::new(), cov_diag: Vec::new(), extras: BTreeMap::new() }
    }

    pub fn extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }

    fn same_shape(&self, other: &TraceRecord) -> bool {
        self.truth.len() == other.truth.len()
            && self.estimate.len() == other.estimate.len()
            && self.cov_diag.len() == other.cov_diag.len()
            && self.extras.keys().eq(other.extras.keys())
    }
}

/// Column names for a trace whose records look like `first`.
pub fn header(first: &TraceRecord) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..first.truth.len()).map(|i| format!("truth_{i}")));
    cols.extend((0..first.estimate.len()).map(|i| format!("est_{i}")));
    cols.extend((0..first.cov_diag.len()).map(|i| format!("covdiag_{i}")));
    cols.extend(first.extras.keys().cloned());
    cols
}

fn check_shapes(records: &[TraceRecord]) -> io::Result<()> {
    if let Some(first) = records.first() {
        if let Some(i) = records.iter().position(|r| !r.same_shape(first)) {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("trace record {i} changes shape")));
        }
    }
    Ok(())
}

pub fn write_csv<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    check_shapes(records)?;
    let Some(first) = records.first() else {
        return writeln!(w, "t");
    };
    writeln!(w, "{}", header(first).join(","))?;
    for r in records {
        let mut fields = vec![r.t.to_string()];
        for v in r.truth.iter().chain(&r.estimate).chain(&r.cov_diag).chain(r.extras.values()) {
            fields.push(v.to_string());
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    check_shapes(records)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_column_order() {
        let mut r = TraceRecord::new(0.5).extra("zeta", 3.0).extra("alpha", 2.0);
        r.truth = vec![1.0];
        r.estimate = vec![1.5, 0.0];
        r.cov_diag = vec![0.25, 1.0];
        let mut out = Vec::new();
        write_csv(&mut out, &[r]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "t,truth_0,est_0,est_1,covdiag_0,covdiag_1,alpha,zeta\n0.5,1,1.5,0,0.25,1,2,3\n");
    }

    #[test]
    fn rejects_ragged_traces() {
        let a = TraceRecord::new(0.0).extra("x", 1.0);
        let b = TraceRecord::new(1.0);
        assert!(write_csv(Vec::new(), &[a, b]).is_err());
    }
}
