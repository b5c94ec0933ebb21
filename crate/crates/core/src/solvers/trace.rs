use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{Method, QuantileDiagnostic};

/// Per-iteration record of a run. Index 0 is the initial state, so every
/// per-iterate vector has `iterations + 1` entries and `chosen_indices`
/// has `iterations`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: Method,
    pub sq_errors: Option<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    pub chosen_indices: Vec<usize>,
    pub q0: Vec<Option<f64>>,
    pub q: Vec<Option<f64>>,
    pub admissible_sizes: Vec<usize>,
    pub diagnostics: Option<Vec<QuantileDiagnostic>>,
    pub final_x: Vec<f64>,
}

impl RunTrace {
    pub fn with_capacity(method: Method, n: usize, iterations: usize, errors: bool, diagnostics: bool) -> Self {
        let len = iterations + 1;
        Self {
            method,
            sq_errors: errors.then(|| Vec::with_capacity(len)),
            residual_norms: Vec::with_capacity(len),
            chosen_indices: Vec::with_capacity(iterations),
            q0: Vec::with_capacity(len),
            q: Vec::with_capacity(len),
            admissible_sizes: Vec::with_capacity(len),
            diagnostics: diagnostics.then(|| Vec::with_capacity(len)),
            final_x: vec![0.0; n],
        }
    }

    pub fn iterations(&self) -> usize {
        self.chosen_indices.len()
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes columns `k, sq_error, residual_norm, chosen_index, Q0, Q`.
/// Missing values are empty; `chosen_index` at `k` is the row used to move
/// from iterate `k` to `k + 1`.
pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "sq_error", "residual_norm", "chosen_index", "Q0", "Q"])?;
    for k in 0..trace.residual_norms.len() {
        w.write_record([
            k.to_string(),
            fmt_opt(trace.sq_errors.as_ref().map(|s| s[k])),
            fmt_f64(trace.residual_norms[k]),
            trace.chosen_indices.get(k).map(|i| i.to_string()).unwrap_or_default(),
            fmt_opt(trace.q0[k]),
            fmt_opt(trace.q[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct Row {
    k: usize,
    sq_error: Option<f64>,
    residual_norm: f64,
    chosen_index: Option<usize>,
    #[serde(rename = "Q0")]
    q0: Option<f64>,
    #[serde(rename = "Q")]
    q: Option<f64>,
}

/// Reads a trace written by [`write_trace_csv`]. Fields not stored in the
/// CSV (`final_x`, admissible sizes, diagnostics) come back empty.
pub fn read_trace_csv<R: Read>(method: Method, input: R) -> Result<RunTrace> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut t = RunTrace::with_capacity(method, 0, 0, true, false);
    let mut all_errors = true;
    let mut sq = Vec::new();
    for (expected, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        if row.k != expected {
            return Err(Error::InvalidSpec(format!("trace row {expected} has k = {}", row.k)));
        }
        match row.sq_error {
            Some(v) => sq.push(v),
            None => all_errors = false,
        }
        t.residual_norms.push(row.residual_norm);
        t.chosen_indices.extend(row.chosen_index);
        t.q0.push(row.q0);
        t.q.push(row.q);
    }
    t.sq_errors = (all_errors && !sq.is_empty()).then_some(sq);
    t.final_x.clear();
    Ok(t)
}
