//! CSV trace files: fixed column order, every number with 17 significant
//! digits so values read back bit-equal.

use std::path::Path;

use super::CliError;
use crate::harness::{SimTrace, StepRecord};

/// Column-oriented view of a trace, or of a CSV file read back.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn names(base: &str, len: usize) -> Vec<String> {
    if len == 1 {
        vec![base.to_string()]
    } else {
        (1..=len).map(|i| format!("{base}_{i}")).collect()
    }
}

type VecField = fn(&StepRecord) -> &Vec<f64>;

const VECTOR_COLUMNS: [(&str, VecField); 8] = [
    ("x", |r| &r.x),
    ("y_true", |r| &r.y_true),
    ("y_hat", |r| &r.y_hat),
    ("y_dot_hat", |r| &r.y_dot_hat),
    ("r", |r| &r.r),
    ("u_bar", |r| &r.u_bar),
    ("delta_u", |r| &r.delta_u),
    ("u", |r| &r.u),
];

/// `t,x,y_true,y_hat,y_dot_hat,r,u_bar,delta_u,u,h_1..,slack_1..,filter_active,qp_iters`,
/// vector quantities expanded with `_i` suffixes.
pub fn trace_header(trace: &SimTrace) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let first = trace.records.first();
    for (name, field) in VECTOR_COLUMNS {
        h.extend(names(name, first.map_or(1, |r| field(r).len())));
    }
    let nb = trace.barrier_names.len();
    h.extend((1..=nb).map(|i| format!("h_{i}")));
    h.extend((1..=nb).map(|i| format!("slack_{i}")));
    h.push("filter_active".into());
    h.push("qp_iters".into());
    h
}

pub fn trace_table(trace: &SimTrace) -> TraceTable {
    let rows = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.t];
            for (_, field) in VECTOR_COLUMNS {
                row.extend_from_slice(field(r));
            }
            row.extend_from_slice(&r.h);
            row.extend_from_slice(&r.slack);
            row.push(if r.filter_active { 1.0 } else { 0.0 });
            row.push(r.qp_iters as f64);
            row
        })
        .collect();
    TraceTable { header: trace_header(trace), rows }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_table_csv(table: &TraceTable, path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| fmt_value(*v))).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn write_trace_csv(trace: &SimTrace, path: &Path) -> Result<(), CliError> {
    write_table_csv(&trace_table(trace), path)
}

pub fn read_trace_csv(path: &Path) -> Result<TraceTable, CliError> {
    let io = |e: csv::Error| CliError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header: Vec<String> = r.headers().map_err(io)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(io)?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| CliError::Io {
                    path: path.display().to_string(),
                    message: format!("row {}: '{f}' is not a number", i + 2),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(TraceTable { header, rows })
}
