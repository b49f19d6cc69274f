//! Per-iteration convergence records with CSV and JSON serialization.
//!
//! Columns: `iter, rel_fro_err, max_comp_err, residual, wall_ms`. Error columns
//! are NaN (CSV) or `null` (JSON) when no ground truth is available.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub rel_fro_err: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub max_comp_err: f64,
    pub residual: f64,
    pub wall_ms: f64,
}

impl TraceRow {
    /// Field-wise equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &TraceRow) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.iter == other.iter
            && eq(self.rel_fro_err, other.rel_fro_err)
            && eq(self.max_comp_err, other.max_comp_err)
            && eq(self.residual, other.residual)
            && eq(self.wall_ms, other.wall_ms)
    }
}

fn nan_as_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_nan() {
        s.serialize_none()
    } else {
        s.serialize_f64(*v)
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Extra per-iteration observations kept in memory only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RowDiagnostics {
    /// Every matched component had a nonnegative inner product with the truth.
    pub sign_aligned: Option<bool>,
    /// Some tangent least-squares system was solved with reduced rank.
    pub rank_deficient: bool,
    /// Some retraction hit a tie in a leading singular value.
    pub retraction_tie: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    pub diagnostics: Vec<RowDiagnostics>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, row: TraceRow, diag: RowDiagnostics) {
        self.rows.push(row);
        self.diagnostics.push(diag);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn rel_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rel_fro_err).collect()
    }

    pub fn comp_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.max_comp_err).collect()
    }

    /// Zeroes the wall-clock column, making traces reproducible byte for byte.
    pub fn clear_wall_time(&mut self) {
        self.rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows_csv(&self.rows, w)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows = read_rows_csv(r)?;
        let diagnostics = vec![RowDiagnostics::default(); rows.len()];
        Ok(Self { rows, diagnostics })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rows: Vec<TraceRow> = serde_json::from_str(s)?;
        let diagnostics = vec![RowDiagnostics::default(); rows.len()];
        Ok(Self { rows, diagnostics })
    }
}

pub(crate) const COLUMNS: [&str; 5] = ["iter", "rel_fro_err", "max_comp_err", "residual", "wall_ms"];

// Floats use Rust's shortest round-trip formatting, so reading back is exact.
pub(crate) fn write_rows_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(COLUMNS)?;
    for r in rows {
        wr.write_record([
            r.iter.to_string(),
            r.rel_fro_err.to_string(),
            r.max_comp_err.to_string(),
            r.residual.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub(crate) fn read_rows_csv<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().ne(COLUMNS) {
        return Err(Error::Config(format!("unexpected trace columns {:?}", rd.headers()?)));
    }
    let field = |rec: &csv::StringRecord, i: usize| -> Result<f64> {
        rec[i]
            .parse()
            .map_err(|_| Error::Config(format!("bad number {:?} in trace column {}", &rec[i], COLUMNS[i])))
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(TraceRow {
            iter: field(&rec, 0)? as usize,
            rel_fro_err: field(&rec, 1)?,
            max_comp_err: field(&rec, 2)?,
            residual: field(&rec, 3)?,
            wall_ms: field(&rec, 4)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConvergenceTrace {
        let mut t = ConvergenceTrace::default();
        t.push(TraceRow { iter: 0, rel_fro_err: 0.5, max_comp_err: 0.25, residual: 3.0, wall_ms: 1.5 }, RowDiagnostics::default());
        t.push(
            TraceRow { iter: 1, rel_fro_err: f64::NAN, max_comp_err: f64::NAN, residual: 1e-300, wall_ms: 0.1 },
            RowDiagnostics::default(),
        );
        t
    }

    #[test]
    fn csv_round_trip_keeps_nan_and_bits() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iter,rel_fro_err,max_comp_err,residual,wall_ms\n"));
        assert!(text.contains("NaN"));
        let back = ConvergenceTrace::read_csv(buf.as_slice()).unwrap();
        assert!(back.rows.iter().zip(&t.rows).all(|(a, b)| a.same_as(b)));
    }

    #[test]
    fn json_records_use_null_for_missing_errors() {
        let t = sample();
        let s = t.to_json().unwrap();
        assert!(s.contains("\"rel_fro_err\": null"));
        let back = ConvergenceTrace::from_json(&s).unwrap();
        assert!(back.rows.iter().zip(&t.rows).all(|(a, b)| a.same_as(b)));
    }

    #[test]
    fn empty_trace_still_has_header() {
        let mut buf = Vec::new();
        ConvergenceTrace::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,rel_fro_err,max_comp_err,residual,wall_ms\n");
    }
}
