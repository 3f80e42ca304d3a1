//! CSV writers for factors, masks, spectrograms and iteration traces.
//!
//! Numbers are written with 17 significant digits so that reading a file back
//! reproduces every `f64` exactly.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::solver::IterationTrace;

/// Lossless scientific notation for an `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV row per matrix row, no header.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m.rows() {
        wtr.write_record(row.iter().map(|&x| format_f64(x)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a header-less numeric CSV written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(Error::DimensionMismatch(format!("row {rows} has {} fields", record.len())));
        }
        for field in record.iter() {
            data.push(field.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("`{field}`: {e}")))?);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| Error::DimensionMismatch(e.to_string()))
}

/// Header `iter,total,fit,volume,gamma,backtracks`. Row 0 holds the initial
/// objective; unrecorded objectives are left empty.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &IterationTrace) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["iter", "total", "fit", "volume", "gamma", "backtracks"])?;
    if let Some(o) = trace.initial {
        wtr.write_record(["0".into(), format_f64(o.total), format_f64(o.fit), format_f64(o.penalty), String::new(), String::new()])?;
    }
    for (i, r) in trace.records.iter().enumerate() {
        let (total, fit, volume) = match r.objective {
            Some(o) => (format_f64(o.total), format_f64(o.fit), format_f64(o.penalty)),
            None => Default::default(),
        };
        wtr.write_record([(i + 1).to_string(), total, fit, volume, format_f64(r.gamma), r.backtracks.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
