use std::io::Write;

use super::{CoverageReport, TrialRecord};
use crate::error::{Error, Result};

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("write failed: {e}"))
}

/// One CSV row per (trial, method).
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Config echo plus per-method statistics, pretty-printed.
pub fn write_summary_json<W: Write>(report: &CoverageReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report).map_err(io_err)?;
    writeln!(out).map_err(io_err)
}
