//! Tab-separated result tables, one header row followed by one row per
//! record.

use std::io::Write;

use serde::Serialize;

use super::eval::EvalReport;
use super::sweep::SweepRow;
use super::EpochRecord;
use crate::error::Result;

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `epoch train_loss val_ratio val_accuracy val_active_fraction improved`.
pub fn write_history<W: Write>(out: W, history: &[EpochRecord]) -> Result<()> {
    write_rows(out, history)
}

/// One row per test layout; see [`super::LayoutResult`] for the columns.
pub fn write_layout_results<W: Write>(out: W, report: &EvalReport) -> Result<()> {
    write_rows(out, &report.layouts)
}

/// One row per sweep cell.
pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    write_rows(out, rows)
}
