//! Versioned per-step diagnostics table.

use std::io::{BufRead, Write};

use ckmpm_core::sim::Diagnostics;

use crate::error::{AppError, AppResult};

pub const VERSION_LINE: &str = "# ckmpm diagnostics v1";
pub const HEADER: &str = "step,time,px,py,pz,Lx,Ly,Lz,px_massfree,py_massfree,pz_massfree,KE,vmax";
pub const COLUMNS: usize = 13;

/// One parsed row, in header order (`step` as a float).
pub type Row = [f64; COLUMNS];

pub fn row(d: &Diagnostics) -> Row {
    let m = &d.momentum;
    [
        d.step as f64,
        d.time,
        m.linear.x,
        m.linear.y,
        m.linear.z,
        m.angular.x,
        m.angular.y,
        m.angular.z,
        m.linear_massfree.x,
        m.linear_massfree.y,
        m.linear_massfree.z,
        d.kinetic_energy,
        d.vmax,
    ]
}

/// Streams rows as CSV with 17 significant digits.
pub struct DiagnosticsWriter<W: Write> {
    out: W,
    rows: u64,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{VERSION_LINE}")?;
        writeln!(out, "{HEADER}")?;
        Ok(Self { out, rows: 0 })
    }

    pub fn push(&mut self, d: &Diagnostics) -> std::io::Result<()> {
        let r = row(d);
        write!(self.out, "{}", d.step)?;
        for v in &r[1..] {
            write!(self.out, ",{v:.16e}")?;
        }
        writeln!(self.out)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read<R: BufRead>(r: R) -> AppResult<Vec<Row>> {
    let mut lines = r.lines();
    let mut next = || lines.next().transpose().map_err(|e| AppError::Format(e.to_string()));
    if next()?.as_deref() != Some(VERSION_LINE) {
        return Err(AppError::Format("missing diagnostics version line".into()));
    }
    if next()?.as_deref() != Some(HEADER) {
        return Err(AppError::Format("unexpected diagnostics header".into()));
    }
    let mut rows = Vec::new();
    while let Some(line) = next()? {
        let mut out = [0.0; COLUMNS];
        let mut n = 0;
        for (i, cell) in line.split(',').enumerate() {
            if i >= COLUMNS {
                return Err(AppError::Format(format!("too many columns in `{line}`")));
            }
            out[i] = cell.parse().map_err(|e| AppError::Format(format!("bad value `{cell}`: {e}")))?;
            n += 1;
        }
        if n != COLUMNS {
            return Err(AppError::Format(format!("row has {n} columns, expected {COLUMNS}")));
        }
        rows.push(out);
    }
    Ok(rows)
}
