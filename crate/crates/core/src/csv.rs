//! Minimal CSV emission with fixed six-significant-digit number formatting.
//!
//! Output is byte-stable across runs: no locale, no timestamps, `\n` line
//! endings, and a header that always matches the schema.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const EVENT_LOG_HEADER: [&str; 4] = ["anchor_ms", "node_id", "acquisition_ms", "arrival_ms"];
pub const BATCH_HEADER: [&str; 6] = [
    "anchor_ms",
    "trigger_ms",
    "deadline_ms",
    "full_match",
    "n_normal",
    "n_late",
];
pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_low_ms", "bin_high_ms", "count"];
pub const ESTIMATE_HEADER: [&str; 3] = ["node_id", "mu_ms", "sigma_ms"];
pub const TRACK_HEADER: [&str; 9] = [
    "anchor_ms",
    "track_id",
    "class",
    "x_m",
    "y_m",
    "yaw_rad",
    "vx_mps",
    "vy_mps",
    "status",
];
pub const EVAL_HEADER: [&str; 4] = ["class", "ap", "num_gt", "num_pred"];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Uint(u64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Uint(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Uint(v as u64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Formats `v` with six significant digits, no exponent for ordinary
/// magnitudes, trailing zeros kept so columns stay fixed-precision.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0.00000".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..=14).contains(&exp) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding may carry into a new leading digit (9.999999 -> 10.00000)
    let rounded: f64 = s.parse().unwrap_or(v);
    if rounded.abs() >= 10f64.powi(exp + 1) && decimals > 0 {
        let d = decimals - 1;
        return format!("{v:.d$}");
    }
    s
}

fn render_cell(cell: &Cell, out: &mut String) {
    match cell {
        Cell::Float(v) => out.push_str(&format_sig6(*v)),
        Cell::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Cell::Uint(v) => {
            let _ = write!(out, "{v}");
        }
        Cell::Bool(v) => out.push_str(if *v { "true" } else { "false" }),
        Cell::Text(s) => {
            if s.contains([',', '"', '\n']) {
                out.push('"');
                out.push_str(&s.replace('"', "\"\""));
                out.push('"');
            } else {
                out.push_str(s);
            }
        }
    }
}

pub fn render<S: AsRef<str>>(header: &[S], rows: &[Vec<Cell>]) -> String {
    let mut out = String::new();
    let header: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "row does not match schema");
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            render_cell(cell, &mut out);
        }
        out.push('\n');
    }
    out
}

/// Writes `rows` under `header` to `path`. Rows must match the schema width.
pub fn emit_csv<S: AsRef<str>>(rows: &[Vec<Cell>], header: &[S], path: &Path) -> Result<()> {
    if let Some(bad) = rows.iter().position(|r| r.len() != header.len()) {
        return Err(Error::input(format!(
            "row {bad} has {} cells, schema has {}",
            rows[bad].len(),
            header.len()
        )));
    }
    std::fs::write(path, render(header, rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(0.832), "0.832000");
        assert_eq!(format_sig6(64.2), "64.2000");
        assert_eq!(format_sig6(22800.0), "22800.0");
        assert_eq!(format_sig6(123456.0), "123456");
        assert_eq!(format_sig6(-1.5), "-1.50000");
        assert_eq!(format_sig6(9.999999), "10.0000");
        assert_eq!(format_sig6(0.0), "0.00000");
        assert_eq!(format_sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn header_only_and_single_row() {
        let s = render(&HISTOGRAM_HEADER, &[]);
        assert_eq!(s, "bin_low_ms,bin_high_ms,count\n");
        let s = render(&HISTOGRAM_HEADER, &[vec![(-1.0).into(), 0.0.into(), 3usize.into()]]);
        assert_eq!(s.lines().count(), 2);
        assert!(s.ends_with('\n'));
        assert_eq!(s.lines().nth(1).unwrap(), "-1.00000,0.00000,3");
    }

    #[test]
    fn schema_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_csv(&[vec![1.0.into()]], &HISTOGRAM_HEADER, &dir.path().join("x.csv"));
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = emit_csv::<&str>(&[], &HISTOGRAM_HEADER, Path::new("/nonexistent/dir/x.csv"));
        assert_eq!(err.unwrap_err().exit_code(), 3);
    }
}
