//! Locale-independent numeric formatting and CSV writers shared by the
//! experiment harness and the command line.

use std::io::Write;

use crate::engine::TimePoint;
use crate::error::Result;
use crate::model::MAX_PRIORITIES;

/// Formats `v` with 6 significant digits in the style of C's `%g`:
/// fixed notation for exponents in `[-5, 6)`, scientific otherwise, with
/// trailing zeros removed.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // round first so the exponent reflects the rounded value
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub const TIME_SERIES_HEADER: &[&str] = &[
    "jump",
    "avg_depth",
    "max_depth",
    "avg_depth_p0",
    "avg_depth_p1",
    "avg_depth_p2",
];

/// Writes time-series samples; per-priority columns beyond `levels` are
/// left empty.
pub fn write_time_series<W: Write>(mut out: W, points: &[TimePoint], levels: usize) -> Result<()> {
    let rows = points.iter().map(|p| {
        let mut row = CsvRow::new().int(p.jump).num(p.avg_depth).int(p.max_depth);
        for k in 0..MAX_PRIORITIES {
            row = row.opt((k < levels).then(|| p.avg_depth_by_priority[k]));
        }
        row
    });
    out.write_all(csv_text(TIME_SERIES_HEADER, rows)?.as_bytes())?;
    Ok(())
}

/// One CSV record built field by field with the shared number format.
#[derive(Debug, Default)]
pub struct CsvRow(Vec<String>);

impl CsvRow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(mut self, s: impl Into<String>) -> Self {
        self.0.push(s.into());
        self
    }

    pub fn num(self, v: f64) -> Self {
        self.text(fmt_num(v))
    }

    pub fn opt(self, v: Option<f64>) -> Self {
        self.text(fmt_opt(v))
    }

    pub fn int(self, v: impl std::fmt::Display) -> Self {
        self.text(v.to_string())
    }
}

/// Renders a header and records as CSV text. Every record must have one
/// field per header column.
pub fn csv_text(header: &[&str], rows: impl IntoIterator<Item = CsvRow>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row.0)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("fields are UTF-8"))
}
