use std::fmt::Write as _;
use std::path::Path;

use super::score::MetricsReport;
use crate::error::{Result, SeldError};
use crate::fsio::write_atomic;

/// Key-value text form of a report, one `key=value` per line.
pub fn report_text(r: &MetricsReport) -> String {
    let c = &r.counts;
    let mut s = String::new();
    let _ = writeln!(s, "f20={:.6}", r.f20);
    let _ = writeln!(s, "doae_deg={:.6}", r.doae_deg);
    let _ = writeln!(s, "rde={:.6}", r.rde);
    let _ = writeln!(s, "f20_macro={:.6}", r.f20_macro);
    let _ = writeln!(s, "tp={}", c.tp);
    let _ = writeln!(s, "fp={}", c.fp);
    let _ = writeln!(s, "fn={}", c.fn_);
    let _ = writeln!(s, "matched={}", c.matched);
    let _ = writeln!(s, "clips={}", r.clips);
    s
}

/// Per-class breakdown as CSV.
pub fn per_class_csv(r: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class_id", "f20", "doae_deg", "rde", "tp", "fp", "fn", "matched"])?;
    for (class, c) in &r.per_class {
        w.write_record([
            class.to_string(),
            format!("{:.6}", c.f20()),
            format!("{:.6}", c.doae()),
            format!("{:.6}", c.rde()),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.matched.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| SeldError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes the text report to `path` and the per-class CSV next to it
/// (`<stem>_per_class.csv`). Returns the CSV path.
pub fn write_report(r: &MetricsReport, path: &Path) -> Result<std::path::PathBuf> {
    write_atomic(path, report_text(r).as_bytes())?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
    let csv_path = path.with_file_name(format!("{stem}_per_class.csv"));
    write_atomic(&csv_path, per_class_csv(r)?.as_bytes())?;
    Ok(csv_path)
}
