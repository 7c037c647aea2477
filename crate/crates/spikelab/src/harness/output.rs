//! `report.json`, `tables/*.csv` and CSV inputs.

use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::Serialize;

use crate::checks::TableRow;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["check", "trial", "index", "statistic", "value"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_table<W: std::io::Write>(w: W, rows: &[TableRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.check.as_str(),
            &r.trial.to_string(),
            &r.index.to_string(),
            r.statistic.as_str(),
            &format_value(r.value),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Files written for one command.
#[derive(Clone, Debug, Default)]
pub struct Outputs {
    pub report: PathBuf,
    pub tables: Vec<PathBuf>,
}

/// Writes `report.json` and one `tables/<name>.csv` per table into `dir`.
pub fn write_outputs<T: Serialize>(dir: &Path, report: &T, tables: &[(String, Vec<TableRow>)]) -> Result<Outputs> {
    fs::create_dir_all(dir.join("tables"))?;
    let mut out = Outputs {
        report: dir.join("report.json"),
        tables: Vec::new(),
    };
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&out.report, text)?;
    for (name, rows) in tables {
        let path = dir.join("tables").join(format!("{name}.csv"));
        write_table(fs::File::create(&path)?, rows)?;
        out.tables.push(path);
    }
    Ok(out)
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::config("infer.input", format!("line {line}: `{s}` is not a number")))
}

fn reader(path: &str) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)?)
}

/// First column of a headerless CSV.
pub fn read_spectrum_csv(path: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec?;
        if let Some(f) = rec.get(0) {
            out.push(parse_field(f, i + 1)?);
        }
    }
    if out.is_empty() {
        return Err(Error::config("infer.input", "no eigenvalues found"));
    }
    Ok(out)
}

/// A headerless numeric CSV as a matrix; all rows must have equal length.
pub fn read_matrix_csv(path: &str) -> Result<Mat<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec?;
        let row = rec.iter().map(|f| parse_field(f, i + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::config("infer.input", format!("line {} has {} fields, expected {}", i + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::config("infer.input", "empty data matrix"));
    }
    Ok(Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
}
