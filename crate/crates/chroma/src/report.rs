//! Report serialization: one JSON document, or one CSV file per table.

use std::fs;
use std::path::Path;

use chroma_core::analysis::EvalReport;

use crate::container::write_atomic;
use crate::error::{IoContext, Result};

pub const MATRIX_CSV: &str = "matrix.csv";
pub const CONFIDENCE_CSV: &str = "confidence.csv";
pub const CLASS_COUNTS_CSV: &str = "class_counts.csv";

pub fn to_json(report: &EvalReport) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(report)?))
}

pub fn write_json(report: &EvalReport, path: &Path) -> Result<()> {
    write_atomic(path, to_json(report)?.as_bytes())
}

pub fn read_json(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path).at(path)?)?)
}

fn fixed(v: f64) -> String {
    format!("{v:.4}")
}

fn unique<'a>(items: impl Iterator<Item = &'a String>) -> Vec<&'a String> {
    let mut out: Vec<&String> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error()).at(path)?;
    write_atomic(path, &bytes)
}

/// `matrix.csv` (model rows × dataset columns), `confidence.csv` and
/// `class_counts.csv` under `dir`.
pub fn write_csv_dir(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let models = unique(report.matrix.iter().map(|e| &e.model));
    let datasets = unique(report.matrix.iter().map(|e| &e.dataset));
    let mut header = vec!["model"];
    header.extend(datasets.iter().map(|d| d.as_str()));
    let rows = models
        .iter()
        .map(|m| {
            let mut row = vec![(*m).clone()];
            row.extend(datasets.iter().map(|d| report.accuracy(m, d).map(fixed).unwrap_or_default()));
            row
        })
        .collect();
    write_csv(&dir.join(MATRIX_CSV), &header, rows)?;

    let rows = report
        .confidence
        .iter()
        .map(|e| {
            vec![
                e.model.clone(),
                e.dataset.clone(),
                e.class.to_string(),
                e.correct.map(fixed).unwrap_or_default(),
                e.incorrect.map(fixed).unwrap_or_default(),
                e.correct_count.to_string(),
                e.incorrect_count.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join(CONFIDENCE_CSV),
        &["model", "dataset", "class", "correct", "incorrect", "correct_count", "incorrect_count"],
        rows,
    )?;

    let rows = report
        .class_counts
        .iter()
        .map(|c| vec![c.model.clone(), c.dataset.clone(), c.class.to_string(), c.correct.to_string(), c.total.to_string()])
        .collect();
    write_csv(&dir.join(CLASS_COUNTS_CSV), &["model", "dataset", "class", "correct", "total"], rows)
}
