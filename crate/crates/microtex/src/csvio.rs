//! CSV outputs: feature matrices, evaluation reports and image indexes.

use std::path::Path;

use microtex_core::eval::EvalReport;

use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::pipeline::FeatureSet;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Csv { path: path.to_path_buf(), message: e.to_string() }
}

/// One row per image: `path,label`, then one column per feature named by its
/// provenance label.
pub fn write_features(path: &Path, manifest: &Manifest, set: &FeatureSet) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["path".to_owned(), "label".to_owned()];
    header.extend(set.labels.iter().map(|l| l.to_string()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, r) in manifest.records.iter().enumerate() {
        let mut row = vec![r.path.display().to_string(), r.label.clone()];
        row.extend(set.matrix.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `featurizer,taps,trial,f1,std`: one row per trial, then a summary row
/// with trial `mean`, the mean F1 and the population standard deviation.
pub fn write_reports(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["featurizer", "taps", "trial", "f1", "std"]).map_err(|e| csv_err(path, e))?;
    for r in reports {
        for (t, s) in r.scores.iter().enumerate() {
            w.write_record([r.featurizer.as_str(), &r.taps, &t.to_string(), &s.to_string(), ""])
                .map_err(|e| csv_err(path, e))?;
        }
        w.write_record([r.featurizer.as_str(), &r.taps, "mean", &r.mean.to_string(), &r.std.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Parses a report CSV back into reports, in file order.
pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    let mut scores = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let num =
            |i: usize| row[i].parse::<f64>().map_err(|e| CliError::Csv { path: path.into(), message: e.to_string() });
        if &row[2] == "mean" {
            let mut rep = EvalReport::from_scores(&row[0], &row[1], std::mem::take(&mut scores));
            rep.mean = num(3)?;
            rep.std = num(4)?;
            out.push(rep);
        } else {
            scores.push(num(3)?);
        }
    }
    Ok(out)
}

/// A row of a visualization index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub class: String,
    pub tap: String,
    pub filter: usize,
    pub value: f64,
    pub path: String,
}

pub fn write_index(path: &Path, value_name: &str, rows: &[IndexRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["class", "tap", "filter", value_name, "path"]).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([r.class.as_str(), &r.tap, &r.filter.to_string(), &r.value.to_string(), &r.path])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
