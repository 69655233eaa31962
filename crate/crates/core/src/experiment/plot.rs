use std::path::{Path, PathBuf};

use super::run::{fmt_num, read_json, AggregateCell};
use super::{write_file, ExperimentError};
use crate::metrics::Metric;

fn csv_err(e: csv::Error) -> ExperimentError {
    ExperimentError::Format(e.to_string())
}

/// Writes `plot/<metric>.csv` for each metric: one row per cell with the
/// mean and 95% half-width. Returns the files written.
pub fn emit_plot_data(bundle: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let cells: Vec<AggregateCell> = read_json(&bundle.join("aggregates.json"))?;
    let dir = bundle.join("plot");
    let mut written = Vec::new();
    for m in Metric::ALL {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["profile", "b_max", "algorithm", "mean", "ci_half_width", "n"])
            .map_err(csv_err)?;
        for c in &cells {
            let stats = c.report.as_ref().map(|r| *r.get(m));
            let field = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
            w.write_record([
                c.profile.clone(),
                fmt_num(c.b_max),
                c.algorithm.clone(),
                field(stats.and_then(|s| s.mean)),
                field(stats.and_then(|s| s.half_width)),
                stats.map_or(0, |s| s.n).to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| ExperimentError::Format(e.to_string()))?;
        let out = String::from_utf8(bytes).map_err(|e| ExperimentError::Format(e.to_string()))?;
        let path = dir.join(format!("{}.csv", m.id()));
        write_file(&path, &out)?;
        written.push(path);
    }
    Ok(written)
}
