//! Sample CSVs, JSON summaries and box-plot tables.

use std::fs;
use std::path::{Path, PathBuf};

use crate::stats::{box_plot_table, BoxPlotRow, ErrorSample, StatsSummary};
use crate::EvalError;

/// One row per sample. Floats are written in shortest round-trip form, so
/// reading the file back reproduces every value exactly.
pub fn write_samples_csv(path: &Path, samples: &[ErrorSample]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<ErrorSample>, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_summary_json(path: &Path, summary: &StatsSummary) -> Result<(), EvalError> {
    fs::write(path, serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

pub fn read_summary_json(path: &Path) -> Result<StatsSummary, EvalError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_box_plot_csv(path: &Path, rows: &[BoxPlotRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Paths written by [`write_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub samples: PathBuf,
    pub summary: PathBuf,
    pub box_plot: PathBuf,
}

/// `<prefix>_samples.csv`, `<prefix>_summary.json` and `<prefix>_boxplot.csv`
/// under `dir`.
pub fn write_report(dir: &Path, prefix: &str, samples: &[ErrorSample], summary: &StatsSummary) -> Result<ReportFiles, EvalError> {
    fs::create_dir_all(dir)?;
    let files = ReportFiles {
        samples: dir.join(format!("{prefix}_samples.csv")),
        summary: dir.join(format!("{prefix}_summary.json")),
        box_plot: dir.join(format!("{prefix}_boxplot.csv")),
    };
    write_samples_csv(&files.samples, samples)?;
    write_summary_json(&files.summary, summary)?;
    write_box_plot_csv(&files.box_plot, &box_plot_table(samples)?)?;
    Ok(files)
}
