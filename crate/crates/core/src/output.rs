//! Result files: trajectory JSONL, summary JSON, sweep and histogram CSV.
//!
//! Floats in CSV are written as `{:.16e}` (17 significant digits); JSON uses
//! the shortest representation that parses back to the same `f64`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Cluster, Summary};
use crate::models::{StopReason, Trajectory};
use crate::sweep::SweepResult;

pub const SWEEP_HEADER: [&str; 9] = [
    "K",
    "t_delta",
    "snapshot",
    "mean_of_means",
    "mean_of_stds",
    "mean_n_clusters",
    "mean_center",
    "mean_amplitude",
    "mean_n_primary",
];

pub const HISTOGRAM_HEADER: [&str; 4] = ["snapshot", "bin_lo", "bin_hi", "count"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}, line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl OutputError {
    fn io(path: &Path, source: io::Error) -> Self {
        OutputError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: u64,
    pub opinions: Vec<f64>,
    pub manipulator_opinion: f64,
}

pub fn trajectory_records(tr: &Trajectory) -> Vec<SnapshotRecord> {
    tr.snapshots
        .iter()
        .zip(&tr.manipulator_opinions)
        .map(|(s, &f)| SnapshotRecord {
            t: s.time(),
            opinions: s.opinions().to_vec(),
            manipulator_opinion: f,
        })
        .collect()
}

/// Written by `simulate` next to the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub epsilon: f64,
    pub k: usize,
    pub t_delta: u64,
    pub seed: u64,
    pub stop_time: u64,
    pub stop_reason: StopReason,
    pub mean: f64,
    pub std: f64,
    pub n_clusters: usize,
    pub clusters: Vec<Cluster>,
    pub center: f64,
    pub amplitude: f64,
    pub n_primary: usize,
    pub effective_weights: Vec<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>, OutputError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| OutputError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| OutputError::io(path, e))
}

fn json_err(path: &Path, line: usize) -> impl FnOnce(serde_json::Error) -> OutputError + '_ {
    move |source| OutputError::Json {
        path: path.to_path_buf(),
        line,
        source,
    }
}

pub fn write_records<W: Write>(out: &mut W, records: &[SnapshotRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_trajectory_jsonl(path: &Path, tr: &Trajectory) -> Result<(), OutputError> {
    let mut out = create(path)?;
    write_records(&mut out, &trajectory_records(tr))
        .and_then(|_| out.flush())
        .map_err(|e| OutputError::io(path, e))
}

pub fn read_trajectory_jsonl(path: &Path) -> Result<Vec<SnapshotRecord>, OutputError> {
    let file = File::open(path).map_err(|e| OutputError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| OutputError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(json_err(path, i + 1))?);
    }
    Ok(records)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(json_err(path, 0))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| OutputError::io(path, e))
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// One row per (cell, snapshot label), cells in grid order.
pub fn write_sweep_csv<W: Write>(out: W, result: &SweepResult) -> csv::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for cell in &result.cells {
        for snap in &cell.snapshots {
            let a = &snap.aggregates;
            w.write_record([
                cell.k.to_string(),
                cell.t_delta.to_string(),
                snap.label.clone(),
                format_float(a.mean_of_means),
                format_float(a.mean_of_stds),
                format_float(a.mean_n_clusters),
                format_float(a.mean_center),
                format_float(a.mean_amplitude),
                format_float(a.mean_n_primary),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width bins over `[0, max)`; larger weights fall in the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(width: f64, max: f64) -> Self {
        let bins = ((max / width).round() as usize).max(1);
        Self {
            width,
            counts: vec![0; bins],
        }
    }

    pub fn add(&mut self, w: f64) {
        let last = self.counts.len() - 1;
        let idx = ((w / self.width).floor().max(0.0) as usize).min(last);
        self.counts[idx] += 1;
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.width, (i + 1) as f64 * self.width)
    }
}

/// Effective weights of every local maximum in every replicate of every cell,
/// one histogram per snapshot label.
pub fn effective_weight_histograms(result: &SweepResult, width: f64, max: f64) -> Vec<(String, Histogram)> {
    result
        .labels
        .iter()
        .map(|label| {
            let mut h = Histogram::new(width, max);
            let weights = result
                .cells
                .iter()
                .filter_map(|c| c.snapshot(label))
                .flat_map(|s| s.summaries.iter())
                .flat_map(|s: &Summary| s.effective_weights.iter());
            for &w in weights {
                h.add(w);
            }
            (label.clone(), h)
        })
        .collect()
}

pub fn write_histogram_csv<W: Write>(out: W, histograms: &[(String, Histogram)]) -> csv::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(HISTOGRAM_HEADER)?;
    for (label, h) in histograms {
        for (i, count) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(i);
            w.write_record([label.clone(), format_float(lo), format_float(hi), count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
) -> Result<(), OutputError> {
    let mut out = create(path)?;
    write(&mut out).map_err(|source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    out.flush().map_err(|e| OutputError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| OutputError::io(path, e))
}
