use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::EpisodeSummary;

pub const METRICS_HEADER: [&str; 7] = [
    "episode",
    "seed",
    "mean_latency_ms",
    "resource_efficiency",
    "slo_violation_rate",
    "total_reward",
    "wall_time_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub seed: u64,
    pub mean_latency_ms: f64,
    pub resource_efficiency: f64,
    pub slo_violation_rate: f64,
    pub total_reward: f64,
    pub wall_time_s: f64,
}

impl EpisodeMetrics {
    pub fn new(episode: u64, seed: u64, summary: EpisodeSummary, wall_time_s: f64) -> Self {
        Self {
            episode,
            seed,
            mean_latency_ms: summary.mean_latency_ms,
            resource_efficiency: summary.resource_efficiency,
            slo_violation_rate: summary.slo_violation_rate,
            total_reward: summary.total_reward,
            wall_time_s,
        }
    }

    /// Equality on everything but wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            wall_time_s: 0.0,
            ..*self
        } == Self {
            wall_time_s: 0.0,
            ..*other
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("{other:?}"),
        },
    }
}

/// Writes metrics with the fixed header to any writer. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_metrics<W: Write>(metrics: &[EpisodeMetrics], writer: W) -> csv::Result<W> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for m in metrics {
        w.write_record([
            m.episode.to_string(),
            m.seed.to_string(),
            m.mean_latency_ms.to_string(),
            m.resource_efficiency.to_string(),
            m.slo_violation_rate.to_string(),
            m.total_reward.to_string(),
            m.wall_time_s.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn export_csv(metrics: &[EpisodeMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut file = write_metrics(metrics, file).map_err(|e| csv_error(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`export_csv`], checking the header exactly.
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<EpisodeMetrics>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let m: EpisodeMetrics = record.deserialize(Some(&header)).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        out.push(m);
    }
    Ok(out)
}
