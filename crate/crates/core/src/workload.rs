//! Per-step request rates driving the simulator.
//!
//! A step is one 30-second decision window and rates are fluid request/s
//! figures, not individual requests. Synthetic generators produce an
//! aggregate rate which is split across services by a weight vector; trace
//! sources replay per-service rates read from a `step,service,qps` file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 3] = ["step", "service", "qps"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step_index: u64,
    pub service_id: usize,
    pub qps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadKind {
    Constant {
        rate: f64,
    },
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        period_steps: f64,
    },
    Burst {
        base_rate: f64,
        burst_rate: f64,
        burst_start: u64,
        burst_len: u64,
    },
    /// Dense `[step][service]` table; missing entries are zero.
    Trace { table: Vec<Vec<f64>> },
}

/// Named weight presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPreset {
    Uniform,
    FrontendHeavy,
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Front end takes the largest share; remaining traffic tapers along the
/// request path.
pub fn frontend_heavy_weights(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|i| if i == 0 { 3.0 } else { 1.0 + 1.0 / (i as f64 + 1.0) })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

impl WeightPreset {
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            WeightPreset::Uniform => uniform_weights(n),
            WeightPreset::FrontendHeavy => frontend_heavy_weights(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSource {
    kind: WorkloadKind,
    weights: Vec<f64>,
    /// Relative standard deviation of a per-step multiplicative jitter on the
    /// aggregate rate. Zero disables it.
    jitter: f64,
}

impl WorkloadSource {
    pub fn new(kind: WorkloadKind, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::validation("workload.weights", "empty"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation(
                "workload.weights",
                "weights must be finite and non-negative",
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "workload.weights",
                format!("weights sum to {total}, expected 1"),
            ));
        }
        match &kind {
            WorkloadKind::Constant { rate } => non_negative("workload.rate", *rate)?,
            WorkloadKind::Sinusoidal {
                mean,
                amplitude,
                period_steps,
            } => {
                non_negative("workload.mean", *mean)?;
                non_negative("workload.amplitude", *amplitude)?;
                if !(*period_steps > 0.0) {
                    return Err(Error::validation("workload.period_steps", "must be > 0"));
                }
            }
            WorkloadKind::Burst {
                base_rate,
                burst_rate,
                ..
            } => {
                non_negative("workload.base_rate", *base_rate)?;
                non_negative("workload.burst_rate", *burst_rate)?;
            }
            WorkloadKind::Trace { table } => {
                if table.iter().any(|row| row.len() != weights.len()) {
                    return Err(Error::Dimension {
                        what: "trace row",
                        expected: weights.len(),
                        got: table.iter().map(Vec::len).find(|&l| l != weights.len()).unwrap_or(0),
                    });
                }
            }
        }
        Ok(Self {
            kind,
            weights,
            jitter: 0.0,
        })
    }

    pub fn constant(rate: f64, n_services: usize) -> Result<Self> {
        Self::new(WorkloadKind::Constant { rate }, uniform_weights(n_services))
    }

    pub fn from_trace(records: &[TraceRecord], n_services: usize) -> Result<Self> {
        let steps = records.iter().map(|r| r.step_index + 1).max().unwrap_or(0) as usize;
        let mut table = vec![vec![0.0; n_services]; steps];
        for r in records {
            if r.service_id >= n_services {
                return Err(Error::validation(
                    "trace.service",
                    format!("service {} out of range [0, {n_services})", r.service_id),
                ));
            }
            table[r.step_index as usize][r.service_id] = r.qps;
        }
        Self::new(WorkloadKind::Trace { table }, uniform_weights(n_services))
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self> {
        non_negative("workload.jitter", jitter)?;
        self.jitter = jitter;
        Ok(self)
    }

    pub fn kind(&self) -> &WorkloadKind {
        &self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_services(&self) -> usize {
        self.weights.len()
    }

    /// Aggregate rate of a synthetic generator at `step`, before jitter and
    /// clamping. `None` for trace sources.
    pub fn aggregate_rate(&self, step: u64) -> Option<f64> {
        match &self.kind {
            WorkloadKind::Constant { rate } => Some(*rate),
            WorkloadKind::Sinusoidal {
                mean,
                amplitude,
                period_steps,
            } => Some(
                mean + amplitude * (2.0 * std::f64::consts::PI * step as f64 / period_steps).sin(),
            ),
            WorkloadKind::Burst {
                base_rate,
                burst_rate,
                burst_start,
                burst_len,
            } => {
                let in_burst = step >= *burst_start && step < burst_start + burst_len;
                Some(if in_burst { *burst_rate } else { *base_rate })
            }
            WorkloadKind::Trace { .. } => None,
        }
    }

    /// Per-service request rates at `step`. Deterministic in `(self, step, seed)`.
    pub fn qps_at(&self, step: u64, seed: u64) -> Vec<f64> {
        let mut out = match &self.kind {
            WorkloadKind::Trace { table } => match table.len() {
                0 => vec![0.0; self.weights.len()],
                len => table[(step as usize).min(len - 1)].clone(),
            },
            _ => {
                let rate = self.aggregate_rate(step).expect("synthetic source");
                self.weights.iter().map(|w| rate * w).collect()
            }
        };
        if self.jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(step);
            let z: f64 = StandardNormal.sample(&mut rng);
            let factor = 1.0 + self.jitter * z;
            out.iter_mut().for_each(|q| *q *= factor);
        }
        out.iter_mut().for_each(|q| *q = q.max(0.0));
        out
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, "must be finite and >= 0"))
    }
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    step: u64,
    service: usize,
    qps: f64,
}

/// Reads a `step,service,qps` trace. Rows are returned sorted by
/// `(step, service)`; duplicate pairs are rejected.
pub fn load_trace(path: impl AsRef<Path>, n_services: usize) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().ne(TRACE_HEADER) {
        return Err(parse_err(
            1,
            format!("expected header `step,service,qps`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut seen: BTreeMap<(u64, usize), u64> = BTreeMap::new();
    let mut records = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: TraceRow = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        if row.service >= n_services {
            return Err(Error::validation(
                format!("trace line {line}: service"),
                format!("{} out of range [0, {n_services})", row.service),
            ));
        }
        if !(row.qps.is_finite() && row.qps >= 0.0) {
            return Err(Error::validation(
                format!("trace line {line}: qps"),
                "must be finite and >= 0",
            ));
        }
        if let Some(first) = seen.insert((row.step, row.service), line) {
            return Err(parse_err(
                line,
                format!(
                    "duplicate (step {}, service {}) first seen on line {first}",
                    row.step, row.service
                ),
            ));
        }
        records.push(TraceRecord {
            step_index: row.step,
            service_id: row.service,
            qps: row.qps,
        });
    }
    records.sort_by_key(|r| (r.step_index, r.service_id));
    Ok(records)
}

/// Writes per-service rates of `source` for steps `0..steps` as a trace file.
pub fn write_trace(
    path: impl AsRef<Path>,
    source: &WorkloadSource,
    steps: u64,
    seed: u64,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("step,service,qps\n");
    for step in 0..steps {
        for (service, qps) in source.qps_at(step, seed).into_iter().enumerate() {
            out.push_str(&format!("{step},{service},{qps}\n"));
        }
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
