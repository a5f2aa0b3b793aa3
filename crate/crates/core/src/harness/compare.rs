//! Cross-run comparison: per-run summary statistics and learning curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::metrics::{read_metrics_csv, EpisodeMetrics};
use super::run::RunManifest;
use crate::agents::Algorithm;
use crate::error::{Error, Result};

/// Episodes in the trailing window.
pub const LAST_WINDOW: usize = 10;

pub const METRIC_NAMES: [&str; 4] = [
    "mean_latency_ms",
    "resource_efficiency",
    "slo_violation_rate",
    "total_reward",
];

fn metric_values(m: &EpisodeMetrics) -> [f64; 4] {
    [
        m.mean_latency_ms,
        m.resource_efficiency,
        m.slo_violation_rate,
        m.total_reward,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub algorithm: Algorithm,
    pub run_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Across seeds, of each seed's mean over all episodes. Indexed like [`METRIC_NAMES`].
    pub all_episodes: [MeanStd; 4],
    /// Across seeds, of each seed's mean over its last [`LAST_WINDOW`] episodes.
    pub last_window: [MeanStd; 4],
    /// Per-episode mean across seeds.
    pub curve: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub scenario: String,
    pub runs: Vec<RunSummary>,
}

fn group_by_seed(metrics: &[EpisodeMetrics]) -> BTreeMap<u64, Vec<EpisodeMetrics>> {
    let mut by_seed: BTreeMap<u64, Vec<EpisodeMetrics>> = BTreeMap::new();
    for m in metrics {
        by_seed.entry(m.seed).or_default().push(*m);
    }
    for rows in by_seed.values_mut() {
        rows.sort_by_key(|m| m.episode);
    }
    by_seed
}

/// Summarizes one run's metrics.
pub fn summarize(label: &str, algorithm: Algorithm, run_dir: &Path, metrics: &[EpisodeMetrics]) -> Result<RunSummary> {
    let by_seed = group_by_seed(metrics);
    if by_seed.is_empty() {
        return Err(Error::validation(
            format!("{}", run_dir.display()),
            "run has no episode metrics",
        ));
    }
    let window_stats = |take_last: Option<usize>| -> [MeanStd; 4] {
        std::array::from_fn(|k| {
            let per_seed: Vec<f64> = by_seed
                .values()
                .map(|rows| {
                    let start = take_last.map_or(0, |w| rows.len().saturating_sub(w));
                    let xs: Vec<f64> = rows[start..].iter().map(|m| metric_values(m)[k]).collect();
                    xs.iter().sum::<f64>() / xs.len() as f64
                })
                .collect();
            mean_std(&per_seed)
        })
    };
    let episodes = by_seed.values().map(Vec::len).min().unwrap_or(0);
    let curve = (0..episodes)
        .map(|e| {
            std::array::from_fn(|k| {
                by_seed.values().map(|rows| metric_values(&rows[e])[k]).sum::<f64>() / by_seed.len() as f64
            })
        })
        .collect();
    Ok(RunSummary {
        label: label.to_string(),
        algorithm,
        run_dir: run_dir.to_path_buf(),
        seeds: by_seed.keys().copied().collect(),
        all_episodes: window_stats(None),
        last_window: window_stats(Some(LAST_WINDOW)),
        curve,
    })
}

/// Loads completed runs and summarizes them. All runs must share a scenario
/// and episode length.
pub fn compare_runs(run_dirs: &[PathBuf]) -> Result<ComparisonReport> {
    if run_dirs.len() < 2 {
        return Err(Error::validation("runs", "at least two run directories required"));
    }
    let mut manifests = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        let m = RunManifest::load(dir)?;
        if m.status != "complete" {
            return Err(Error::Incompatible(format!(
                "{} has status `{}`, not complete",
                dir.display(),
                m.status
            )));
        }
        manifests.push(m);
    }
    let first = &manifests[0];
    for (dir, m) in run_dirs.iter().zip(&manifests).skip(1) {
        if m.scenario != first.scenario {
            return Err(Error::Incompatible(format!(
                "{} ran scenario `{}` but {} ran `{}`",
                dir.display(),
                m.scenario,
                run_dirs[0].display(),
                first.scenario
            )));
        }
        if m.steps_per_episode != first.steps_per_episode {
            return Err(Error::Incompatible(format!(
                "{} uses {} steps per episode but {} uses {}",
                dir.display(),
                m.steps_per_episode,
                run_dirs[0].display(),
                first.steps_per_episode
            )));
        }
    }
    let runs = run_dirs
        .iter()
        .zip(&manifests)
        .map(|(dir, m)| {
            let metrics = read_metrics_csv(dir.join("metrics.csv"))?;
            let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
            summarize(&format!("{}:{}", m.algorithm, name), m.algorithm, dir, &metrics)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        scenario: first.scenario.clone(),
        runs,
    })
}

impl ComparisonReport {
    /// Plain-text tables, one per metric and window.
    pub fn render(&self) -> String {
        let mut out = format!("scenario: {}\n", self.scenario);
        let width = self.runs.iter().map(|r| r.label.len()).max().unwrap_or(3).max(3);
        for (window, title) in [(false, "all episodes"), (true, "last 10 episodes")] {
            for (k, name) in METRIC_NAMES.iter().enumerate() {
                let _ = writeln!(out, "\n{name} ({title}), mean ± std across seeds");
                for r in &self.runs {
                    let s = if window { r.last_window[k] } else { r.all_episodes[k] };
                    let _ = writeln!(out, "  {:width$}  {:>12.4} ± {:.4}", r.label, s.mean, s.std);
                }
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("run,algorithm,window,metric,mean,std,seeds\n");
        for r in &self.runs {
            for (window, stats) in [("all", &r.all_episodes), ("last10", &r.last_window)] {
                for (name, s) in METRIC_NAMES.iter().zip(stats) {
                    let _ = writeln!(out, "{},{},{window},{name},{},{},{}", r.label, r.algorithm, s.mean, s.std, r.seeds.len());
                }
            }
        }
        out
    }

    /// Long-format learning curves: one row per run and episode.
    pub fn curves_csv(&self) -> String {
        let mut out = format!("run,episode,{}\n", METRIC_NAMES.join(","));
        for r in &self.runs {
            for (e, v) in r.curve.iter().enumerate() {
                let _ = writeln!(out, "{},{e},{},{},{},{}", r.label, v[0], v[1], v[2], v[3]);
            }
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("summary.csv", self.summary_csv()),
            ("curves.csv", self.curves_csv()),
            ("report.txt", self.render()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
