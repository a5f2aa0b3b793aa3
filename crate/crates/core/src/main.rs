use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use td3_sched::agents::Algorithm;
use td3_sched::harness::{
    compare_runs, export_csv, run_evaluation, run_training, write_metrics, ExperimentConfig,
};
use td3_sched::workload::{write_trace, WorkloadKind, WorkloadSource};
use td3_sched::Error;

#[derive(Parser)]
#[command(name = "td3-sched", version, about = "Train, evaluate and compare cluster schedulers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm for every configured seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        algo: Algorithm,
        /// Train only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy rollouts of a saved policy; writes metrics CSV to stdout.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Required except for basek.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        episodes: u64,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write metrics here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize two or more completed runs.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Also write summary.csv, curves.csv and report.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trace file.
    GenTrace {
        #[arg(long)]
        kind: TraceKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 8)]
        services: usize,
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceKind {
    Constant,
    Sinusoidal,
    Burst,
}

fn run(cli: Cli) -> td3_sched::Result<()> {
    match cli.command {
        Command::Train { config, algo, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.algorithm = algo;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let report = run_training(&cfg)?;
            println!("trained {} seeds -> {}", report.seeds.len(), report.output_dir.display());
        }
        Command::Eval { config, params, episodes, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let metrics = run_evaluation(&cfg, params.as_deref(), episodes, seed)?;
            match out {
                Some(p) => export_csv(&metrics, p)?,
                None => {
                    write_metrics(&metrics, std::io::stdout().lock())
                        .map(drop)
                        .map_err(|e| Error::Config(format!("writing metrics to stdout: {e}")))?;
                }
            }
        }
        Command::Compare { runs, out } => {
            let report = compare_runs(&runs)?;
            print!("{}", report.render());
            if let Some(dir) = out {
                report.write(dir)?;
            }
        }
        Command::GenTrace { kind, out, steps, services, rate, seed } => {
            let kind = match kind {
                TraceKind::Constant => WorkloadKind::Constant { rate },
                TraceKind::Sinusoidal => WorkloadKind::Sinusoidal {
                    mean: rate,
                    amplitude: rate / 2.0,
                    period_steps: 20.0,
                },
                TraceKind::Burst => WorkloadKind::Burst {
                    base_rate: rate,
                    burst_rate: 3.0 * rate,
                    burst_start: steps / 2,
                    burst_len: (steps / 5).max(1),
                },
            };
            let source = WorkloadSource::new(kind, td3_sched::workload::uniform_weights(services))?;
            write_trace(&out, &source, steps, seed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} msg={msg:?}", e.kind());
            ExitCode::FAILURE
        }
    }
}
