//! `s2d` command line: train, decode, bench, sweep, compare.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{load_model, DraftSpec, ExperimentConfig, MethodSpec, TargetSpec};
use crate::error::{exit, BenchError, Result};
use crate::recipe::{run_recipe, TrainRecipe};
use crate::report::{compare, Report};
use crate::runner::{decode_with, run_bench, RunOptions};
use crate::sweep::threshold_sweep;
use s2d_core::exec::ExecMode;
use s2d_core::metrics::RunMetrics;
use s2d_core::transformer::TrainingMode;

#[derive(Debug, Parser)]
#[command(
    name = "s2d",
    version,
    about = "Sorted speculative decoding: training, decoding and benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (defaults to the config's `output_dir`, else `./out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace the configured seeds with this one.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the configured temperatures with this one.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Worker threads (1 enables wall-clock timing).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the models of a recipe and write checkpoints plus an experiment config.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training mode of the draft ladder.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainingMode>,
    },
    /// Run one generation and print its trace.
    Decode {
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment grid and write report.json / report.csv.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Archive every decode trace and re-derive the report from them.
        #[arg(long)]
        persist_traces: bool,
    },
    /// Run the config's threshold sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Accepted for symmetry with `bench`; sweeps do not archive traces.
        #[arg(long)]
        persist_traces: bool,
    },
    /// Diff two reports (directories or report files).
    Compare { first: PathBuf, second: PathBuf },
}

fn parse_mode(s: &str) -> std::result::Result<TrainingMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// A single generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub target: TargetSpec,
    #[serde(default)]
    pub draft: Option<DraftSpec>,
    pub method: MethodSpec,
    pub prompt: String,
    pub max_new_tokens: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecodeOutput {
    pub prompt: String,
    pub text: String,
    pub metrics: RunMetrics,
    pub trace: s2d_core::decoding::DecodeTrace,
}

pub fn decode_file(
    path: &Path,
    seed: Option<u64>,
    temperature: Option<f64>,
) -> Result<DecodeOutput> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let cfg: DecodeConfig = serde_json::from_str(&text)
        .map_err(|e| BenchError::Config(format!("decode config: {e}")))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let target = load_model(&cfg.target.model, cfg.target.unit_cost, base)?;
    let draft = cfg
        .draft
        .as_ref()
        .map(|d| load_model(&d.model, d.unit_cost, base))
        .transpose()?;
    let trace = decode_with(
        &cfg.method,
        &cfg.target.name,
        &target,
        draft.as_ref(),
        &cfg.prompt,
        cfg.max_new_tokens,
        temperature.unwrap_or(cfg.temperature),
        seed.unwrap_or(cfg.seed),
    )?;
    let cd = draft.as_ref().unwrap_or(&target).cost_profile();
    let metrics = RunMetrics::from_trace(&trace, &target.cost_profile(), &cd, None)?;
    Ok(DecodeOutput {
        prompt: cfg.prompt,
        text: target.vocab().decode(&trace.output),
        metrics,
        trace,
    })
}

fn load_experiment(common: &Common) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        c.seeds = vec![s];
    }
    if let Some(t) = common.temperature {
        c.temperatures = vec![t];
    }
    c.validate()?;
    Ok(c)
}

fn out_dir(common: &Common, config: Option<&ExperimentConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.output_dir.as_ref().map(|p| c.resolve(p))))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run_options(common: &Common, out: &Path, persist: bool) -> RunOptions {
    RunOptions {
        threads: common.threads,
        exec: ExecMode::default(),
        wallclock: true,
        trace_dir: persist.then(|| out.to_path_buf()),
    }
}

fn summarize(report: &Report, out: &mut dyn Write) -> std::io::Result<()> {
    for r in report.cells() {
        let f = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.3}"));
        writeln!(
            out,
            "{:<10} {:<24} T={:<4} seed={:<3} MAT {:>6} acc {:>6} speedup {:>6}{}",
            r.target,
            r.method,
            r.temperature,
            r.seed,
            f(r.mat),
            f(r.acceptance_rate),
            f(r.modeled_speedup),
            r.error
                .as_ref()
                .map(|e| format!("  ERROR {e}"))
                .unwrap_or_default()
        )?;
    }
    for (t, b) in &report.metadata.best_thresholds {
        writeln!(out, "best thresholds for {t}: {b:?}")?;
    }
    Ok(())
}

pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| BenchError::Runtime(e.to_string());
    match cli.command {
        Command::Train { common, mode } => {
            let recipe = TrainRecipe::load(&common.config)?;
            let out = out_dir(&common, None);
            let run = || {
                run_recipe(
                    &recipe,
                    &out,
                    common.seed,
                    mode,
                    ExecMode::default(),
                    &mut |line| {
                        let _ = writeln!(std::io::stderr(), "{line}");
                    },
                )
            };
            let summary = match common.threads {
                Some(n) => s2d_core::exec::with_threads(n, run),
                None => run(),
            }?;
            writeln!(
                stdout,
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            )
            .map_err(io)?;
        }
        Command::Decode { common } => {
            let output = decode_file(&common.config, common.seed, common.temperature)?;
            let json = serde_json::to_string_pretty(&output).expect("output serializes");
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
                let p = dir.join("decode.json");
                std::fs::write(&p, &json).map_err(|e| BenchError::io(&p, e))?;
            }
            writeln!(stdout, "{json}").map_err(io)?;
        }
        Command::Bench {
            common,
            persist_traces,
        } => {
            let config = load_experiment(&common)?;
            let out = out_dir(&common, Some(&config));
            let report = run_bench(&config, &run_options(&common, &out, persist_traces))?;
            report.emit(&out)?;
            summarize(&report, stdout).map_err(io)?;
            writeln!(stderr, "report written to {}", out.display()).map_err(io)?;
        }
        Command::Sweep {
            common,
            persist_traces,
        } => {
            let config = load_experiment(&common)?;
            let out = out_dir(&common, Some(&config));
            let mut opts = run_options(&common, &out, false);
            opts.trace_dir = None;
            if persist_traces {
                writeln!(
                    stderr,
                    "note: sweep reports are not re-derived from traces; --persist-traces ignored"
                )
                .map_err(io)?;
            }
            let report = threshold_sweep(&config, &opts)?;
            report.emit(&out)?;
            summarize(&report, stdout).map_err(io)?;
            writeln!(stderr, "report written to {}", out.display()).map_err(io)?;
        }
        Command::Compare { first, second } => {
            let a = Report::load(&first)?;
            let b = Report::load(&second)?;
            let diffs = compare(&a, &b);
            if diffs.is_empty() {
                writeln!(stdout, "reports match ({} rows)", a.rows.len()).map_err(io)?;
            }
            for d in diffs {
                writeln!(stdout, "{d}").map_err(io)?;
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
