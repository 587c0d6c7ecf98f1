//! Command-line front end. Extension crates call [`main_with`] with their own
//! registry to make additional agents selectable by name.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, parse_overrides, ConfigSet};
use crate::runner::{AgentRegistry, Runner, Schedule};
use crate::telemetry::{aggregate, compare_against_baseline, load_logs, plot, Band, ExperimentLog, Metric, PlotFormat, RunSet, LOG_FILE};

#[derive(Debug, Parser)]
#[command(name = "valrl", version, about = "Value-based deep RL experiments on toy environments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run (or resume) one experiment.
    Train(TrainArgs),
    /// Aggregate runs into a CSV or SVG learning curve.
    Plot(PlotArgs),
    /// Overlay runs on the shipped baselines and write a summary table.
    Compare(CompareArgs),
    /// Run every config pair of a study directory over several seeds and plot each pair.
    Study(StudyArgs),
    /// Write the human-readable CSV mirror of a run's log.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Run directory or `log.bin` path.
    #[arg(long)]
    pub run: PathBuf,
    /// Defaults to `log.csv` next to the log.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `Component.param=value`, applied after the config file. Repeatable.
    #[arg(long = "binding", value_name = "KEY=VALUE")]
    pub bindings: Vec<String>,
    #[arg(long)]
    pub base_dir: PathBuf,
    #[arg(long)]
    pub schedule: Option<Schedule>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Glob patterns matching run directories or their `log.bin`.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<String>,
    /// Binding whose value names each run's group, e.g. `Runner.agent_name`.
    #[arg(long, default_value = "Runner.agent_name")]
    pub group_by: String,
    #[arg(long, default_value = "train_return_mean")]
    pub metric: Metric,
    #[arg(long, default_value = "minmax")]
    pub band: Band,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "svg")]
    pub format: PlotFormat,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<String>,
    #[arg(long)]
    pub baselines: PathBuf,
    /// Output directory for `plot.svg`, `curves.csv` and `summary.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "Runner.agent_name")]
    pub group_by: String,
    #[arg(long, default_value = "train_return_mean")]
    pub metric: Metric,
    #[arg(long, default_value = "minmax")]
    pub band: Band,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Directory of studies; each subdirectory holds two or more `.gin` files.
    #[arg(long, default_value = "configs/study")]
    pub studies: PathBuf,
    /// Only run these studies (subdirectory names).
    #[arg(long = "only")]
    pub only: Vec<String>,
    #[arg(long)]
    pub base_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long = "binding", value_name = "KEY=VALUE")]
    pub bindings: Vec<String>,
    #[arg(long, default_value = "train_return_mean")]
    pub metric: Metric,
    #[arg(long, default_value = "minmax")]
    pub band: Band,
}

/// Reads a config file and appends command-line bindings after it.
pub fn load_config(path: &Path, bindings: &[String]) -> Result<ConfigSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = parse_config(&text, &path.display().to_string())?;
    config.extend(parse_overrides(bindings)?);
    Ok(config)
}

fn group_runs(patterns: &[String], group_by: &str) -> Result<RunSet> {
    let logs = load_logs(patterns)?;
    if logs.is_empty() {
        bail!("no logs match {}", patterns.join(" "));
    }
    let mut set = RunSet::default();
    for log in logs {
        let group = log.binding(group_by).unwrap_or_else(|| {
            log::warn!("{}: `{group_by}` is not in the recorded configuration", log.path.display());
            "<unset>".to_string()
        });
        set.insert(&group, log);
    }
    Ok(set)
}

fn train(args: &TrainArgs, registry: &AgentRegistry) -> Result<()> {
    let mut bindings = args.bindings.clone();
    if let Some(schedule) = args.schedule {
        bindings.push(format!("Runner.schedule = @{schedule}"));
    }
    if let Some(seed) = args.seed {
        bindings.push(format!("Runner.seed = {seed}"));
    }
    let config = load_config(&args.config, &bindings)?;
    let mut runner = Runner::new(&args.base_dir, &config, registry)?;
    runner.run_experiment()?;
    println!("{}: {} iterations complete", args.base_dir.display(), runner.next_iteration());
    Ok(())
}

fn study(args: &StudyArgs, registry: &AgentRegistry) -> Result<()> {
    let mut studies: Vec<PathBuf> = fs::read_dir(&args.studies)
        .with_context(|| format!("reading {}", args.studies.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    studies.sort();
    if !args.only.is_empty() {
        studies.retain(|p| p.file_name().is_some_and(|n| args.only.iter().any(|o| n == o.as_str())));
    }
    if studies.is_empty() {
        bail!("no studies found in {}", args.studies.display());
    }
    for study in studies {
        let name = study.file_name().unwrap_or_default().to_string_lossy().to_string();
        let mut settings: Vec<PathBuf> = fs::read_dir(&study)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "gin")).collect();
        settings.sort();
        let mut set = RunSet::default();
        for setting in &settings {
            let label = setting.file_stem().unwrap_or_default().to_string_lossy().to_string();
            for seed in 0..args.seeds {
                let mut bindings = args.bindings.clone();
                bindings.push(format!("Runner.seed = {seed}"));
                let config = load_config(setting, &bindings)?;
                let dir = args.base_dir.join(&name).join(&label).join(format!("seed{seed}"));
                let mut runner = Runner::new(&dir, &config, registry)?;
                runner.run_experiment()?;
                set.insert(&label, ExperimentLog::read(&dir.join(LOG_FILE))?);
                println!("{name}/{label}/seed{seed} done");
            }
        }
        let curves = aggregate(&set, args.metric, args.band)?;
        let out = args.base_dir.join(&name);
        plot(&curves, &out.join("curves.csv"), PlotFormat::Csv, args.metric.as_str())?;
        plot(&curves, &out.join("plot.svg"), PlotFormat::Svg, args.metric.as_str())?;
        println!("{name}: wrote {}", out.join("plot.svg").display());
    }
    Ok(())
}

/// Executes one parsed command.
pub fn run(cli: &Cli, registry: &AgentRegistry) -> Result<()> {
    match &cli.command {
        Command::Train(args) => train(args, registry),
        Command::Plot(args) => {
            let set = group_runs(&args.runs, &args.group_by)?;
            let curves = aggregate(&set, args.metric, args.band)?;
            plot(&curves, &args.out, args.format, args.metric.as_str())?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Compare(args) => {
            let set = group_runs(&args.runs, &args.group_by)?;
            let rows = compare_against_baseline(&set, &args.baselines, args.metric, args.band, &args.out)?;
            println!("{:<24} {:>5} {:>10} {:>12}", "group", "runs", "iterations", "final_mean");
            for r in rows {
                println!("{:<24} {:>5} {:>10} {:>12.4}", r.group, r.runs, r.iterations, r.final_mean);
            }
            Ok(())
        }
        Command::Study(args) => study(args, registry),
        Command::Export(args) => {
            let path = if args.run.is_dir() { args.run.join(LOG_FILE) } else { args.run.clone() };
            let log = ExperimentLog::read(&path)?;
            let out = args.out.clone().unwrap_or_else(|| path.with_file_name("log.csv"));
            fs::write(&out, log.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

/// Parses the process arguments, initializes logging and runs.
pub fn main_with(registry: AgentRegistry) -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli, &registry) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
