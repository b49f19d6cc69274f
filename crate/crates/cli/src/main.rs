use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use segre_core::harness::{preset_names, presets, run_experiment_with, ExperimentConfig, MethodName, Task, ENV_PREFIX};

#[derive(Parser)]
#[command(name = "segre", version, about = "Riemannian CP decomposition and tensor regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a CP decomposition experiment.
    Decompose(RunArgs),
    /// Run a scalar-on-tensor regression experiment.
    Regress(RunArgs),
    /// Run any experiment with wall-clock timing and print per-method timings.
    Bench(RunArgs),
    /// List the shipped presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset name (see `segre presets`).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `out/<preset or task>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Method to run; repeat for several. Defaults to the config's list.
    #[arg(long = "method", value_name = "rgd|rgn|als")]
    methods: Vec<MethodName>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Suppress per-run progress lines.
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Decompose(args) => experiment(args, Some(Task::Decompose), false),
        Command::Regress(args) => experiment(args, Some(Task::Regress), false),
        Command::Bench(args) => experiment(args, None, true),
    }
}

fn load_config(args: &RunArgs, task: Option<Task>) -> Result<(ExperimentConfig, String)> {
    let (text, label) = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let label = path.file_stem().map_or("experiment".into(), |s| s.to_string_lossy().into_owned());
            (text, label)
        }
        (None, Some(name)) => (presets::preset_text(name)?.to_string(), name.clone()),
        (None, None) => {
            let name = match task {
                Some(Task::Regress) => "regress",
                _ => "decompose",
            };
            (presets::preset_text(name)?.to_string(), name.to_string())
        }
    };
    let mut config = ExperimentConfig::from_toml_with_env(&text, std::env::vars())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if !args.methods.is_empty() {
        config.methods = args.methods.clone();
    }
    if let Some(m) = args.max_iters {
        config.max_iters = m;
    }
    config.validate()?;
    if let Some(t) = task {
        if config.task != t {
            bail!("config {label:?} describes a {:?} experiment; use the matching subcommand", config.task);
        }
    }
    Ok((config, label))
}

fn experiment(args: RunArgs, task: Option<Task>, bench: bool) -> Result<ExitCode> {
    let (mut config, label) = load_config(&args, task)?;
    if bench {
        config.record_wall_time = true;
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&label));
    eprintln!(
        "{label}: {:?} dims {:?} rank {} with {} replicate(s) into {} (env overrides use {ENV_PREFIX}*)",
        config.task,
        config.dims,
        config.rank,
        config.replicates,
        out.display()
    );
    let start = Instant::now();
    let quiet = args.quiet;
    let summary = run_experiment_with(&config, Some(&out), |o| {
        if quiet {
            return;
        }
        let last = o.trace.last();
        match &o.error {
            None => eprintln!(
                "  {} replicate {}: {} iterations, rel error {:.3e}",
                o.method.as_str(),
                o.replicate,
                o.trace.len().saturating_sub(1),
                last.map_or(f64::NAN, |r| r.rel_fro_err)
            ),
            Some(e) => eprintln!("  {} replicate {} failed: {e}", o.method.as_str(), o.replicate),
        }
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    println!("method  final_rms_rel_err  succeeded");
    for m in config.method_list() {
        let ok = summary.outcomes_for(m).filter(|o| o.succeeded()).count();
        let err = summary.final_error(m).unwrap_or(f64::NAN);
        println!("{:<6}  {:>17.6e}  {ok}/{}", m.as_str(), err, config.replicates);
    }
    if bench {
        println!("method  mean_ms_per_run  mean_ms_per_iter");
        for m in config.method_list() {
            let runs: Vec<_> = summary.outcomes_for(m).filter(|o| o.succeeded()).collect();
            let total: f64 = runs.iter().filter_map(|o| o.trace.last()).map(|r| r.wall_ms).sum();
            let iters: usize = runs.iter().map(|o| o.trace.len().saturating_sub(1)).sum();
            let per_run = total / runs.len().max(1) as f64;
            let per_iter = total / iters.max(1) as f64;
            println!("{:<6}  {per_run:>15.1}  {per_iter:>16.2}", m.as_str());
        }
    }
    println!("total {elapsed:.1} s");
    let failed = summary.failed_methods();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        let names: Vec<_> = failed.iter().map(|m| m.as_str()).collect();
        eprintln!("every replicate failed for: {}", names.join(", "));
        Ok(ExitCode::FAILURE)
    }
}
