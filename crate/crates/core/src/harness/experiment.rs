use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{ExperimentConfig, MethodName, Order};
use super::generate::gen_instance;
use crate::als::{cp_als, AlsConfig};
use crate::error::{Error, Result};
use crate::init::initialize;
use crate::rng::{stream_id, Purpose};
use crate::segre::CPModel;
use crate::solver::{run, Problem, SolveFailure, SolverConfig, StepSize, UpdateOrder};
use crate::trace::ConvergenceTrace;

/// Result of one method on one replicate. Failed runs keep their partial trace.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub method: MethodName,
    pub replicate: u64,
    pub trace: ConvergenceTrace,
    pub error: Option<String>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Root-mean-square over successful replicates at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub method: MethodName,
    pub iter: usize,
    pub rel_fro_err: f64,
    pub max_comp_err: f64,
    pub residual: f64,
    pub wall_ms: f64,
    pub replicates: usize,
}

pub const AGGREGATE_COLUMNS: [&str; 7] =
    ["method", "iter", "rel_fro_err", "max_comp_err", "residual", "wall_ms", "replicates"];

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub outcomes: Vec<RunOutcome>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentSummary {
    pub fn outcomes_for(&self, method: MethodName) -> impl Iterator<Item = &RunOutcome> {
        self.outcomes.iter().filter(move |o| o.method == method)
    }

    pub fn curve(&self, method: MethodName) -> Vec<&AggregateRow> {
        self.aggregate.iter().filter(|r| r.method == method).collect()
    }

    /// Final aggregate relative error of `method`, if any replicate succeeded.
    pub fn final_error(&self, method: MethodName) -> Option<f64> {
        self.curve(method).last().filter(|r| r.replicates > 0).map(|r| r.rel_fro_err)
    }

    /// Methods for which every replicate failed.
    pub fn failed_methods(&self) -> Vec<MethodName> {
        self.config
            .method_list()
            .into_iter()
            .filter(|&m| self.outcomes_for(m).all(|o| !o.succeeded()))
            .collect()
    }
}

pub fn solver_config(config: &ExperimentConfig, method: MethodName) -> Option<SolverConfig> {
    let base = match method {
        MethodName::Rgd => SolverConfig::rgd(),
        MethodName::Rgn => SolverConfig::rgn(),
        MethodName::Als => return None,
    };
    Some(SolverConfig {
        step_size: StepSize::Constant(config.alpha),
        max_iters: config.max_iters,
        stop_tol: config.stop_tol,
        pinv_tol: config.pinv_tol,
        update_order: match config.update_order {
            Order::Jacobi => UpdateOrder::Jacobi,
            Order::GaussSeidel => UpdateOrder::GaussSeidel,
            Order::Joint => UpdateOrder::Joint,
        },
        joint_gate: config.joint_gate,
        record_wall_time: config.record_wall_time,
        ..base
    })
}

fn run_method(
    problem: &Problem,
    config: &ExperimentConfig,
    method: MethodName,
    init: CPModel,
) -> std::result::Result<(CPModel, ConvergenceTrace), SolveFailure> {
    match solver_config(config, method) {
        Some(sc) => run(problem, &sc, init),
        None => {
            let als = AlsConfig { record_wall_time: config.record_wall_time, ..AlsConfig::new(config.max_iters) };
            cp_als(problem, init, &als)
        }
    }
}

/// Generates replicate `replicate`, initializes once and runs every method
/// from that shared start.
pub fn run_replicate(config: &ExperimentConfig, replicate: u64) -> Vec<RunOutcome> {
    let methods = config.method_list();
    let fail_all = |e: Error| {
        methods
            .iter()
            .map(|&method| RunOutcome { method, replicate, trace: ConvergenceTrace::default(), error: Some(e.to_string()) })
            .collect()
    };
    let problem = match gen_instance(config, replicate) {
        Ok(p) => p,
        Err(e) => return fail_all(e),
    };
    let init = match initialize(&problem.op, &problem.y, config.rank, &config.init_spec(replicate)) {
        Ok(m) => m,
        Err(e) => return fail_all(e),
    };
    methods
        .iter()
        .map(|&method| match run_method(&problem, config, method, init.clone()) {
            Ok((_, trace)) => RunOutcome { method, replicate, trace, error: None },
            Err(f) => RunOutcome { method, replicate, trace: f.trace, error: Some(f.error.to_string()) },
        })
        .collect()
}

/// Per-iteration RMS over the successful outcomes of each method. Runs that
/// stopped early hold their last row. Values are sorted before summing, so the
/// result does not depend on replicate order.
pub fn aggregate(outcomes: &[RunOutcome], methods: &[MethodName], max_iters: usize) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &method in methods {
        let traces: Vec<&ConvergenceTrace> = outcomes
            .iter()
            .filter(|o| o.method == method && o.succeeded() && !o.trace.is_empty())
            .map(|o| &o.trace)
            .collect();
        for t in 0..=max_iters {
            let at = |f: fn(&crate::trace::TraceRow) -> f64| -> Vec<f64> {
                traces.iter().map(|tr| f(&tr.rows[t.min(tr.len() - 1)])).collect()
            };
            rows.push(AggregateRow {
                method,
                iter: t,
                rel_fro_err: rms(at(|r| r.rel_fro_err)),
                max_comp_err: rms(at(|r| r.max_comp_err)),
                residual: rms(at(|r| r.residual)),
                wall_ms: mean(at(|r| r.wall_ms)),
                replicates: traces.len(),
            });
        }
    }
    rows
}

fn rms(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn mean(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(AGGREGATE_COLUMNS)?;
    for r in rows {
        wr.write_record([
            r.method.as_str().to_string(),
            r.iter.to_string(),
            r.rel_fro_err.to_string(),
            r.max_comp_err.to_string(),
            r.residual.to_string(),
            r.wall_ms.to_string(),
            r.replicates.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: std::io::Read>(r: R) -> Result<Vec<AggregateRow>> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().ne(AGGREGATE_COLUMNS) {
        return Err(Error::Config(format!("unexpected aggregate columns {:?}", rd.headers()?)));
    }
    let bad = |what: &str, s: &str| Error::Config(format!("bad {what} {s:?} in aggregate"));
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("number", s));
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad("integer", s));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(AggregateRow {
            method: rec[0].parse()?,
            iter: int(&rec[1])?,
            rel_fro_err: num(&rec[2])?,
            max_comp_err: num(&rec[3])?,
            residual: num(&rec[4])?,
            wall_ms: num(&rec[5])?,
            replicates: int(&rec[6])?,
        });
    }
    Ok(rows)
}

pub fn trace_file_name(method: MethodName, replicate: u64) -> String {
    format!("trace_{}_{}.csv", method.as_str(), replicate)
}

/// Config echo, per-replicate stream ids, failures and the files written.
pub fn manifest(config: &ExperimentConfig, outcomes: &[RunOutcome]) -> serde_json::Value {
    let streams: Vec<_> = (0..config.replicates as u64)
        .map(|rep| {
            json!({
                "replicate": rep,
                "factors": stream_id(Purpose::Factors, rep),
                "rotation": stream_id(Purpose::Rotation, rep),
                "weights": stream_id(Purpose::Weights, rep),
                "noise": stream_id(Purpose::Noise, rep),
                "design": stream_id(Purpose::Design, rep),
                "init": stream_id(Purpose::Init, rep),
            })
        })
        .collect();
    let failures: Vec<_> = outcomes
        .iter()
        .filter(|o| !o.succeeded())
        .map(|o| {
            json!({
                "method": o.method.as_str(),
                "replicate": o.replicate,
                "iterations_completed": o.trace.len().saturating_sub(1),
                "error": o.error,
            })
        })
        .collect();
    let files: Vec<String> = outcomes.iter().map(|o| trace_file_name(o.method, o.replicate)).collect();
    json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "rng": "chacha8, stream = (purpose << 32) | replicate",
        "seed": config.seed,
        "config": config,
        "sample_size": match config.task {
            super::config::Task::Regress => Some(config.sample_size()),
            super::config::Task::Decompose => None,
        },
        "streams": streams,
        "failures": failures,
        "files": files,
    })
}

/// Runs every replicate in order; writes traces, `aggregate.csv` and
/// `manifest.json` under `out` when given. `on_outcome` sees each run as it
/// finishes.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    out: Option<&Path>,
    mut on_outcome: impl FnMut(&RunOutcome),
) -> Result<ExperimentSummary> {
    config.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut outcomes = Vec::new();
    for rep in 0..config.replicates as u64 {
        for o in run_replicate(config, rep) {
            if let Some(dir) = out {
                o.trace.save_csv(dir.join(trace_file_name(o.method, o.replicate)))?;
            }
            on_outcome(&o);
            outcomes.push(o);
        }
    }
    let aggregate = aggregate(&outcomes, &config.method_list(), config.max_iters);
    if let Some(dir) = out {
        write_aggregate_csv(&aggregate, fs::File::create(dir.join("aggregate.csv"))?)?;
        let text = serde_json::to_string_pretty(&manifest(config, &outcomes))?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
    }
    Ok(ExperimentSummary { config: config.clone(), outcomes, aggregate })
}

pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentSummary> {
    run_experiment_with(config, out, |_| {})
}

/// Files `run_experiment` writes for `config`, relative to the output directory.
pub fn output_files(config: &ExperimentConfig) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = (0..config.replicates as u64)
        .flat_map(|rep| config.method_list().into_iter().map(move |m| PathBuf::from(trace_file_name(m, rep))))
        .collect();
    files.push("aggregate.csv".into());
    files.push("manifest.json".into());
    files
}
