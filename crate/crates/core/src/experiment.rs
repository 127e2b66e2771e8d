//! Experiment matrices from the command line and their result files.
//!
//! An [`ExperimentSpec`] expands into cells, one per (mechanism, ε, buffer)
//! combination; the `none` mechanism ignores ε and contributes one cell per
//! buffer size. Each cell runs `trials` independent trials from its own
//! derived seed.
//!
//! Output files, all written to the output directory:
//!
//! - `submissions.csv`: `mechanism,epsilon,buffer,trial,n,score,mu`, one row
//!   per received submission; `mu` is empty where the window runs past the
//!   last submission.
//! - `summary.json`: version, configuration echo and, per cell, seeds, FSTs,
//!   median FST, success ratio and relative AUC against the `none` cell.
//! - `success_curve.csv`: `mechanism,epsilon,buffer,n,success_ratio` at every
//!   point where a cell's curve changes, plus `n = 1` and `n = max`.
//!
//! Floats are written in shortest round-trip form; ε = ∞ is written `inf`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::{
    median_fst, relative_auc, run_trials, trial_seed, SuccessCurve, TrialConfig, TrialMetrics, DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_SUBMISSIONS, DEFAULT_TARGET, DEFAULT_TRIALS, DEFAULT_WINDOW, DEFAULT_WORKERS,
};
use crate::mechanism::{MechanismConfig, MechanismKind};
use crate::model::{LossConfig, PARAM_DIM};
use crate::par::{map_indexed, Execution};
use crate::seed::derive;

pub const SUBMISSIONS_FILE: &str = "submissions.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVE_FILE: &str = "success_curve.csv";

pub const SUBMISSIONS_HEADER: &str = "mechanism,epsilon,buffer,trial,n,score,mu";
pub const CURVE_HEADER: &str = "mechanism,epsilon,buffer,n,success_ratio";

/// Run a matrix of private actor-critic trials on cart-pole and write the results.
#[derive(Debug, Parser)]
#[command(name = "pgc", version)]
struct Args {
    /// Mechanisms to run: laplace, prs, none.
    #[arg(long, value_delimiter = ',', default_value = "laplace,prs,none", value_parser = parse_mechanism)]
    mechanism: Vec<MechanismKind>,

    /// Per-agent privacy budgets.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10", value_parser = parse_epsilon)]
    epsilon: Vec<f64>,

    /// Aggregator buffer sizes.
    #[arg(long, value_delimiter = ',', default_value = "1", value_parser = parse_buffer)]
    buffer: Vec<usize>,

    /// Trials per cell.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,

    /// Submission cap per trial.
    #[arg(long, default_value_t = DEFAULT_MAX_SUBMISSIONS)]
    max_submissions: u64,

    /// Concurrent agent threads per trial.
    #[arg(long, default_value_t = DEFAULT_WORKERS, value_parser = parse_count)]
    workers: usize,

    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Clip size; defaults to 0.01 for laplace and 1 for prs.
    #[arg(long, value_parser = parse_positive)]
    clip: Option<f64>,

    /// Projected dimension for prs; derived from ε when omitted.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    reduced_dim: Option<u32>,

    /// Submissions per agent; each spends ε/rounds.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    rounds: u32,

    /// Target average score.
    #[arg(long, default_value_t = DEFAULT_TARGET)]
    target: f64,

    /// Window of the average score.
    #[arg(long, default_value_t = DEFAULT_WINDOW, value_parser = parse_count)]
    window: usize,

    /// Keep running to the cap after reaching the target.
    #[arg(long)]
    no_early_stop: bool,

    /// Run cells and trials one after another.
    #[arg(long)]
    sequential: bool,

    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn parse_mechanism(s: &str) -> std::result::Result<MechanismKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {s}"))
    }
}

fn parse_epsilon(s: &str) -> std::result::Result<f64, String> {
    parse_positive(s).map_err(|e| format!("epsilon {e}"))
}

fn parse_buffer(s: &str) -> std::result::Result<usize, String> {
    parse_count(s).map_err(|e| format!("buffer {e}"))
}

fn parse_count(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("must be an integer of at least 1, got {s}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mechanisms: Vec<MechanismKind>,
    pub epsilons: Vec<f64>,
    pub buffers: Vec<usize>,
    pub trials: usize,
    pub n_max: u64,
    pub workers: usize,
    pub master_seed: u64,
    pub clip: Option<f64>,
    pub reduced_dim: Option<usize>,
    pub rounds: u32,
    pub target: f64,
    pub window: usize,
    pub early_stop: bool,
    pub execution: Execution,
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::parse_args(["pgc"]).expect("defaults parse")
    }
}

impl ExperimentSpec {
    /// Parses a full argument vector, program name first.
    pub fn parse_args<I, T>(argv: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        let a = Args::try_parse_from(argv)?;
        let mut mechanisms = Vec::new();
        for m in a.mechanism {
            if !mechanisms.contains(&m) {
                mechanisms.push(m);
            }
        }
        Ok(Self {
            mechanisms,
            epsilons: a.epsilon,
            buffers: a.buffer,
            trials: a.trials,
            n_max: a.max_submissions,
            workers: a.workers,
            master_seed: a.seed,
            clip: a.clip,
            reduced_dim: a.reduced_dim.map(|d| d as usize),
            rounds: a.rounds,
            target: a.target,
            window: a.window,
            early_stop: !a.no_early_stop,
            execution: if a.sequential { Execution::Sequential } else { Execution::Parallel },
            out: a.out,
        })
    }

    /// The run matrix in output order: mechanisms as given, then ε, then buffer.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::new();
        for &kind in &self.mechanisms {
            let epsilons: &[f64] = if kind == MechanismKind::None { &[f64::INFINITY] } else { &self.epsilons };
            for &epsilon in epsilons {
                for &buffer in &self.buffers {
                    let clip = self.clip.unwrap_or(kind.default_clip());
                    let reduced = if kind == MechanismKind::Prs { self.reduced_dim } else { None };
                    let mechanism = MechanismConfig::new(kind, epsilon, clip, PARAM_DIM, self.rounds, reduced)?;
                    let config = TrialConfig {
                        mechanism,
                        loss: LossConfig::default(),
                        learning_rate: DEFAULT_LEARNING_RATE,
                        max_buf: buffer,
                        n_max: self.n_max,
                        target: self.target,
                        window: self.window,
                        workers: self.workers,
                        early_stop: self.early_stop,
                    };
                    config.validate()?;
                    let seed = derive(self.master_seed, cells.len() as u64);
                    cells.push(Cell { kind, epsilon, buffer, seed, config });
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::Usage("the experiment matrix is empty".into()));
        }
        Ok(cells)
    }

    fn config_echo(&self) -> Value {
        let loss = LossConfig::default();
        json!({
            "mechanisms": self.mechanisms.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "epsilons": self.epsilons,
            "buffers": self.buffers,
            "trials": self.trials,
            "max_submissions": self.n_max,
            "workers": self.workers,
            "seed": self.master_seed,
            "clip": self.clip,
            "reduced_dim": self.reduced_dim,
            "rounds": self.rounds,
            "target": self.target,
            "window": self.window,
            "early_stop": self.early_stop,
            "learning_rate": DEFAULT_LEARNING_RATE,
            "gamma": loss.gamma,
            "value_scale": loss.value_scale,
            "entropy_scale": loss.entropy_scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub kind: MechanismKind,
    /// `f64::INFINITY` for the `none` mechanism.
    pub epsilon: f64,
    pub buffer: usize,
    pub seed: u64,
    pub config: TrialConfig,
}

impl Cell {
    pub fn trial_seeds(&self, trials: usize) -> Vec<u64> {
        (0..trials).map(|k| trial_seed(self.seed, k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub trials: Vec<TrialMetrics>,
}

impl CellResult {
    pub fn fsts(&self) -> Vec<Option<u64>> {
        self.trials.iter().map(|t| t.fst).collect()
    }

    pub fn curve(&self, n_max: u64) -> SuccessCurve {
        SuccessCurve::from_fsts(&self.fsts(), n_max)
    }
}

/// Runs every cell of `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    let cells = spec.cells()?;
    map_indexed(cells.len(), spec.execution, |i| {
        let cell = cells[i].clone();
        let trials = run_trials(&cell.config, cell.seed, spec.trials, spec.execution)?;
        Ok(CellResult { cell, trials })
    })
    .into_iter()
    .collect()
}

fn fmt_epsilon(eps: f64) -> String {
    if eps.is_infinite() {
        "inf".into()
    } else {
        format!("{eps}")
    }
}

fn epsilon_json(eps: f64) -> Value {
    if eps.is_infinite() {
        json!("inf")
    } else {
        json!(eps)
    }
}

/// `none` cell with the same buffer size, else the `none` cell with the smallest one.
fn baseline_for(results: &[CellResult], buffer: usize) -> Option<&CellResult> {
    let mut none: Vec<&CellResult> = results.iter().filter(|r| r.cell.kind == MechanismKind::None).collect();
    none.sort_by_key(|r| r.cell.buffer);
    none.iter().find(|r| r.cell.buffer == buffer).or_else(|| none.first()).copied()
}

fn write_submissions(path: &Path, results: &[CellResult]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SUBMISSIONS_HEADER}")?;
    for r in results {
        let eps = fmt_epsilon(r.cell.epsilon);
        for (k, t) in r.trials.iter().enumerate() {
            for (i, score) in t.scores.iter().enumerate() {
                write!(w, "{},{eps},{},{k},{},{score},", r.cell.kind, r.cell.buffer, i + 1)?;
                if let Some(mu) = t.mu.get(i) {
                    write!(w, "{mu}")?;
                }
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_curves(path: &Path, results: &[CellResult], n_max: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CURVE_HEADER}")?;
    for r in results {
        let eps = fmt_epsilon(r.cell.epsilon);
        let curve = r.curve(n_max);
        let mut points = curve.grid.clone();
        if n_max > *points.last().expect("curve grid is non-empty") {
            points.push(n_max);
        }
        for n in points {
            writeln!(w, "{},{eps},{},{n},{}", r.cell.kind, r.cell.buffer, curve.value_at(n))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The `summary.json` document.
pub fn summary(results: &[CellResult], spec: &ExperimentSpec) -> Value {
    let cells: Vec<Value> = results
        .iter()
        .map(|r| {
            let fsts = r.fsts();
            let curve = r.curve(spec.n_max);
            let rel_auc = baseline_for(results, r.cell.buffer)
                .and_then(|b| relative_auc(&curve, &b.curve(spec.n_max)).ok());
            let m = &r.cell.config.mechanism;
            json!({
                "mechanism": r.cell.kind.name(),
                "epsilon": epsilon_json(r.cell.epsilon),
                "buffer": r.cell.buffer,
                "clip": m.clip_size,
                "reduced_dim": m.reduced_dim,
                "rounds": m.rounds,
                "seed": r.cell.seed,
                "trial_seeds": r.trials.iter().map(|t| t.seed).collect::<Vec<_>>(),
                "fst": fsts,
                "median_fst": median_fst(&fsts),
                "success_ratio": crate::harness::success_ratio(&fsts, spec.n_max),
                "relative_auc": rel_auc,
                "submissions": r.trials.iter().map(|t| t.scores.len()).collect::<Vec<_>>(),
                "stopped_early": r.trials.iter().map(|t| t.stopped_early).collect::<Vec<_>>(),
                "diverged": r.trials.iter().map(|t| t.diverged).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "version": crate::VERSION,
        "config": spec.config_echo(),
        "cells": cells,
    })
}

/// Writes the three result files into `dir`. On failure, files already
/// created are removed.
pub fn emit_results(results: &[CellResult], spec: &ExperimentSpec, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let paths = [dir.join(SUBMISSIONS_FILE), dir.join(CURVE_FILE), dir.join(SUMMARY_FILE)];
    let written = write_submissions(&paths[0], results)
        .and_then(|_| write_curves(&paths[1], results, spec.n_max))
        .and_then(|_| {
            let mut text = serde_json::to_string_pretty(&summary(results, spec))?;
            text.push('\n');
            fs::write(&paths[2], text)?;
            Ok(())
        });
    if written.is_err() {
        for p in &paths {
            let _ = fs::remove_file(p);
        }
    }
    written
}
