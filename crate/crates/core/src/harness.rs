//! Trial execution and learning-efficiency metrics.
//!
//! A trial starts from freshly initialized global parameters and lets
//! `workers` threads activate agents until `n_max` submissions have arrived
//! (or, with early stopping, until the windowed average score reaches the
//! target). Scores are recorded in arrival order at the aggregator.
//!
//! Metrics, all over 1-based submission indices:
//!
//! - `μ_n = (1/m) Σ_{n'=n}^{n+m−1} ζ_{n'}` for `n ≤ N − m + 1`
//! - `FST = min{n : μ_n ≥ Θ}`, or ∞
//! - `success_ratio(n) = |{k : FST_k ≤ n}| / K`
//! - relative AUC: area under a success-ratio curve over the area of a baseline

use std::sync::Mutex;

use crate::agent::LocalAgent;
use crate::aggregator::Aggregator;
use crate::error::{Error, Result};
use crate::mechanism::MechanismConfig;
use crate::model::{LossConfig, ModelParams};
use crate::par::{map_indexed, Execution};
use crate::seed::{derive, stream_rng};

pub const DEFAULT_LEARNING_RATE: f64 = 0.5;
pub const DEFAULT_TARGET: f64 = 195.0;
pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_WORKERS: usize = 9;
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_MAX_SUBMISSIONS: u64 = 90_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub mechanism: MechanismConfig,
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub max_buf: usize,
    pub n_max: u64,
    pub target: f64,
    pub window: usize,
    pub workers: usize,
    /// Stop as soon as the target is met instead of running to `n_max`.
    pub early_stop: bool,
}

impl TrialConfig {
    pub fn new(mechanism: MechanismConfig, max_buf: usize) -> Self {
        Self {
            mechanism,
            loss: LossConfig::default(),
            learning_rate: DEFAULT_LEARNING_RATE,
            max_buf,
            n_max: DEFAULT_MAX_SUBMISSIONS,
            target: DEFAULT_TARGET,
            window: DEFAULT_WINDOW,
            workers: DEFAULT_WORKERS,
            early_stop: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mechanism.validate()?;
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("at least one worker is required".into()));
        }
        if self.max_buf == 0 {
            return Err(Error::InvalidConfig("buffer size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub seed: u64,
    /// ζ_1..ζ_N in arrival order.
    pub scores: Vec<u32>,
    /// μ_1..μ_{N−m+1}.
    pub mu: Vec<f64>,
    /// `None` stands for ∞.
    pub fst: Option<u64>,
    pub success: bool,
    pub stopped_early: bool,
    /// Parameters or gradients became non-finite; the trial ended there.
    pub diverged: bool,
    pub updates: u64,
}

/// `μ_n` for a 1-based `n`.
pub fn average_score(scores: &[u32], n: usize, window: usize) -> Result<f64> {
    if n == 0 || window == 0 || n + window - 1 > scores.len() {
        return Err(Error::Usage(format!(
            "window [{n}, {}] outside 1..={}",
            n + window.max(1) - 1,
            scores.len()
        )));
    }
    let slice = &scores[n - 1..n - 1 + window];
    Ok(slice.iter().map(|&s| f64::from(s)).sum::<f64>() / window as f64)
}

/// Every defined `μ_n`, in order.
pub fn moving_averages(scores: &[u32], window: usize) -> Vec<f64> {
    if window == 0 || scores.len() < window {
        return Vec::new();
    }
    (1..=scores.len() - window + 1)
        .map(|n| average_score(scores, n, window).expect("index in range"))
        .collect()
}

/// First 1-based index with `μ_n ≥ target`.
pub fn first_success_time(mu: &[f64], target: f64) -> Option<u64> {
    mu.iter().position(|&m| m >= target).map(|i| i as u64 + 1)
}

pub fn success_ratio(fsts: &[Option<u64>], n: u64) -> f64 {
    if fsts.is_empty() {
        return 0.0;
    }
    fsts.iter().filter(|f| matches!(f, Some(k) if *k <= n)).count() as f64 / fsts.len() as f64
}

/// Median with ∞ sorting last; `None` when the median itself is ∞.
pub fn median_fst(fsts: &[Option<u64>]) -> Option<f64> {
    if fsts.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = fsts.iter().map(|f| f.map_or(f64::INFINITY, |k| k as f64)).collect();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / 2.0 };
    median.is_finite().then_some(median)
}

/// A right-continuous step function on `[start, end)`: `values[i]` holds on
/// `[grid[i], grid[i+1])`, the last value up to `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessCurve {
    pub grid: Vec<u64>,
    pub values: Vec<f64>,
    pub end: u64,
}

impl SuccessCurve {
    pub fn new(grid: Vec<u64>, values: Vec<f64>, end: u64) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::InvalidInput("curve needs matching, non-empty grid and values".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) || *grid.last().unwrap() >= end {
            return Err(Error::InvalidInput("curve grid must be increasing and below its end".into()));
        }
        Ok(Self { grid, values, end })
    }

    /// Success ratio over submissions `1..=n_max`, with breakpoints at the
    /// distinct finite FSTs.
    pub fn from_fsts(fsts: &[Option<u64>], n_max: u64) -> Self {
        let mut grid = vec![1];
        let mut finite: Vec<u64> = fsts.iter().flatten().copied().filter(|&k| k > 1 && k <= n_max).collect();
        finite.sort_unstable();
        finite.dedup();
        grid.extend(finite);
        let values = grid.iter().map(|&n| success_ratio(fsts, n)).collect();
        Self { grid, values, end: n_max.max(1) + 1 }
    }

    pub fn value_at(&self, n: u64) -> f64 {
        match self.grid.partition_point(|&g| g <= n) {
            0 => 0.0,
            i => self.values[i - 1],
        }
    }

    pub fn area(&self) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (&g, &v))| {
                let next = self.grid.get(i + 1).copied().unwrap_or(self.end);
                v * (next - g) as f64
            })
            .sum()
    }
}

/// Step-function area of `curve` over that of `baseline`.
pub fn relative_auc(curve: &SuccessCurve, baseline: &SuccessCurve) -> Result<f64> {
    if curve.grid[0] != baseline.grid[0] || curve.end != baseline.end {
        return Err(Error::InvalidInput("curves cover different submission ranges".into()));
    }
    let base = baseline.area();
    if base == 0.0 {
        return Err(Error::ZeroBaselineArea);
    }
    Ok(curve.area() / base)
}

struct Shared {
    aggregator: Aggregator,
    scores: Vec<u32>,
    next_agent: u64,
    fst: Option<u64>,
    done: bool,
    diverged: bool,
    error: Option<Error>,
}

impl Shared {
    fn record(&mut self, score: u32, cfg: &TrialConfig) {
        self.scores.push(score);
        let k = self.scores.len();
        if self.fst.is_none() && k >= cfg.window {
            let n = k - cfg.window + 1;
            let mu = average_score(&self.scores, n, cfg.window).expect("window in range");
            if mu >= cfg.target {
                self.fst = Some(n as u64);
                if cfg.early_stop {
                    self.done = true;
                }
            }
        }
        if k as u64 >= cfg.n_max {
            self.done = true;
        }
    }
}

fn worker_loop(cfg: &TrialConfig, seed: u64, worker: usize, shared: &Mutex<Shared>) {
    let mut rng = stream_rng(seed, worker as u64 + 1);
    let mut agent: Option<LocalAgent> = None;
    loop {
        let (snapshot, n, id) = {
            let mut s = shared.lock().expect("trial state poisoned");
            if s.done {
                return;
            }
            let id = match &agent {
                Some(a) if a.can_submit(&cfg.mechanism) => None,
                _ => {
                    s.next_agent += 1;
                    Some(s.next_agent - 1)
                }
            };
            let (params, n) = s.aggregator.snapshot();
            (params, n, id)
        };
        if let Some(id) = id {
            agent = Some(LocalAgent::spawn(id, &cfg.mechanism, &mut rng));
        }
        let local = agent.as_mut().expect("agent assigned");
        let result = local.activate(snapshot, n, &cfg.mechanism, &cfg.loss, &mut rng);

        let mut s = shared.lock().expect("trial state poisoned");
        if s.done {
            return;
        }
        match result.and_then(|sub| s.aggregator.receive(&sub).map(|_| sub.score)) {
            Ok(score) => s.record(score, cfg),
            Err(Error::Diverged(_)) => {
                s.diverged = true;
                s.done = true;
            }
            Err(e) => {
                s.error.get_or_insert(e);
                s.done = true;
            }
        }
    }
}

/// Runs one trial. With `workers == 1` the result is a deterministic
/// function of `(cfg, seed)`.
pub fn run_trial(cfg: &TrialConfig, seed: u64) -> Result<TrialMetrics> {
    cfg.validate()?;
    let params = ModelParams::init(&mut stream_rng(seed, 0));
    let shared = Mutex::new(Shared {
        aggregator: Aggregator::new(params, cfg.learning_rate, cfg.max_buf)?,
        scores: Vec::with_capacity(cfg.n_max.min(1 << 20) as usize),
        next_agent: 0,
        fst: None,
        done: cfg.n_max == 0,
        diverged: false,
        error: None,
    });

    if cfg.workers == 1 {
        worker_loop(cfg, seed, 0, &shared);
    } else {
        std::thread::scope(|scope| {
            for w in 0..cfg.workers {
                let shared = &shared;
                scope.spawn(move || worker_loop(cfg, seed, w, shared));
            }
        });
    }

    let s = shared.into_inner().expect("trial state poisoned");
    if let Some(e) = s.error {
        return Err(e);
    }
    let mu = moving_averages(&s.scores, cfg.window);
    debug_assert_eq!(s.fst, first_success_time(&mu, cfg.target));
    let stopped_early = !s.diverged && (s.scores.len() as u64) < cfg.n_max;
    Ok(TrialMetrics {
        seed,
        scores: s.scores,
        mu,
        fst: s.fst,
        success: s.fst.is_some(),
        stopped_early,
        diverged: s.diverged,
        updates: s.aggregator.updates(),
    })
}

/// Seed of trial `k` under `base_seed`.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    derive(base_seed, trial as u64)
}

/// Runs `trials` independent trials, in parallel when `exec` allows it.
pub fn run_trials(cfg: &TrialConfig, base_seed: u64, trials: usize, exec: Execution) -> Result<Vec<TrialMetrics>> {
    map_indexed(trials, exec, |k| run_trial(cfg, trial_seed(base_seed, k))).into_iter().collect()
}
