//! Gradient randomizers satisfying ε-local differential privacy.
//!
//! Two mechanisms are provided:
//!
//! - **Laplace**: clip the gradient to an L1 ball of radius `C/2` (so any two
//!   clipped gradients are within L1 distance `C`) and add i.i.d. Laplace
//!   noise of scale `C/ε` to every coordinate.
//! - **Projected random sign (PRS)**: project the gradient to `d̂` dimensions
//!   with a sparse random matrix `M`, clamp each coordinate to `[-C, C]`,
//!   randomize each coordinate to `±C` spending `ε/d̂` per coordinate, and map
//!   back with `Mᵀ`.
//!
//! All functions are pure in (input, config, rng); callers own their RNG.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack tolerated when comparing accumulated budget against the total.
pub const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Laplace,
    Prs,
    /// Raw gradients, no privacy (ε = ∞).
    None,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Laplace => "laplace",
            MechanismKind::Prs => "prs",
            MechanismKind::None => "none",
        }
    }

    /// Clip size used when none is given explicitly.
    pub fn default_clip(self) -> f64 {
        match self {
            MechanismKind::Laplace => 0.01,
            MechanismKind::Prs | MechanismKind::None => 1.0,
        }
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "laplace" | "lap" => Ok(MechanismKind::Laplace),
            "prs" => Ok(MechanismKind::Prs),
            "none" => Ok(MechanismKind::None),
            other => Err(Error::Usage(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// Parameters of a gradient randomizer.
///
/// `epsilon` is the whole per-agent budget; an agent submitting `rounds`
/// times spends `epsilon / rounds` on each submission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    pub epsilon: f64,
    pub clip_size: f64,
    pub dim: usize,
    pub reduced_dim: usize,
    pub rounds: u32,
}

impl MechanismConfig {
    /// Builds and validates a configuration. When `reduced_dim` is `None` it
    /// is derived from the per-round budget as `max(1, min(d, ⌊ε/2.5⌋))`.
    pub fn new(
        kind: MechanismKind,
        epsilon: f64,
        clip_size: f64,
        dim: usize,
        rounds: u32,
        reduced_dim: Option<usize>,
    ) -> Result<Self> {
        let epsilon = if kind == MechanismKind::None { f64::INFINITY } else { epsilon };
        let rounds_f = f64::from(rounds.max(1));
        let reduced_dim = reduced_dim.unwrap_or_else(|| auto_reduced_dim(epsilon / rounds_f, dim));
        let cfg = Self { kind, epsilon, clip_size, dim, reduced_dim, rounds };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn laplace(epsilon: f64, clip_size: f64, dim: usize) -> Result<Self> {
        Self::new(MechanismKind::Laplace, epsilon, clip_size, dim, 1, None)
    }

    pub fn prs(epsilon: f64, clip_size: f64, dim: usize) -> Result<Self> {
        Self::new(MechanismKind::Prs, epsilon, clip_size, dim, 1, None)
    }

    pub fn none(dim: usize) -> Self {
        Self {
            kind: MechanismKind::None,
            epsilon: f64::INFINITY,
            clip_size: 1.0,
            dim,
            reduced_dim: dim,
            rounds: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.kind == MechanismKind::Prs && !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig("PRS requires a finite epsilon".into()));
        }
        if !(self.clip_size.is_finite() && self.clip_size > 0.0) {
            return Err(Error::InvalidConfig(format!("clip size must be positive, got {}", self.clip_size)));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        if self.reduced_dim == 0 || self.reduced_dim > self.dim {
            return Err(Error::InvalidConfig(format!(
                "reduced dimension must lie in [1, {}], got {}",
                self.dim, self.reduced_dim
            )));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        Ok(())
    }

    /// Budget consumed by one submission.
    pub fn epsilon_per_round(&self) -> f64 {
        self.epsilon / f64::from(self.rounds)
    }

    /// Budget consumed by each projected coordinate in PRS.
    pub fn epsilon_per_dim(&self) -> f64 {
        self.epsilon_per_round() / self.reduced_dim as f64
    }

    /// Laplace noise scale `C / ε` for one submission.
    pub fn laplace_scale(&self) -> f64 {
        self.clip_size / self.epsilon_per_round()
    }
}

/// `max(1, min(dim, ⌊eps/2.5⌋))`.
pub fn auto_reduced_dim(epsilon_per_round: f64, dim: usize) -> usize {
    if !epsilon_per_round.is_finite() {
        return dim.max(1);
    }
    let k = (epsilon_per_round / 2.5).floor();
    (k as usize).min(dim).max(1)
}

/// A randomized gradient ready for submission.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyGradient {
    pub values: Vec<f64>,
    pub kind: MechanismKind,
    /// Budget consumed producing this gradient (∞ for the raw baseline).
    pub epsilon_spent: f64,
}

pub fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!("non-finite entry {} at index {i}", values[i]))),
        None => Ok(()),
    }
}

pub fn l1_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).sum()
}

/// Scales `g` into the L1 ball of radius `C/2`: `g / max(1, ‖g‖₁ / (C/2))`.
pub fn clip_l1(g: &[f64], clip_size: f64) -> Result<Vec<f64>> {
    check_finite(g)?;
    if !(clip_size > 0.0 && clip_size.is_finite()) {
        return Err(Error::InvalidInput(format!("clip size must be positive, got {clip_size}")));
    }
    let divisor = (l1_norm(g) / (clip_size / 2.0)).max(1.0);
    if divisor == 1.0 {
        return Ok(g.to_vec());
    }
    Ok(g.iter().map(|v| v / divisor).collect())
}

/// One Laplace(0, scale) draw by inverse CDF from an open-interval uniform.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let p: f64 = rng.sample(Open01);
    if p < 0.5 {
        scale * (2.0 * p).ln()
    } else {
        -scale * (2.0 * (1.0 - p)).ln()
    }
}

/// Log-density of `y` under i.i.d. Laplace noise of `scale` centred on `center`.
pub fn laplace_log_density(y: &[f64], center: &[f64], scale: f64) -> f64 {
    let n = y.len() as f64;
    let dist: f64 = y.iter().zip(center).map(|(a, b)| (a - b).abs()).sum();
    -n * (2.0 * scale).ln() - dist / scale
}

/// Clipped gradient plus independent Laplace noise of scale `C/ε` per coordinate.
pub fn laplace_perturb<R: Rng + ?Sized>(g: &[f64], cfg: &MechanismConfig, rng: &mut R) -> Result<Vec<f64>> {
    check_dim(g, cfg)?;
    let mut out = clip_l1(g, cfg.clip_size)?;
    let scale = cfg.laplace_scale();
    if scale == 0.0 {
        return Ok(out);
    }
    for v in &mut out {
        *v += sample_laplace(scale, rng);
    }
    Ok(out)
}

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Dense `reduced_dim × dim` matrix with i.i.d. entries in `{−√3, 0, +√3}`
/// drawn with probabilities `1/6, 2/3, 1/6`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn sample<R: Rng + ?Sized>(reduced_dim: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if reduced_dim == 0 || reduced_dim > dim {
            return Err(Error::InvalidInput(format!(
                "reduced dimension {reduced_dim} outside [1, {dim}]"
            )));
        }
        let entries = (0..reduced_dim * dim)
            .map(|_| match rng.random_range(0..6u8) {
                0 => -SQRT_3,
                5 => SQRT_3,
                _ => 0.0,
            })
            .collect();
        Ok(Self { rows: reduced_dim, cols: dim, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// `M · g`
    pub fn project(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.cols, "projection input has wrong length");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(g).map(|(m, x)| m * x).sum())
            .collect()
    }

    /// `Mᵀ · u`
    pub fn back_project(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.rows, "back-projection input has wrong length");
        let mut out = vec![0.0; self.cols];
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.row(i)) {
                *o += m * ui;
            }
        }
        out
    }
}

/// Clamps every coordinate into `[-C, C]`.
pub fn clip_elementwise(u: &[f64], clip_size: f64) -> Vec<f64> {
    u.iter().map(|v| v.clamp(-clip_size, clip_size)).collect()
}

/// Probability that a coordinate holding `u_bar ∈ [-C, C]` is reported as `+C`:
/// `1/(e^ε+1) + ((ū+C)/2C)·(e^ε−1)/(e^ε+1)`.
pub fn flip_probability(u_bar: f64, clip_size: f64, eps: f64) -> Result<f64> {
    if !(u_bar.abs() <= clip_size) {
        return Err(Error::InvalidInput(format!(
            "bit flip input {u_bar} outside [-{clip_size}, {clip_size}]; clip first"
        )));
    }
    let e = eps.exp();
    Ok(1.0 / (e + 1.0) + (u_bar + clip_size) / (2.0 * clip_size) * (e - 1.0) / (e + 1.0))
}

/// Randomizes each clipped coordinate to `±C` spending `eps` per coordinate.
pub fn bit_flip<R: Rng + ?Sized>(u_bar: &[f64], clip_size: f64, eps: f64, rng: &mut R) -> Result<Vec<f64>> {
    let probs = u_bar
        .iter()
        .map(|&u| flip_probability(u, clip_size, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(probs
        .into_iter()
        .map(|p| if rng.random::<f64>() < p { clip_size } else { -clip_size })
        .collect())
}

/// Intermediate and final values of one PRS randomization.
#[derive(Debug, Clone, PartialEq)]
pub struct PrsOutput {
    /// Clamped projection `ū`.
    pub clipped: Vec<f64>,
    /// Randomized signs `ũ ∈ {−C, +C}^d̂`.
    pub signs: Vec<f64>,
    /// Submitted vector `Mᵀ ũ`.
    pub gradient: Vec<f64>,
}

/// PRS against a caller-supplied projection matrix.
pub fn prs_with_matrix<R: Rng + ?Sized>(
    g: &[f64],
    matrix: &ProjectionMatrix,
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<PrsOutput> {
    check_dim(g, cfg)?;
    check_finite(g)?;
    if matrix.rows() != cfg.reduced_dim || matrix.cols() != cfg.dim {
        return Err(Error::InvalidInput(format!(
            "projection matrix is {}x{}, expected {}x{}",
            matrix.rows(),
            matrix.cols(),
            cfg.reduced_dim,
            cfg.dim
        )));
    }
    let clipped = clip_elementwise(&matrix.project(g), cfg.clip_size);
    let signs = bit_flip(&clipped, cfg.clip_size, cfg.epsilon_per_dim(), rng)?;
    let gradient = matrix.back_project(&signs);
    Ok(PrsOutput { clipped, signs, gradient })
}

/// Projected random sign mechanism with a freshly sampled matrix.
pub fn prs_perturb<R: Rng + ?Sized>(g: &[f64], cfg: &MechanismConfig, rng: &mut R) -> Result<Vec<f64>> {
    check_dim(g, cfg)?;
    let matrix = ProjectionMatrix::sample(cfg.reduced_dim, cfg.dim, rng)?;
    Ok(prs_with_matrix(g, &matrix, cfg, rng)?.gradient)
}

/// Applies the configured mechanism for one submission.
pub fn perturb<R: Rng + ?Sized>(g: &[f64], cfg: &MechanismConfig, rng: &mut R) -> Result<NoisyGradient> {
    let values = match cfg.kind {
        MechanismKind::Laplace => laplace_perturb(g, cfg, rng)?,
        MechanismKind::Prs => prs_perturb(g, cfg, rng)?,
        MechanismKind::None => {
            check_dim(g, cfg)?;
            check_finite(g)?;
            g.to_vec()
        }
    };
    Ok(NoisyGradient { values, kind: cfg.kind, epsilon_spent: cfg.epsilon_per_round() })
}

fn check_dim(g: &[f64], cfg: &MechanismConfig) -> Result<()> {
    if g.len() != cfg.dim {
        return Err(Error::InvalidInput(format!("gradient has length {}, expected {}", g.len(), cfg.dim)));
    }
    Ok(())
}

/// Per-agent record of consumed privacy budget under sequential composition.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    pub agent_id: u64,
    pub total_epsilon: f64,
    pub spent: f64,
    pub submissions: u32,
}

impl BudgetLedger {
    pub fn new(agent_id: u64, total_epsilon: f64) -> Self {
        Self { agent_id, total_epsilon, spent: 0.0, submissions: 0 }
    }

    /// Whether a further spend of `amount` stays within the total.
    pub fn can_spend(&self, amount: f64) -> bool {
        amount > 0.0 && self.spent + amount <= self.total_epsilon + BUDGET_SLACK
    }

    pub fn spend(&mut self, amount: f64) -> Result<()> {
        if !(amount > 0.0) {
            return Err(Error::InvalidInput(format!("spend amount must be positive, got {amount}")));
        }
        if !self.can_spend(amount) {
            return Err(Error::BudgetExhausted {
                spent: self.spent,
                total: self.total_epsilon,
                requested: amount,
            });
        }
        self.spent += amount;
        self.submissions += 1;
        Ok(())
    }

    pub fn remaining(&self) -> f64 {
        (self.total_epsilon - self.spent).max(0.0)
    }
}
