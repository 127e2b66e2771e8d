//! Two-head actor-critic network and its empirical A3C loss.
//!
//! The network has no biases:
//!
//! ```text
//! h = ReLU(W_c · s)          W_c: 16 × 4
//! π = softmax(W_p · h)       W_p:  2 × 16
//! V = W_v · h                W_v:  1 × 16
//! ```
//!
//! giving 112 parameters, flattened as `W_c` row-major, then `W_p`, then `W_v`.

use rand::Rng;

use crate::cartpole::{Action, CartPoleState};
use crate::error::{Error, Result};

pub const STATE_DIM: usize = 4;
pub const HIDDEN: usize = 16;
pub const ACTIONS: usize = 2;

const SHARED_LEN: usize = HIDDEN * STATE_DIM;
const POLICY_LEN: usize = ACTIONS * HIDDEN;
const POLICY_OFFSET: usize = SHARED_LEN;
const VALUE_OFFSET: usize = SHARED_LEN + POLICY_LEN;

/// Length of the flat parameter (and gradient) vector.
pub const PARAM_DIM: usize = SHARED_LEN + POLICY_LEN + HIDDEN;

#[derive(Clone, PartialEq)]
pub struct ModelParams {
    weights: [f64; PARAM_DIM],
}

impl std::fmt::Debug for ModelParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelParams").field("l1", &self.weights.iter().map(|w| w.abs()).sum::<f64>()).finish()
    }
}

impl ModelParams {
    pub fn zeros() -> Self {
        Self { weights: [0.0; PARAM_DIM] }
    }

    /// Each block uniform on `[-1/√fan_in, 1/√fan_in]`.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut weights = [0.0; PARAM_DIM];
        let shared_bound = 1.0 / (STATE_DIM as f64).sqrt();
        let head_bound = 1.0 / (HIDDEN as f64).sqrt();
        for (i, w) in weights.iter_mut().enumerate() {
            let bound = if i < SHARED_LEN { shared_bound } else { head_bound };
            *w = rng.random_range(-bound..=bound);
        }
        Self { weights }
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        let weights: [f64; PARAM_DIM] = values
            .try_into()
            .map_err(|_| Error::InvalidInput(format!("expected {PARAM_DIM} parameters, got {}", values.len())))?;
        Ok(Self { weights })
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.weights.to_vec()
    }

    pub fn shared(&self, row: usize, col: usize) -> f64 {
        self.weights[row * STATE_DIM + col]
    }

    pub fn policy(&self, action: usize, unit: usize) -> f64 {
        self.weights[POLICY_OFFSET + action * HIDDEN + unit]
    }

    pub fn value(&self, unit: usize) -> f64 {
        self.weights[VALUE_OFFSET + unit]
    }

    pub fn shared_block_mut(&mut self) -> &mut [f64] {
        &mut self.weights[..SHARED_LEN]
    }

    pub fn policy_block_mut(&mut self) -> &mut [f64] {
        &mut self.weights[POLICY_OFFSET..VALUE_OFFSET]
    }

    pub fn value_block_mut(&mut self) -> &mut [f64] {
        &mut self.weights[VALUE_OFFSET..]
    }

    /// `θ ← θ − step · direction`
    pub fn descend(&mut self, direction: &[f64], step: f64) {
        assert_eq!(direction.len(), PARAM_DIM);
        for (w, d) in self.weights.iter_mut().zip(direction) {
            *w -= step * d;
        }
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub input: [f64; STATE_DIM],
    pub pre_activation: [f64; HIDDEN],
    pub hidden: [f64; HIDDEN],
    pub log_policy: [f64; ACTIONS],
    pub policy: [f64; ACTIONS],
    pub value: f64,
}

impl Forward {
    pub fn entropy(&self) -> f64 {
        -self.policy.iter().zip(&self.log_policy).map(|(p, lp)| p * lp).sum::<f64>()
    }

    /// Most probable action; ties go to [`Action::PushLeft`].
    pub fn greedy_action(&self) -> Action {
        if self.policy[1] > self.policy[0] {
            Action::PushRight
        } else {
            Action::PushLeft
        }
    }
}

pub fn forward(params: &ModelParams, state: &CartPoleState) -> Forward {
    let input = state.to_array();
    let mut pre_activation = [0.0; HIDDEN];
    let mut hidden = [0.0; HIDDEN];
    for j in 0..HIDDEN {
        let z: f64 = (0..STATE_DIM).map(|k| params.shared(j, k) * input[k]).sum();
        pre_activation[j] = z;
        hidden[j] = z.max(0.0);
    }
    let mut logits = [0.0; ACTIONS];
    for (a, l) in logits.iter_mut().enumerate() {
        *l = (0..HIDDEN).map(|j| params.policy(a, j) * hidden[j]).sum();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let log_policy = logits.map(|l| l - log_norm);
    let policy = log_policy.map(f64::exp);
    let value = (0..HIDDEN).map(|j| params.value(j) * hidden[j]).sum();
    Forward { input, pre_activation, hidden, log_policy, policy, value }
}

/// Exploration rate after `n` submissions: `max(0, 0.5 − n/1800)`.
pub fn exploration_rate(n: u64) -> f64 {
    (0.5 - n as f64 / 1800.0).max(0.0)
}

/// ε-greedy over the policy's argmax.
pub fn select_action<R: Rng + ?Sized>(params: &ModelParams, state: &CartPoleState, alpha: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < alpha {
        Action::from_index(rng.random_range(0..ACTIONS))
    } else {
        forward(params, state).greedy_action()
    }
}

/// One rollout collected under a fixed parameter snapshot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeHistory {
    pub states: Vec<CartPoleState>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub terminal_state: CartPoleState,
}

impl EpisodeHistory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Usage("loss of an empty episode".into()));
        }
        if self.states.len() != self.actions.len() || self.rewards.len() != self.actions.len() {
            return Err(Error::InvalidInput(format!(
                "episode has {} states, {} actions, {} rewards",
                self.states.len(),
                self.actions.len(),
                self.rewards.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    /// λ, weight of the value loss.
    pub value_scale: f64,
    /// β, weight of the entropy bonus.
    pub entropy_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { gamma: 0.99, value_scale: 0.5, entropy_scale: 0.01 }
    }
}

struct Evaluated {
    passes: Vec<Forward>,
    /// `V̂(s_t) = Σ_{j≥t} γ^{j−t} r_j + γ^{T−t} V(s_T)`
    targets: Vec<f64>,
}

fn evaluate(params: &ModelParams, hist: &EpisodeHistory, gamma: f64) -> Result<Evaluated> {
    hist.validate()?;
    let passes: Vec<Forward> = hist.states.iter().map(|s| forward(params, s)).collect();
    let mut running = forward(params, &hist.terminal_state).value;
    let mut targets = vec![0.0; hist.len()];
    for t in (0..hist.len()).rev() {
        running = hist.rewards[t] + gamma * running;
        targets[t] = running;
    }
    Ok(Evaluated { passes, targets })
}

/// Components of the empirical loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// `−Σ log π(a_t|s_t) A(s_t)`
    pub policy: f64,
    /// `Σ H(π(·|s_t))`
    pub entropy: f64,
    /// `Σ (V̂(s_t) − V(s_t))²`
    pub value: f64,
    /// `policy − β·entropy + λ·value`
    pub total: f64,
}

pub fn loss_breakdown(params: &ModelParams, hist: &EpisodeHistory, cfg: &LossConfig) -> Result<LossBreakdown> {
    let ev = evaluate(params, hist, cfg.gamma)?;
    let mut policy = 0.0;
    let mut entropy = 0.0;
    let mut value = 0.0;
    for ((f, &target), action) in ev.passes.iter().zip(&ev.targets).zip(&hist.actions) {
        let advantage = target - f.value;
        policy -= f.log_policy[action.index()] * advantage;
        entropy += f.entropy();
        value += advantage * advantage;
    }
    let total = policy - cfg.entropy_scale * entropy + cfg.value_scale * value;
    Ok(LossBreakdown { policy, entropy, value, total })
}

pub fn empirical_loss(params: &ModelParams, hist: &EpisodeHistory, cfg: &LossConfig) -> Result<f64> {
    Ok(loss_breakdown(params, hist, cfg)?.total)
}

/// Gradient of [`empirical_loss`] with advantages and value targets held
/// constant; only `V(s_t)` inside the squared value error is differentiated.
pub fn loss_gradient(params: &ModelParams, hist: &EpisodeHistory, cfg: &LossConfig) -> Result<Vec<f64>> {
    let ev = evaluate(params, hist, cfg.gamma)?;
    let mut grad = vec![0.0; PARAM_DIM];
    let (shared_grad, rest) = grad.split_at_mut(SHARED_LEN);
    let (policy_grad, value_grad) = rest.split_at_mut(POLICY_LEN);

    for ((f, &target), action) in ev.passes.iter().zip(&ev.targets).zip(&hist.actions) {
        let advantage = target - f.value;
        let entropy = f.entropy();

        // d/dlogit_k of −A·log π_a − β·H
        let mut d_logits = [0.0; ACTIONS];
        for (k, d) in d_logits.iter_mut().enumerate() {
            let onehot = if k == action.index() { 1.0 } else { 0.0 };
            *d = advantage * (f.policy[k] - onehot)
                + cfg.entropy_scale * f.policy[k] * (f.log_policy[k] + entropy);
        }
        // d/dV of λ·(V̂ − V)²
        let d_value = -2.0 * cfg.value_scale * advantage;

        let mut d_hidden = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            for (k, dl) in d_logits.iter().enumerate() {
                policy_grad[k * HIDDEN + j] += dl * f.hidden[j];
                d_hidden[j] += dl * params.policy(k, j);
            }
            value_grad[j] += d_value * f.hidden[j];
            d_hidden[j] += d_value * params.value(j);
        }
        for j in 0..HIDDEN {
            if f.pre_activation[j] <= 0.0 {
                continue;
            }
            for k in 0..STATE_DIM {
                shared_grad[j * STATE_DIM + k] += d_hidden[j] * f.input[k];
            }
        }
    }
    Ok(grad)
}
