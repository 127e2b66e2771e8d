//! Finite-difference oracle for the loss gradient.
//!
//! Re-implements the network forward pass independently and
//! differentiates a surrogate in which the advantages and value targets are
//! frozen at the base parameters, matching the stop-gradient convention.

use pgc_core::cartpole::{Action, CartPoleState};
use pgc_core::model::{loss_gradient, EpisodeHistory, LossConfig, ModelParams, PARAM_DIM};
use pgc_core::seed::stream_rng;
use rand::Rng;

struct Net<'a>(&'a [f64]);

impl Net<'_> {
    fn hidden(&self, s: &[f64; 4]) -> Vec<f64> {
        (0..16)
            .map(|j| (0..4).map(|k| self.0[4 * j + k] * s[k]).sum::<f64>().max(0.0))
            .collect()
    }

    fn log_probs_and_value(&self, s: &[f64; 4]) -> ([f64; 2], f64) {
        let h = self.hidden(s);
        let l0: f64 = (0..16).map(|j| self.0[64 + j] * h[j]).sum();
        let l1: f64 = (0..16).map(|j| self.0[80 + j] * h[j]).sum();
        let v: f64 = (0..16).map(|j| self.0[96 + j] * h[j]).sum();
        let z = (l0.exp() + l1.exp()).ln();
        ([l0 - z, l1 - z], v)
    }
}

fn frozen_targets(theta: &[f64], hist: &EpisodeHistory, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let net = Net(theta);
    let t_len = hist.states.len();
    let v_terminal = net.log_probs_and_value(&hist.terminal_state.to_array()).1;
    let mut targets = Vec::with_capacity(t_len);
    let mut advantages = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut ret = 0.0;
        for j in t..t_len {
            ret += gamma.powi((j - t) as i32) * hist.rewards[j];
        }
        ret += gamma.powi((t_len - t) as i32) * v_terminal;
        let v = net.log_probs_and_value(&hist.states[t].to_array()).1;
        targets.push(ret);
        advantages.push(ret - v);
    }
    (targets, advantages)
}

fn surrogate(theta: &[f64], hist: &EpisodeHistory, cfg: &LossConfig, targets: &[f64], adv: &[f64]) -> f64 {
    let net = Net(theta);
    let mut loss = 0.0;
    for t in 0..hist.states.len() {
        let (lp, v) = net.log_probs_and_value(&hist.states[t].to_array());
        let a = match hist.actions[t] {
            Action::PushLeft => 0,
            Action::PushRight => 1,
        };
        let entropy = -(lp[0].exp() * lp[0] + lp[1].exp() * lp[1]);
        loss += -lp[a] * adv[t] - cfg.entropy_scale * entropy + cfg.value_scale * (targets[t] - v).powi(2);
    }
    loss
}

fn random_case(seed: u64, len: usize) -> (ModelParams, EpisodeHistory) {
    let mut rng = stream_rng(seed, 0);
    let params = ModelParams::init(&mut rng);
    let mut state = || CartPoleState::from_array([0; 4].map(|_| rng.random_range(-1.0..1.0)));
    let states: Vec<_> = (0..len).map(|_| state()).collect();
    let terminal_state = state();
    let mut rng = stream_rng(seed, 1);
    let hist = EpisodeHistory {
        states,
        actions: (0..len).map(|_| Action::from_index(rng.random_range(0..2))).collect(),
        rewards: (0..len).map(|t| if t + 1 == len { 0.0 } else { 1.0 }).collect(),
        terminal_state,
    };
    (params, hist)
}

/// Max absolute deviation over the largest finite-difference component.
pub fn max_relative_error(seed: u64, len: usize) -> f64 {
    let cfg = LossConfig::default();
    let (params, hist) = random_case(seed, len);
    let analytic = loss_gradient(&params, &hist, &cfg).unwrap();
    let theta = params.to_flat();
    let (targets, adv) = frozen_targets(&theta, &hist, cfg.gamma);
    let h = 1e-5;
    let numeric: Vec<f64> = (0..PARAM_DIM)
        .map(|i| {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            (surrogate(&up, &hist, &cfg, &targets, &adv) - surrogate(&down, &hist, &cfg, &targets, &adv)) / (2.0 * h)
        })
        .collect();
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic.iter().zip(&numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale
}
