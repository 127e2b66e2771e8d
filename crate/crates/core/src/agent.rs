//! One local agent: copy the global parameters, play an episode in the
//! private environment, randomize the loss gradient and hand it over.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cartpole::{CartPole, EnvConfig};
use crate::error::{Error, Result};
use crate::mechanism::{perturb, BudgetLedger, MechanismConfig};
use crate::model::{exploration_rate, loss_gradient, select_action, EpisodeHistory, LossConfig, ModelParams};

/// Everything an agent needs for one activation.
#[derive(Debug, Clone)]
pub struct AgentTask {
    pub agent_id: u64,
    /// Holds the private gravity; never leaves the agent.
    pub env_config: EnvConfig,
    pub mechanism: MechanismConfig,
    pub loss: LossConfig,
    pub alpha: f64,
    pub params_snapshot: ModelParams,
}

/// What reaches the aggregator. The noisy gradient is the only content
/// derived from the model; the score is treated as public.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub agent_id: u64,
    pub noisy_gradient: Vec<f64>,
    pub score: u32,
}

/// Rolls out one episode under the task's snapshot and exploration rate.
pub fn run_episode<R: Rng + ?Sized>(task: &AgentTask, rng: &mut R) -> Result<(EpisodeHistory, u32)> {
    let mut env = CartPole::new(task.env_config, rng);
    let mut hist = EpisodeHistory::default();
    let mut score = 0u32;
    loop {
        let state = env.state();
        let action = select_action(&task.params_snapshot, &state, task.alpha, rng);
        let outcome = env.step(action)?;
        hist.states.push(state);
        hist.actions.push(action);
        hist.rewards.push(outcome.reward);
        if outcome.reward > 0.0 {
            score += 1;
        }
        if outcome.is_terminal() {
            hist.terminal_state = outcome.state;
            return Ok((hist, score));
        }
    }
}

/// Computes the loss gradient against the snapshot, randomizes it and
/// charges the ledger. Nothing is produced once the budget is exhausted.
pub fn craft_submission<R: Rng + ?Sized>(
    task: &AgentTask,
    hist: &EpisodeHistory,
    score: u32,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<Submission> {
    let amount = task.mechanism.epsilon_per_round();
    if !ledger.can_spend(amount) {
        return Err(Error::BudgetExhausted { spent: ledger.spent, total: ledger.total_epsilon, requested: amount });
    }
    let gradient = loss_gradient(&task.params_snapshot, hist, &task.loss)?;
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged("loss gradient is not finite".into()));
    }
    let noisy = perturb(&gradient, &task.mechanism, rng)?;
    ledger.spend(amount)?;
    Ok(Submission { agent_id: task.agent_id, noisy_gradient: noisy.values, score })
}

/// A data owner with a private environment who may submit up to
/// `mechanism.rounds` times.
#[derive(Debug, Clone)]
pub struct LocalAgent {
    id: u64,
    env_config: EnvConfig,
    ledger: BudgetLedger,
}

impl LocalAgent {
    /// A new agent with a gravity drawn uniformly from the private set.
    pub fn spawn<R: Rng + ?Sized>(id: u64, mechanism: &MechanismConfig, rng: &mut R) -> Self {
        Self::with_env(id, EnvConfig::sample_private(rng), mechanism)
    }

    pub fn with_env(id: u64, env_config: EnvConfig, mechanism: &MechanismConfig) -> Self {
        Self { id, env_config, ledger: BudgetLedger::new(id, mechanism.epsilon) }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    /// Whether another submission fits in the remaining budget.
    pub fn can_submit(&self, mechanism: &MechanismConfig) -> bool {
        self.ledger.submissions < mechanism.rounds && self.ledger.can_spend(mechanism.epsilon_per_round())
    }

    /// One full activation against a snapshot taken after `n` submissions.
    pub fn activate<R: Rng + ?Sized>(
        &mut self,
        snapshot: ModelParams,
        n: u64,
        mechanism: &MechanismConfig,
        loss: &LossConfig,
        rng: &mut R,
    ) -> Result<Submission> {
        if !self.can_submit(mechanism) {
            return Err(Error::BudgetExhausted {
                spent: self.ledger.spent,
                total: self.ledger.total_epsilon,
                requested: mechanism.epsilon_per_round(),
            });
        }
        let task = AgentTask {
            agent_id: self.id,
            env_config: self.env_config,
            mechanism: *mechanism,
            loss: *loss,
            alpha: exploration_rate(n),
            params_snapshot: snapshot,
        };
        let (hist, score) = run_episode(&task, rng)?;
        craft_submission(&task, &hist, score, &mut self.ledger, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartpole::MAX_STEPS;
    use crate::mechanism::{clip_l1, MechanismKind};
    use crate::model::PARAM_DIM;
    use crate::seed::stream_rng;

    fn task(mechanism: MechanismConfig, alpha: f64, seed: u64) -> AgentTask {
        let mut rng = stream_rng(seed, 0);
        AgentTask {
            agent_id: 17,
            env_config: EnvConfig::with_gravity(9.9),
            mechanism,
            loss: LossConfig::default(),
            alpha,
            params_snapshot: ModelParams::init(&mut rng),
        }
    }

    #[test]
    fn random_policy_baseline_score() {
        let t = task(MechanismConfig::none(PARAM_DIM), 1.0, 1);
        let mut rng = stream_rng(1, 1);
        let scores: Vec<u32> = (0..100).map(|_| run_episode(&t, &mut rng).unwrap().1).collect();
        let mean = scores.iter().sum::<u32>() as f64 / 100.0;
        assert!((10.0..=40.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn episode_is_reproducible_and_bounded() {
        let t = task(MechanismConfig::none(PARAM_DIM), 0.3, 2);
        let a = run_episode(&t, &mut stream_rng(5, 0)).unwrap();
        let b = run_episode(&t, &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.1 <= MAX_STEPS);
        assert_eq!(a.0.len(), a.0.rewards.len());
    }

    #[test]
    fn full_score_means_step_cap() {
        // pole-angle feedback policy expressed through the network
        let mut params = ModelParams::zeros();
        params.shared_block_mut()[..4].copy_from_slice(&[0.0, 0.05, 1.0, 0.5]);
        params.shared_block_mut()[4..8].copy_from_slice(&[0.0, -0.05, -1.0, -0.5]);
        params.policy_block_mut()[0] = -1.0;
        params.policy_block_mut()[1] = 1.0;
        params.policy_block_mut()[16] = 1.0;
        params.policy_block_mut()[17] = -1.0;
        let mut t = task(MechanismConfig::none(PARAM_DIM), 0.0, 0);
        t.params_snapshot = params;
        let mut full = 0;
        for seed in 0..10 {
            let (hist, score) = run_episode(&t, &mut stream_rng(seed, 3)).unwrap();
            if score == MAX_STEPS {
                full += 1;
                assert_eq!(hist.len(), MAX_STEPS as usize);
                assert!(!t.env_config.is_failure(&hist.terminal_state));
            } else {
                assert!(t.env_config.is_failure(&hist.terminal_state));
            }
        }
        assert!(full > 0);
    }

    #[test]
    fn none_mechanism_submits_raw_gradient() {
        let t = task(MechanismConfig::none(PARAM_DIM), 0.5, 3);
        let mut rng = stream_rng(3, 1);
        let (hist, score) = run_episode(&t, &mut rng).unwrap();
        let mut ledger = BudgetLedger::new(t.agent_id, t.mechanism.epsilon);
        let sub = craft_submission(&t, &hist, score, &mut ledger, &mut rng).unwrap();
        assert_eq!(sub.noisy_gradient, loss_gradient(&t.params_snapshot, &hist, &t.loss).unwrap());
        assert_eq!(sub.score, score);
        assert_eq!(sub.agent_id, 17);
    }

    #[test]
    fn laplace_noise_has_expected_variance() {
        let mech = MechanismConfig::laplace(1.0, 0.01, PARAM_DIM).unwrap();
        let t = task(mech, 0.5, 4);
        let mut rng = stream_rng(4, 1);
        let (hist, score) = run_episode(&t, &mut rng).unwrap();
        let clipped = clip_l1(&loss_gradient(&t.params_snapshot, &hist, &t.loss).unwrap(), 0.01).unwrap();
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for _ in 0..200 {
            let mut ledger = BudgetLedger::new(0, 1.0);
            let sub = craft_submission(&t, &hist, score, &mut ledger, &mut rng).unwrap();
            for (y, c) in sub.noisy_gradient.iter().zip(&clipped) {
                sum_sq += (y - c).powi(2);
                count += 1.0;
            }
        }
        // 22,400 draws of Laplace(0.01): variance 2e-4, relative sd of the estimate ≈ 1.6%
        let var = sum_sq / count;
        assert!((var / 2e-4 - 1.0).abs() < 0.08, "variance {var}");
    }

    #[test]
    fn prs_single_row_structure() {
        let mech = MechanismConfig::new(MechanismKind::Prs, 1.0, 1.0, PARAM_DIM, 1, None).unwrap();
        assert_eq!(mech.reduced_dim, 1);
        let t = task(mech, 0.5, 5);
        let mut rng = stream_rng(5, 1);
        let (hist, score) = run_episode(&t, &mut rng).unwrap();
        let mut ledger = BudgetLedger::new(0, 1.0);
        let sub = craft_submission(&t, &hist, score, &mut ledger, &mut rng).unwrap();
        let r3 = 3f64.sqrt();
        assert_eq!(sub.noisy_gradient.len(), PARAM_DIM);
        assert!(sub.noisy_gradient.iter().all(|v| *v == 0.0 || (v.abs() - r3).abs() < 1e-15));
    }

    #[test]
    fn exhausted_agent_submits_nothing() {
        let mech = MechanismConfig::laplace(1.0, 0.01, PARAM_DIM).unwrap();
        let mut agent = LocalAgent::with_env(0, EnvConfig::default(), &mech);
        let mut rng = stream_rng(6, 0);
        let params = ModelParams::init(&mut rng);
        agent
            .activate(params.clone(), 0, &mech, &LossConfig::default(), &mut rng)
            .unwrap();
        assert!(!agent.can_submit(&mech));
        assert!(matches!(
            agent.activate(params, 1, &mech, &LossConfig::default(), &mut rng),
            Err(Error::BudgetExhausted { .. })
        ));
        assert_eq!(agent.ledger().submissions, 1);
    }

    #[test]
    fn multi_round_agent_spends_per_round() {
        let mech = MechanismConfig::new(MechanismKind::Laplace, 2.0, 0.01, PARAM_DIM, 4, None).unwrap();
        let mut agent = LocalAgent::with_env(1, EnvConfig::default(), &mech);
        let mut rng = stream_rng(7, 0);
        let params = ModelParams::init(&mut rng);
        for n in 0..4 {
            agent.activate(params.clone(), n, &mech, &LossConfig::default(), &mut rng).unwrap();
        }
        assert!(!agent.can_submit(&mech));
        assert!((agent.ledger().spent - 2.0).abs() < 1e-12);
    }

    #[test]
    fn submission_does_not_carry_gravity() {
        let mech = MechanismConfig::laplace(1.0, 0.01, PARAM_DIM).unwrap();
        let mut rng = stream_rng(8, 0);
        let mut agent = LocalAgent::with_env(2, EnvConfig::with_gravity(9.7), &mech);
        let sub = agent
            .activate(ModelParams::init(&mut rng), 0, &mech, &LossConfig::default(), &mut rng)
            .unwrap();
        let json = serde_json::to_value(&sub).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 3);
        for k in ["agent_id", "noisy_gradient", "score"] {
            assert!(keys.contains(&k));
        }
        assert!(!json.to_string().contains("gravity"));
    }
}
