//! Cart-pole balancing task with a configurable gravity coefficient.
//!
//! Dynamics follow the classic Barto/Sutton/Anderson formulation integrated
//! with explicit Euler steps of 0.02 s. Each agent's gravity is its private
//! environment parameter.

use rand::Rng;

use crate::error::{Error, Result};

/// Gravity coefficients agents are drawn from, uniformly.
pub const PRIVATE_GRAVITIES: [f64; 3] = [9.7, 9.8, 9.9];

pub const MAX_STEPS: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    PushLeft,
    PushRight,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::PushLeft, Action::PushRight];

    pub fn index(self) -> usize {
        match self {
            Action::PushLeft => 0,
            Action::PushRight => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::PushLeft
        } else {
            Action::PushRight
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub cart_position: f64,
    pub cart_velocity: f64,
    pub pole_angle: f64,
    pub pole_velocity: f64,
}

impl CartPoleState {
    pub fn to_array(self) -> [f64; 4] {
        [self.cart_position, self.cart_velocity, self.pole_angle, self.pole_velocity]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { cart_position: a[0], cart_velocity: a[1], pole_angle: a[2], pole_velocity: a[3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub gravity: f64,
    pub max_steps: u32,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub pole_half_length: f64,
    pub force_mag: f64,
    pub tau: f64,
    pub position_threshold: f64,
    pub angle_threshold: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            max_steps: MAX_STEPS,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            position_threshold: 2.4,
            angle_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
        }
    }
}

impl EnvConfig {
    pub fn with_gravity(gravity: f64) -> Self {
        Self { gravity, ..Self::default() }
    }

    /// Default physics with a gravity drawn uniformly from [`PRIVATE_GRAVITIES`].
    pub fn sample_private<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::with_gravity(PRIVATE_GRAVITIES[rng.random_range(0..PRIVATE_GRAVITIES.len())])
    }

    /// Whether `state` violates the position or angle bound.
    pub fn is_failure(&self, state: &CartPoleState) -> bool {
        state.cart_position.abs() > self.position_threshold || state.pole_angle.abs() > self.angle_threshold
    }
}

/// Initial state, every component uniform on `[-0.05, 0.05]`.
pub fn reset<R: Rng + ?Sized>(rng: &mut R) -> CartPoleState {
    let mut draw = || rng.random_range(-0.05..=0.05);
    CartPoleState { cart_position: draw(), cart_velocity: draw(), pole_angle: draw(), pole_velocity: draw() }
}

/// One Euler step of the equations of motion.
pub fn dynamics(state: &CartPoleState, action: Action, cfg: &EnvConfig) -> CartPoleState {
    let force = match action {
        Action::PushLeft => -cfg.force_mag,
        Action::PushRight => cfg.force_mag,
    };
    let total_mass = cfg.cart_mass + cfg.pole_mass;
    let polemass_length = cfg.pole_mass * cfg.pole_half_length;
    let (sin, cos) = state.pole_angle.sin_cos();

    let temp = (force + polemass_length * state.pole_velocity * state.pole_velocity * sin) / total_mass;
    let angle_acc = (cfg.gravity * sin - cos * temp)
        / (cfg.pole_half_length * (4.0 / 3.0 - cfg.pole_mass * cos * cos / total_mass));
    let cart_acc = temp - polemass_length * angle_acc * cos / total_mass;

    CartPoleState {
        cart_position: state.cart_position + cfg.tau * state.cart_velocity,
        cart_velocity: state.cart_velocity + cfg.tau * cart_acc,
        pole_angle: state.pole_angle + cfg.tau * state.pole_velocity,
        pole_velocity: state.pole_velocity + cfg.tau * angle_acc,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Pole fell or cart left the track.
    Failure,
    /// Step cap reached with the pole standing.
    StepCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: CartPoleState,
    /// 1 while the pole stands, 0 on the failing transition.
    pub reward: f64,
    pub termination: Option<Termination>,
}

impl StepOutcome {
    pub fn is_terminal(&self) -> bool {
        self.termination.is_some()
    }
}

/// A single environment instance owned by one agent.
#[derive(Debug, Clone)]
pub struct CartPole {
    cfg: EnvConfig,
    state: CartPoleState,
    steps: u32,
    done: bool,
}

impl CartPole {
    pub fn new<R: Rng + ?Sized>(cfg: EnvConfig, rng: &mut R) -> Self {
        Self { cfg, state: reset(rng), steps: 0, done: false }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> CartPoleState {
        self.state = reset(rng);
        self.steps = 0;
        self.done = false;
        self.state
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Usage("step called on a terminal cart-pole state".into()));
        }
        let next = dynamics(&self.state, action, &self.cfg);
        self.state = next;
        self.steps += 1;
        let (reward, termination) = if self.cfg.is_failure(&next) {
            (0.0, Some(Termination::Failure))
        } else if self.steps >= self.cfg.max_steps {
            (1.0, Some(Termination::StepCap))
        } else {
            (1.0, None)
        };
        self.done = termination.is_some();
        Ok(StepOutcome { state: next, reward, termination })
    }
}
