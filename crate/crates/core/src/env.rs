//! Control environments and the episode rollout protocol.

use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnn::{argmax, Controller};

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const FORCE_MAGNITUDE: f64 = 10.0;
pub const TIME_STEP: f64 = 0.02;
pub const POSITION_LIMIT: f64 = 2.4;
/// 12 degrees.
pub const ANGLE_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const MAX_EPISODE_STEPS: u32 = 500;
pub const RESET_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Discrete-action episodic environment.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn observation(&self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
}

/// Cart position, cart velocity, pole angle, pole angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn out_of_bounds(&self) -> bool {
        self.x.abs() > POSITION_LIMIT || self.theta.abs() > ANGLE_LIMIT
    }
}

/// Pole balancing on a cart; action 0 pushes left, action 1 pushes right.
#[derive(Debug, Clone, Default)]
pub struct CartPole {
    state: CartPoleState,
    steps: u32,
    done: bool,
}

impl CartPole {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_state(state: CartPoleState) -> Self {
        CartPole {
            state,
            steps: 0,
            done: false,
        }
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// One semi-implicit Euler step of the cart-pole equations of motion.
    pub fn integrate(state: CartPoleState, action: usize) -> CartPoleState {
        let force = if action == 1 {
            FORCE_MAGNITUDE
        } else {
            -FORCE_MAGNITUDE
        };
        let total_mass = CART_MASS + POLE_MASS;
        let pole_moment = POLE_MASS * POLE_HALF_LENGTH;
        let (sin, cos) = state.theta.sin_cos();
        let temp = (force + pole_moment * state.theta_dot * state.theta_dot * sin) / total_mass;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
        let x_dot = state.x_dot + TIME_STEP * x_acc;
        let theta_dot = state.theta_dot + TIME_STEP * theta_acc;
        CartPoleState {
            x: state.x + TIME_STEP * x_dot,
            x_dot,
            theta: state.theta + TIME_STEP * theta_dot,
            theta_dot,
        }
    }
}

impl Environment for CartPole {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_count(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rng.random_range(-RESET_RANGE..=RESET_RANGE);
        self.state = CartPoleState {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
        };
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn observation(&self) -> Vec<f64> {
        self.state.to_array().to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        if action > 1 {
            return Err(Error::Contract(format!("invalid cart-pole action {action}")));
        }
        self.state = Self::integrate(self.state, action);
        self.steps += 1;
        let terminated = self.state.out_of_bounds();
        let truncated = !terminated && self.steps >= MAX_EPISODE_STEPS;
        self.done = terminated || truncated;
        Ok(StepOutcome {
            reward: 1.0,
            terminated,
            truncated,
        })
    }
}

/// Environments selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[default]
    Cartpole,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Cartpole => "cartpole",
        }
    }

    pub fn make(self) -> Box<dyn Environment + Send> {
        match self {
            EnvKind::Cartpole => Box::new(CartPole::new()),
        }
    }

    pub fn observation_dim(self) -> usize {
        self.make().observation_dim()
    }

    pub fn action_count(self) -> usize {
        self.make().action_count()
    }

    /// Highest achievable episode return.
    pub fn max_return(self) -> f64 {
        match self {
            EnvKind::Cartpole => MAX_EPISODE_STEPS as f64,
        }
    }

    /// Conventional "solved" score.
    pub fn passing_score(self) -> f64 {
        match self {
            EnvKind::Cartpole => 475.0,
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvKind::Cartpole),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub steps: u32,
}

/// Seed of episode `index` within a rollout: independent ChaCha streams of
/// the rollout seed.
pub fn episode_seed(rollout_seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rollout_seed);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn run_episode(
    env: &mut dyn Environment,
    controller: &Controller,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut obs = env.reset(seed);
    let mut total = 0.0;
    let mut steps = 0;
    loop {
        let action = argmax(&controller.act(&obs)?);
        let outcome = env.step(action)?;
        total += outcome.reward;
        steps += 1;
        if outcome.done() {
            break;
        }
        obs = env.observation();
    }
    Ok(EpisodeResult {
        total_reward: total,
        steps,
    })
}

/// Mean return over `episodes` seeded episodes.
pub fn rollout(controller: &Controller, kind: EnvKind, episodes: usize, seed: u64) -> Result<f64> {
    let results = rollout_episodes(controller, kind, episodes, seed)?;
    Ok(results.iter().map(|r| r.total_reward).sum::<f64>() / episodes.max(1) as f64)
}

pub fn rollout_episodes(
    controller: &Controller,
    kind: EnvKind,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeResult>> {
    let mut env = kind.make();
    (0..episodes as u64)
        .map(|i| run_episode(env.as_mut(), controller, episode_seed(seed, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_seeded_and_bounded() {
        let mut env = CartPole::new();
        let a = env.reset(7);
        let b = env.reset(7);
        assert_eq!(a, b);
        let c = env.reset(8);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| v.abs() <= RESET_RANGE));
    }

    #[test]
    fn tilted_pole_terminates_next_step() {
        let mut env = CartPole::with_state(CartPoleState {
            theta: ANGLE_LIMIT + 1e-3,
            theta_dot: 0.1,
            ..Default::default()
        });
        let out = env.step(0).unwrap();
        assert!(out.terminated);
        assert_eq!(out.reward, 1.0);
        assert!(matches!(env.step(0), Err(Error::Contract(_))));
    }

    #[test]
    fn upright_alternating_survives() {
        let mut env = CartPole::with_state(CartPoleState::default());
        let mut steps = 0;
        while !env.step(steps % 2).unwrap().done() {
            steps += 1;
        }
        assert!(steps >= 20, "fell after {steps}");
    }

    #[test]
    fn tilt_feedback_reaches_truncation() {
        let mut env = CartPole::new();
        env.reset(3);
        let mut total = 0.0;
        loop {
            let s = env.state();
            let out = env.step(usize::from(s.theta + 0.5 * s.theta_dot > 0.0)).unwrap();
            total += out.reward;
            if out.done() {
                assert!(out.truncated);
                break;
            }
        }
        assert_eq!(total, MAX_EPISODE_STEPS as f64);
    }

    #[test]
    fn truncation_at_episode_limit() {
        let mut env = CartPole::with_state(CartPoleState::default());
        env.steps = MAX_EPISODE_STEPS - 1;
        let out = env.step(0).unwrap();
        assert!(out.truncated && !out.terminated);
    }

    #[test]
    fn episode_seeds_differ_per_index() {
        let seeds: Vec<u64> = (0..5).map(|i| episode_seed(42, i)).collect();
        for i in 0..5 {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        assert_eq!(episode_seed(42, 3), seeds[3]);
    }

    #[test]
    fn env_names() {
        assert_eq!("cartpole".parse::<EnvKind>().unwrap(), EnvKind::Cartpole);
        assert!("mountaincar".parse::<EnvKind>().unwrap_err().is_config());
        assert_eq!(EnvKind::Cartpole.observation_dim(), 4);
        assert_eq!(EnvKind::Cartpole.action_count(), 2);
    }
}
