use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Result};
use crate::rng::Rng;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const DEFAULT_FORCE: f64 = 0.001;
pub const DEFAULT_MAX_STEPS: usize = 1000;

/// Gravity of the training domain.
pub const SOURCE_GRAVITY: f64 = 0.0025;
/// Gravity values 0.0019 to 0.0031 in steps of 0.0003.
pub const GRAVITY_DOMAINS: [f64; 5] = [0.0019, 0.0022, 0.0025, 0.0028, 0.0031];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    PushLeft = 0,
    NoPush = 1,
    PushRight = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::PushLeft, Action::NoPush, Action::PushRight];

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub position: f64,
    pub velocity: f64,
}

impl CarState {
    pub fn in_bounds(&self) -> bool {
        (MIN_POSITION..=MAX_POSITION).contains(&self.position) && self.velocity.abs() <= MAX_SPEED
    }

    /// Standard start: position uniform in [−0.6, −0.4), at rest.
    pub fn random_start(rng: &mut Rng) -> Self {
        Self {
            position: rng.random_range(-0.6..-0.4),
            velocity: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub gravity: f64,
    #[serde(default = "default_force")]
    pub force: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_force() -> f64 {
    DEFAULT_FORCE
}
fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

impl EnvConfig {
    pub fn with_gravity(gravity: f64) -> Self {
        Self {
            gravity,
            force: DEFAULT_FORCE,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gravity > 0.0) || !(self.force > 0.0) || self.max_steps == 0 {
            return Err(invalid_param(
                "gravity and force must be positive, max_steps ≥ 1",
            ));
        }
        Ok(())
    }
}

/// Shaped reward of a position.
pub fn reward(position: f64) -> f64 {
    if position >= GOAL_POSITION {
        100.0
    } else if position > -0.4 {
        10.0 * (0.4 + position).powi(3)
    } else {
        -0.1
    }
}

/// One step of mountain-car dynamics with configurable gravity.
pub fn env_step(s: &CarState, a: Action, cfg: &EnvConfig) -> Result<(CarState, f64, bool)> {
    if !s.in_bounds() {
        return Err(invalid_input(format!("state out of bounds: {s:?}")));
    }
    let push = a.index() as f64 - 1.0;
    let mut velocity = s.velocity + cfg.force * push - cfg.gravity * (3.0 * s.position).cos();
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    let position = (s.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
    if position <= MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    let done = position >= GOAL_POSITION;
    Ok((CarState { position, velocity }, reward(position), done))
}
