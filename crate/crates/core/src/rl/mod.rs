//! Mountain car with configurable gravity, a dueling DQN and its distilled variant.

mod agent;
mod env;
mod qnet;
mod replay;

pub use agent::{
    bellman_target, dqn_train, evaluate_fuel, policy_distill_train, q_batch_loss, read_episode_csv,
    run_policy, write_episode_csv, DqnAgent, DqnHyper, EpisodeRecord, FuelStats, QDistill,
    QLossReport, RlLog,
};
pub use env::{
    env_step, reward, Action, CarState, EnvConfig, DEFAULT_FORCE, DEFAULT_MAX_STEPS, GOAL_POSITION,
    GRAVITY_DOMAINS, MAX_POSITION, MAX_SPEED, MIN_POSITION, SOURCE_GRAVITY,
};
pub use qnet::{
    encode_state, encode_states, greedy_action, q_forward, QHeads, QNetwork, HIDDEN, NUM_ACTIONS,
};
pub use replay::{ReplayBuffer, Transition, DEFAULT_CAPACITY};
