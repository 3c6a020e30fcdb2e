//! Lunar landing as a partially observed control problem: the target cell
//! is only known through images relayed over the link.

pub mod belief;
pub mod dynamics;
pub mod episode;
pub mod observe;
pub mod policy;

use crate::error::{Error, Result};

pub use belief::{belief_update, Belief, ConfusionModel};
pub use dynamics::{classify_outcome, dynamics_step, reward, Action, DynamicsConfig, LanderState, Outcome, RewardConfig};
pub use episode::{evaluate, train_policy, EpisodeEnv, EpisodeLog, EpisodeMode, EvalSummary, ObservationSource};
pub use observe::{calibrate_accuracy, capture_at, capture_target, pointing_error, observe, Encoded, ImageLink, LinkMethod, Observation, Payload, ReferenceBank, Transmission};
pub use policy::{delta_from_gradient, delta_from_reward_gradient, KeyConfig, PolicyTable, SpreadStats};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub learning_rate: f64,
    /// Learning rate reached at the end of training (linear decay).
    pub learning_rate_end: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of training over which epsilon decays linearly.
    pub epsilon_decay_frac: f64,
    pub episodes: usize,
    pub kappa: f64,
    pub delta_min: f64,
    /// Apply an episode's updates in reverse order once it ends.
    pub backward_replay: bool,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.2,
            learning_rate_end: 0.01,
            discount: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.02,
            epsilon_decay_frac: 0.8,
            episodes: 20_000,
            kappa: 1.0,
            delta_min: 0.3,
            backward_replay: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LanderConfig {
    pub dynamics: DynamicsConfig,
    pub reward: RewardConfig,
    pub rl: RlConfig,
    pub key: KeyConfig,
    pub start_altitude_m: f64,
    /// Uncontrolled coast steps at the start of every episode.
    pub free_fall_steps: usize,
    pub max_steps: usize,
    /// Ground width of a target-zone image, meters.
    pub footprint_m: f64,
    /// Camera pointing error, meters (per axis, standard deviation).
    pub jitter_m: f64,
}

impl Default for LanderConfig {
    fn default() -> Self {
        Self {
            dynamics: DynamicsConfig::default(),
            reward: RewardConfig::default(),
            rl: RlConfig::default(),
            key: KeyConfig::default(),
            start_altitude_m: 2000.0,
            free_fall_steps: 5,
            max_steps: 5000,
            footprint_m: 200.0,
            jitter_m: 0.0,
        }
    }
}

impl LanderConfig {
    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        self.reward.validate()?;
        self.key.validate()?;
        let rl = &self.rl;
        if !(rl.kappa > 0.0) || !(0.0..=1.0).contains(&rl.delta_min) {
            return Err(Error::Config("kappa must be positive and delta_min in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&rl.epsilon_start) || !(0.0..=1.0).contains(&rl.epsilon_end) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        if !(self.start_altitude_m > 0.0 && self.start_altitude_m <= self.dynamics.volume_m[2]) {
            return Err(Error::Config("start altitude must lie inside the flight volume".into()));
        }
        if !(self.footprint_m > 0.0 && self.jitter_m >= 0.0) {
            return Err(Error::Config("footprint must be positive and jitter non-negative".into()));
        }
        Ok(())
    }
}

/// `eps^2 / (s1 + eps^2) < eps^2 / (s2 + eps^2)` for `s1 > s2 > 0`.
pub fn prop1_rate_check(sigma1: f64, sigma2: f64, eps: f64) -> Result<bool> {
    if !(sigma1 > sigma2 && sigma2 > 0.0 && eps > 0.0) || !sigma1.is_finite() || !eps.is_finite() {
        return Err(Error::invalid(format!(
            "need sigma1 > sigma2 > 0 and eps > 0, got {sigma1}, {sigma2}, {eps}"
        )));
    }
    let e2 = eps * eps;
    Ok(e2 / (sigma1 + e2) < e2 / (sigma2 + e2))
}
