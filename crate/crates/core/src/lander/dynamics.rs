//! Point-mass lander kinematics, reward and touchdown classification.

use crate::error::{Error, Result};
use crate::surface::CellGrid;

/// Discrete thruster command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
    MinusZ,
    Coast,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::PlusX,
        Action::MinusX,
        Action::PlusY,
        Action::MinusY,
        Action::PlusZ,
        Action::MinusZ,
        Action::Coast,
    ];
    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::PlusX => "+x",
            Action::MinusX => "-x",
            Action::PlusY => "+y",
            Action::MinusY => "-y",
            Action::PlusZ => "+z",
            Action::MinusZ => "-z",
            Action::Coast => "coast",
        }
    }

    /// Unit thrust direction.
    pub fn direction(self) -> [f64; 3] {
        match self {
            Action::PlusX => [1.0, 0.0, 0.0],
            Action::MinusX => [-1.0, 0.0, 0.0],
            Action::PlusY => [0.0, 1.0, 0.0],
            Action::MinusY => [0.0, -1.0, 0.0],
            Action::PlusZ => [0.0, 0.0, 1.0],
            Action::MinusZ => [0.0, 0.0, -1.0],
            Action::Coast => [0.0; 3],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    /// Downward gravitational acceleration, m/s^2.
    pub gravity: f64,
    pub thrust_accel: f64,
    pub dt: f64,
    /// Flight volume `(x, y, z)` extents, meters.
    pub volume_m: [f64; 3],
    /// Thrust steps available per episode.
    pub fuel_steps: u32,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            gravity: 1.62,
            thrust_accel: 3.24,
            dt: 1.0,
            volume_m: [6000.0, 2000.0, 2000.0],
            fuel_steps: 400,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gravity >= 0.0 && self.thrust_accel >= 0.0 && self.dt > 0.0) {
            return Err(Error::Config("gravity, thrust and dt must be non-negative (dt > 0)".into()));
        }
        if self.volume_m.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("flight volume must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanderState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub fuel_steps_remaining: u32,
    pub touched_down: bool,
}

impl LanderState {
    pub fn at_rest(position: [f64; 3], fuel_steps: u32) -> Self {
        Self {
            position,
            velocity: [0.0; 3],
            fuel_steps_remaining: fuel_steps,
            touched_down: false,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Semi-implicit Euler step: `v += (g + a(u)) dt`, then `p += v dt`.
///
/// Thrust without fuel acts as a coast. Lateral walls and the ceiling stop
/// the lander and zero the velocity component that hit them; crossing the
/// ground plane sets `touched_down` and pins altitude to zero.
pub fn dynamics_step(x: &LanderState, u: Action, cfg: &DynamicsConfig) -> LanderState {
    let mut next = *x;
    if x.touched_down {
        return next;
    }
    let thrusting = u != Action::Coast && x.fuel_steps_remaining > 0;
    let dir = if thrusting { u.direction() } else { [0.0; 3] };
    if thrusting {
        next.fuel_steps_remaining -= 1;
    }
    for i in 0..3 {
        let g = if i == 2 { -cfg.gravity } else { 0.0 };
        next.velocity[i] += (g + cfg.thrust_accel * dir[i]) * cfg.dt;
        next.position[i] += next.velocity[i] * cfg.dt;
    }
    for i in 0..2 {
        let hi = cfg.volume_m[i];
        if next.position[i] < 0.0 || next.position[i] > hi {
            next.position[i] = next.position[i].clamp(0.0, hi);
            next.velocity[i] = 0.0;
        }
    }
    if next.position[2] > cfg.volume_m[2] {
        next.position[2] = cfg.volume_m[2];
        next.velocity[2] = next.velocity[2].min(0.0);
    }
    if next.position[2] <= 0.0 {
        next.position[2] = 0.0;
        next.touched_down = true;
    }
    next
}

/// `+z` is unavailable when it would turn the descent into a climb.
pub fn action_allowed(x: &LanderState, u: Action, cfg: &DynamicsConfig) -> bool {
    match u {
        Action::PlusZ => x.velocity[2] + (cfg.thrust_accel - cfg.gravity) * cfg.dt <= 1e-9,
        _ => true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Perfect,
    Imperfect,
    Failure,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Perfect => "perfect",
            Outcome::Imperfect => "imperfect",
            Outcome::Failure => "failure",
        }
    }

    pub fn intact(self) -> bool {
        self != Outcome::Failure
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Reward per meter of distance gained toward the target.
    pub w_distance: f64,
    /// Cost of any thrust command.
    pub w_thrust: f64,
    pub perfect_bonus: f64,
    pub intact_bonus: f64,
    pub crash_penalty: f64,
    /// Touchdown vertical speed above which the lander is lost, m/s.
    pub v_crash: f64,
    /// When positive, a perfect landing must also lie within this distance
    /// of the target-cell center.
    pub perfect_radius_m: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_distance: 0.1,
            w_thrust: 0.01,
            perfect_bonus: 100.0,
            intact_bonus: 20.0,
            crash_penalty: -100.0,
            v_crash: 2.0,
            perfect_radius_m: 0.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_crash > 0.0) {
            return Err(Error::Config(format!("v_crash must be positive, got {}", self.v_crash)));
        }
        if !(self.w_distance >= 0.0 && self.w_thrust >= 0.0 && self.perfect_radius_m >= 0.0) {
            return Err(Error::Config("reward weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn terminal(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Perfect => self.perfect_bonus,
            Outcome::Imperfect => self.intact_bonus,
            Outcome::Failure => self.crash_penalty,
        }
    }
}

fn distance(p: &[f64; 3], target: (f64, f64)) -> f64 {
    let dx = p[0] - target.0;
    let dy = p[1] - target.1;
    dx.hypot(dy)
}

/// Shaping reward: horizontal distance gained toward the ground point
/// `target`, minus the thrust cost. Terminal bonuses are added separately.
pub fn reward(x_prev: &LanderState, target: (f64, f64), u: Action, x_next: &LanderState, cfg: &RewardConfig) -> f64 {
    let gain = distance(&x_prev.position, target) - distance(&x_next.position, target);
    let thrust = if u == Action::Coast { 0.0 } else { cfg.w_thrust };
    cfg.w_distance * gain - thrust
}

/// Classifies a touchdown. Crash when `|v_z| > v_crash`, perfect when the
/// touchdown point is in the target cell, imperfect otherwise.
pub fn classify_outcome(
    x: &LanderState,
    target: crate::surface::Cell,
    grid: &CellGrid,
    cfg: &RewardConfig,
) -> Result<Outcome> {
    if !x.touched_down {
        return Err(Error::Contract("classify_outcome called before touchdown".into()));
    }
    if x.velocity[2].abs() > cfg.v_crash {
        return Ok(Outcome::Failure);
    }
    let in_cell = grid.cell_at(x.position[0], x.position[1]) == Some(target);
    let in_radius = cfg.perfect_radius_m <= 0.0 || {
        let c = grid.center(target);
        (x.position[0] - c.0).hypot(x.position[1] - c.1) <= cfg.perfect_radius_m
    };
    Ok(if in_cell && in_radius {
        Outcome::Perfect
    } else {
        Outcome::Imperfect
    })
}
