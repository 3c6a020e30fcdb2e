//! Episode loop: capture, transmit, detect, update belief, act, learn.

use std::io::Write;

use rand::Rng;

use super::belief::{belief_update, Belief, ConfusionModel};
use super::dynamics::{classify_outcome, dynamics_step, reward, Action, LanderState, Outcome};
use super::observe::{capture_at, observe, pointing_error, Encoded, ImageLink, ReferenceBank};
use super::policy::{allowed_mask, delta_from_reward_gradient, PolicyTable, SpreadStats};
use super::LanderConfig;
use crate::error::{Error, Result};
use crate::metrics;
use crate::rng::{derive_seed, seeded, stream};
use crate::surface::{Cell, CellGrid, SurfaceMap};

/// Where detections come from.
#[derive(Clone, Debug)]
pub enum ObservationSource<'a> {
    /// The true target, every step.
    Oracle,
    /// Detections drawn from a likelihood model.
    Sampled(ConfusionModel),
    /// Render, encode, transmit, decode and match.
    Pipeline {
        link: ImageLink<'a>,
        surface: &'a SurfaceMap,
        bank: &'a ReferenceBank,
    },
}

/// Everything an episode needs besides the policy.
#[derive(Clone, Debug)]
pub struct EpisodeEnv<'a> {
    pub cfg: &'a LanderConfig,
    pub grid: CellGrid,
    pub source: ObservationSource<'a>,
    /// Likelihood used by the belief filter.
    pub belief_model: ConfusionModel,
    /// Derive the keep ratio from the policy; otherwise use 1.
    pub dynamic_delta: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub action: Action,
    pub reward: f64,
    pub delta: f64,
    pub detected_cell: usize,
    pub belief_entropy: f64,
    pub bits: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub target: Cell,
    pub steps: Vec<StepLog>,
    pub outcome: Outcome,
    pub total_reward: f64,
    pub belief_resets: usize,
}

pub const EPISODE_CSV_HEADER: [&str; 14] = [
    "step",
    "x",
    "y",
    "z",
    "vx",
    "vy",
    "vz",
    "action",
    "reward",
    "delta",
    "detected_cell",
    "belief_entropy",
    "bits",
    "cumulative_reward",
];

impl EpisodeLog {
    /// One row per step in [`EPISODE_CSV_HEADER`] order, prefixed by the
    /// episode index when given.
    pub fn csv_rows(&self, episode: Option<usize>) -> Vec<Vec<String>> {
        let mut cum = 0.0;
        self.steps
            .iter()
            .map(|s| {
                cum += s.reward;
                let mut row: Vec<String> = episode.map(|e| vec![e.to_string()]).unwrap_or_default();
                row.extend([
                    s.step.to_string(),
                    fmt(s.position[0]),
                    fmt(s.position[1]),
                    fmt(s.position[2]),
                    fmt(s.velocity[0]),
                    fmt(s.velocity[1]),
                    fmt(s.velocity[2]),
                    s.action.name().to_string(),
                    fmt(s.reward),
                    fmt(s.delta),
                    s.detected_cell.to_string(),
                    fmt(s.belief_entropy),
                    s.bits.to_string(),
                    fmt(cum),
                ]);
                row
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>, episode: Option<usize>) -> csv::Result<()> {
        for row in self.csv_rows(episode) {
            w.write_record(&row)?;
        }
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Exploration and learning switches for one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeMode {
    pub epsilon: f64,
    pub learn: bool,
}

impl EpisodeMode {
    pub const EVAL: EpisodeMode = EpisodeMode {
        epsilon: 0.0,
        learn: false,
    };
}

impl<'a> EpisodeEnv<'a> {
    /// Detected cell, payload bits and keep ratio used. With zero pointing
    /// jitter the encoded image only depends on the keep ratio, so `cache`
    /// holds the last encoding.
    fn detect(&self, target: usize, delta: f64, step_seed: u64, cache: &mut Option<Encoded>) -> Result<(usize, usize, f64)> {
        let mut r = seeded(step_seed);
        match &self.source {
            ObservationSource::Oracle => Ok((target, 0, 1.0)),
            ObservationSource::Sampled(m) => Ok((m.sample(target, &mut r), 0, 1.0)),
            ObservationSource::Pipeline { link, surface, bank } => {
                let offset = pointing_error(self.cfg.jitter_m, &mut r);
                let fresh = self.cfg.jitter_m > 0.0 || cache.as_ref().is_none_or(|c| c.requested_delta != delta);
                if fresh {
                    let img = capture_at(surface, self.grid.cell(target), bank.footprint_m, offset)?;
                    *cache = Some(link.encode(&img, delta)?);
                }
                let sent = cache.as_ref().expect("encoded above");
                let rx = link.deliver(sent, &mut r)?;
                Ok((observe(&rx.image, bank)?.index, rx.bits, rx.delta))
            }
        }
    }

    fn believed_center(&self, b: &Belief) -> (f64, f64) {
        self.grid.center(self.grid.cell(b.argmax()))
    }

    /// Runs one episode from `seed`. The start state, target, pointing
    /// jitter and channel noise of step `t` come from streams derived from
    /// `seed` alone, so two environments given the same seed share them.
    pub fn run(&self, policy: &mut PolicyTable, stats: &mut SpreadStats, mode: EpisodeMode, seed: u64) -> Result<EpisodeLog> {
        let cfg = self.cfg;
        let n = self.grid.len();
        let mut init = stream(seed, 0);
        let target = init.random_range(0..n);
        let target_center = self.grid.center(self.grid.cell(target));
        let mut x = LanderState::at_rest(
            [
                init.random::<f64>() * cfg.dynamics.volume_m[0],
                init.random::<f64>() * cfg.dynamics.volume_m[1],
                cfg.start_altitude_m,
            ],
            cfg.dynamics.fuel_steps,
        );
        let mut explore = stream(seed, 1);
        let obs_seed = derive_seed(seed, 2);
        let mut belief = Belief::uniform(n);
        let mut steps = Vec::new();
        let mut total = 0.0;
        let mut resets = 0;
        let mut replay = Vec::new();
        let mut cache = None;
        for t in 0..cfg.max_steps {
            let pre_key = cfg.key.key(self.believed_center(&belief), &x);
            let delta = if self.dynamic_delta {
                delta_from_reward_gradient(policy, pre_key, cfg.rl.kappa, stats, cfg.rl.delta_min)?
            } else {
                1.0
            };
            let (z, bits, delta) = self.detect(target, delta, derive_seed(obs_seed, t as u64), &mut cache)?;
            let (b, reset) = belief_update(&belief, z, &self.belief_model)?;
            belief = b;
            resets += reset as usize;
            let key = cfg.key.key(self.believed_center(&belief), &x);
            let allowed = allowed_mask(&x, &cfg.dynamics);
            let free_fall = t < cfg.free_fall_steps;
            let a = if free_fall {
                Action::Coast.index()
            } else {
                policy.choose(key, &allowed, mode.epsilon, &mut explore)
            };
            let action = Action::from_index(a).expect("valid action index");
            let next = dynamics_step(&x, action, &cfg.dynamics);
            let mut r = reward(&x, target_center, action, &next, &cfg.reward);
            let outcome = if next.touched_down {
                let o = classify_outcome(&next, self.grid.cell(target), &self.grid, &cfg.reward)?;
                r += cfg.reward.terminal(o);
                Some(o)
            } else {
                None
            };
            if mode.learn && !free_fall {
                if self.dynamic_delta {
                    stats.push(policy.spread(key));
                }
                let next_allowed = allowed_mask(&next, &cfg.dynamics);
                let next_key = cfg.key.key(self.believed_center(&belief), &next);
                let boot = outcome.is_none().then_some((next_key, next_allowed));
                if cfg.rl.backward_replay {
                    replay.push((key, a, r, boot));
                } else {
                    policy.q_update(key, a, r, boot.as_ref().map(|(k, m)| (*k, m)));
                }
            }
            total += r;
            steps.push(StepLog {
                step: t,
                position: next.position,
                velocity: next.velocity,
                action,
                reward: r,
                delta,
                detected_cell: z,
                belief_entropy: belief.entropy(),
                bits,
            });
            x = next;
            if let Some(outcome) = outcome {
                for (k, a, r, boot) in replay.iter().rev() {
                    policy.q_update(*k, *a, *r, boot.as_ref().map(|(k2, m)| (*k2, m)));
                }
                return Ok(EpisodeLog {
                    target: self.grid.cell(target),
                    steps,
                    outcome,
                    total_reward: total,
                    belief_resets: resets,
                });
            }
        }
        Err(Error::Numeric(format!("episode did not touch down within {} steps", cfg.max_steps)))
    }
}

/// Linear schedule from `start` to `end` over the first `frac` of training.
pub fn epsilon_at(episode: usize, total: usize, start: f64, end: f64, frac: f64) -> f64 {
    let horizon = (frac * total as f64).max(1.0);
    let t = (episode as f64 / horizon).min(1.0);
    start + (end - start) * t
}

/// Trains a fresh policy for `cfg.rl.episodes` episodes.
pub fn train_policy(env: &EpisodeEnv, master_seed: u64) -> Result<(PolicyTable, SpreadStats, Vec<f64>)> {
    let rl = &env.cfg.rl;
    let mut policy = PolicyTable::new(env.cfg.key.n_keys(), rl.learning_rate, rl.discount)?;
    let mut stats = SpreadStats::default();
    let mut rewards = Vec::with_capacity(rl.episodes);
    for e in 0..rl.episodes {
        policy.learning_rate = epsilon_at(e, rl.episodes, rl.learning_rate, rl.learning_rate_end, 1.0);
        let mode = EpisodeMode {
            epsilon: epsilon_at(e, rl.episodes, rl.epsilon_start, rl.epsilon_end, rl.epsilon_decay_frac),
            learn: true,
        };
        let log = env.run(&mut policy, &mut stats, mode, derive_seed(master_seed, e as u64))?;
        rewards.push(log.total_reward);
    }
    if !policy.is_finite() {
        return Err(Error::Numeric("Q table diverged".into()));
    }
    Ok((policy, stats, rewards))
}

/// Aggregate of greedy evaluation episodes.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub reward_se: f64,
    pub perfect_rate: f64,
    pub success_rate: f64,
    pub failure_rate: f64,
    pub mean_bits: f64,
    pub mean_delta: f64,
}

impl EvalSummary {
    pub fn from_logs(logs: &[EpisodeLog]) -> Self {
        let n = logs.len();
        let rewards: Vec<f64> = logs.iter().map(|l| l.total_reward).collect();
        let count = |o: Outcome| logs.iter().filter(|l| l.outcome == o).count() as f64 / n.max(1) as f64;
        let all_steps = || logs.iter().flat_map(|l| l.steps.iter());
        let n_steps = all_steps().count().max(1) as f64;
        Self {
            episodes: n,
            mean_reward: metrics::mean(&rewards),
            reward_se: metrics::std_error(&rewards),
            perfect_rate: count(Outcome::Perfect),
            success_rate: count(Outcome::Perfect) + count(Outcome::Imperfect),
            failure_rate: count(Outcome::Failure),
            mean_bits: all_steps().map(|s| s.bits as f64).sum::<f64>() / n_steps,
            mean_delta: all_steps().map(|s| s.delta).sum::<f64>() / n_steps,
        }
    }
}

/// Greedy episodes with seeds `derive_seed(master_seed, i)`; the policy and
/// spread statistics are left untouched.
pub fn evaluate(env: &EpisodeEnv, policy: &PolicyTable, stats: &SpreadStats, episodes: usize, master_seed: u64) -> Result<Vec<EpisodeLog>> {
    let mut p = policy.clone();
    let mut s = *stats;
    (0..episodes)
        .map(|i| env.run(&mut p, &mut s, EpisodeMode::EVAL, derive_seed(master_seed, i as u64)))
        .collect()
}
