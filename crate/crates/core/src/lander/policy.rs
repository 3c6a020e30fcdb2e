//! Tabular Q-learning over a discretized belief/state key, and the keep
//! ratio derived from the controller's action sensitivity.

use rand::Rng;

use super::dynamics::{action_allowed, Action, DynamicsConfig, LanderState};
use crate::error::{Error, Result};

/// Discretization of the policy state.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyConfig {
    /// Upper edges of the altitude bands, meters; one more band above the last.
    pub altitude_edges: Vec<f64>,
    /// Upper edges of the vertical-velocity bands, m/s.
    pub vz_edges: Vec<f64>,
    /// Deceleration used to shape the desired lateral approach speed.
    pub lateral_brake: f64,
    pub lateral_speed_max: f64,
    /// Half-width of the "on profile" lateral band, m/s.
    pub lateral_band: f64,
}

impl Default for KeyConfig {
    fn default() -> Self {
        Self {
            altitude_edges: vec![3.3, 8.0, 20.0, 50.0, 120.0, 300.0, 800.0],
            vz_edges: vec![-30.0, -15.0, -8.0, -4.0, -2.5, -1.0, 0.5],
            lateral_brake: 0.3,
            lateral_speed_max: 60.0,
            lateral_band: 2.0,
        }
    }
}

const LATERAL_PHASES: usize = 3;

fn band(edges: &[f64], v: f64) -> usize {
    edges.iter().take_while(|&&e| v >= e).count()
}

impl KeyConfig {
    pub fn validate(&self) -> Result<()> {
        for edges in [&self.altitude_edges, &self.vz_edges] {
            if edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config("band edges must be strictly increasing".into()));
            }
        }
        if !(self.lateral_brake > 0.0 && self.lateral_speed_max > 0.0 && self.lateral_band > 0.0) {
            return Err(Error::Config("lateral key parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn n_keys(&self) -> usize {
        LATERAL_PHASES * LATERAL_PHASES * (self.altitude_edges.len() + 1) * (self.vz_edges.len() + 1)
    }

    /// Velocity relative to the braking profile toward the believed target:
    /// 0 above it, 1 on it, 2 below it.
    fn lateral_phase(&self, offset: f64, v: f64) -> usize {
        let want = offset.signum() * (2.0 * self.lateral_brake * offset.abs()).sqrt().min(self.lateral_speed_max);
        let err = want - v;
        if err < -self.lateral_band {
            0
        } else if err > self.lateral_band {
            2
        } else {
            1
        }
    }

    /// Key from the believed target center and the lander state.
    pub fn key(&self, target: (f64, f64), x: &LanderState) -> usize {
        let px = self.lateral_phase(target.0 - x.position[0], x.velocity[0]);
        let py = self.lateral_phase(target.1 - x.position[1], x.velocity[1]);
        let alt = band(&self.altitude_edges, x.position[2]);
        let vz = band(&self.vz_edges, x.velocity[2]);
        ((px * LATERAL_PHASES + py) * (self.altitude_edges.len() + 1) + alt) * (self.vz_edges.len() + 1) + vz
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    pub q: Vec<[f64; Action::COUNT]>,
    pub learning_rate: f64,
    pub discount: f64,
}

pub type ActionMask = [bool; Action::COUNT];

pub const ALL_ALLOWED: ActionMask = [true; Action::COUNT];

pub fn allowed_mask(x: &LanderState, cfg: &DynamicsConfig) -> ActionMask {
    let mut m = ALL_ALLOWED;
    for a in Action::ALL {
        m[a.index()] = action_allowed(x, a, cfg);
    }
    m
}

/// Highest-valued allowed action; ties go to the lowest index.
pub fn greedy(q: &[f64; Action::COUNT], allowed: &ActionMask) -> usize {
    let mut best: Option<usize> = None;
    for i in 0..Action::COUNT {
        if allowed[i] && best.is_none_or(|b| q[i] > q[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or(Action::Coast.index())
}

impl PolicyTable {
    pub fn new(n_states: usize, learning_rate: f64, discount: f64) -> Result<Self> {
        if n_states == 0 || !(0.0..=1.0).contains(&learning_rate) || !(0.0..=1.0).contains(&discount) {
            return Err(Error::Config(format!(
                "policy needs states > 0, lr and discount in [0, 1]; got {n_states}, {learning_rate}, {discount}"
            )));
        }
        Ok(Self {
            q: vec![[0.0; Action::COUNT]; n_states],
            learning_rate,
            discount,
        })
    }

    /// `epsilon`-greedy choice among allowed actions.
    pub fn choose<R: Rng + ?Sized>(&self, s: usize, allowed: &ActionMask, epsilon: f64, rng: &mut R) -> usize {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            let n = allowed.iter().filter(|&&a| a).count();
            if n > 0 {
                let k = rng.random_range(0..n);
                return (0..Action::COUNT).filter(|&i| allowed[i]).nth(k).expect("k < n");
            }
        }
        greedy(&self.q[s], allowed)
    }

    /// `Q(s,u) += lr (r + discount * max_{u'} Q(s',u') - Q(s,u))`; a terminal
    /// transition (`next = None`) bootstraps from zero.
    pub fn q_update(&mut self, s: usize, u: usize, r: f64, next: Option<(usize, &ActionMask)>) {
        let boot = match next {
            Some((s2, allowed)) => {
                let a = greedy(&self.q[s2], allowed);
                self.q[s2][a]
            }
            None => 0.0,
        };
        let q = &mut self.q[s][u];
        *q += self.learning_rate * (r + self.discount * boot - *q);
    }

    /// `max_u Q(s,u) - mean_u Q(s,u)`.
    pub fn spread(&self, s: usize) -> f64 {
        let q = &self.q[s];
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max - q.iter().sum::<f64>() / Action::COUNT as f64
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().flatten().all(|v| v.is_finite())
    }
}

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpreadStats {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl SpreadStats {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

/// `1 / (1 + e^{kappa g})` clamped to `[delta_min, 1]`.
pub fn delta_from_gradient(g: f64, kappa: f64, delta_min: f64) -> f64 {
    (1.0 / (1.0 + (kappa * g).exp())).clamp(delta_min, 1.0)
}

/// Keep ratio from the normalized advantage spread at state `s`.
pub fn delta_from_reward_gradient(
    policy: &PolicyTable,
    s: usize,
    kappa: f64,
    stats: &SpreadStats,
    delta_min: f64,
) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    let g = policy.spread(s) / (stats.std() + 1e-9);
    Ok(delta_from_gradient(g, kappa, delta_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn delta_at_zero_gradient() {
        assert_eq!(delta_from_gradient(0.0, 1.0, 0.3), 0.5);
        assert_eq!(delta_from_gradient(1e6, 1.0, 0.3), 0.3);
        let p = PolicyTable::new(3, 0.1, 0.9).unwrap();
        assert_eq!(delta_from_reward_gradient(&p, 0, 1.0, &SpreadStats::default(), 0.3).unwrap(), 0.5);
        assert!(delta_from_reward_gradient(&p, 0, 0.0, &SpreadStats::default(), 0.3).is_err());
    }

    #[test]
    fn delta_decreasing_before_clamp() {
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let g = -5.0 + 0.1 * i as f64;
            let d = delta_from_gradient(g, 1.0, 0.0);
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn greedy_ties_and_mask() {
        let q = [1.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(greedy(&q, &ALL_ALLOWED), 1);
        let mut m = ALL_ALLOWED;
        m[1] = false;
        assert_eq!(greedy(&q, &m), 2);
        let mut p = PolicyTable::new(1, 0.5, 0.9).unwrap();
        p.q[0] = q;
        let mut r = rng::seeded(1);
        assert_eq!(p.choose(0, &ALL_ALLOWED, 0.0, &mut r), 1);
        p.q[0].iter_mut().for_each(|v| *v *= 7.5);
        assert_eq!(p.choose(0, &ALL_ALLOWED, 0.0, &mut r), 1);
    }

    #[test]
    fn zero_learning_rate_is_inert() {
        let mut p = PolicyTable::new(2, 0.0, 0.9).unwrap();
        p.q[1][3] = 4.0;
        let before = p.clone();
        p.q_update(0, 2, 10.0, Some((1, &ALL_ALLOWED)));
        assert_eq!(p, before);
    }

    #[test]
    fn constant_reward_fixed_point() {
        let mut p = PolicyTable::new(1, 0.5, 0.0).unwrap();
        for _ in 0..200 {
            p.q_update(0, 0, 2.5, Some((0, &ALL_ALLOWED)));
        }
        assert!((p.q[0][0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn keys_are_in_range() {
        let k = KeyConfig::default();
        let mut r = rng::seeded(2);
        for _ in 0..1000 {
            let x = LanderState {
                position: [r.random_range(0.0..6000.0), r.random_range(0.0..2000.0), r.random_range(0.0..2000.0)],
                velocity: [r.random_range(-80.0..80.0), r.random_range(-80.0..80.0), r.random_range(-80.0..5.0)],
                fuel_steps_remaining: 1,
                touched_down: false,
            };
            assert!(k.key((r.random_range(0.0..6000.0), 1000.0), &x) < k.n_keys());
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let mut s = SpreadStats::default();
        xs.iter().for_each(|&x| s.push(x));
        assert!((s.std() - crate::metrics::std_dev(&xs)).abs() < 1e-12);
    }
}
