mod common;

use common::oracles;
use dynasc::lander::dynamics::{action_allowed, dynamics_step};
use dynasc::lander::episode::EpisodeMode;
use dynasc::lander::policy::ALL_ALLOWED;
use dynasc::lander::{
    belief_update, calibrate_accuracy, delta_from_gradient, evaluate, prop1_rate_check, train_policy, Action, Belief,
    ConfusionModel, EpisodeEnv, EvalSummary, ImageLink, LanderConfig, LanderState, LinkMethod, ObservationSource,
    Outcome, PolicyTable, ReferenceBank, SpreadStats,
};
use dynasc::channel::{db_to_linear, ChannelConfig, ChannelMode};
use dynasc::rng::seeded;
use dynasc::surface::{SurfaceMap, SurfaceParams};
use proptest::prelude::*;
use rand::Rng;

fn surface() -> SurfaceMap {
    SurfaceParams::default().generate(11, 300, (6000.0, 2000.0)).unwrap()
}

fn oracle_env(cfg: &LanderConfig, grid: dynasc::surface::CellGrid) -> EpisodeEnv<'_> {
    EpisodeEnv {
        cfg,
        grid,
        source: ObservationSource::Oracle,
        belief_model: ConfusionModel::symmetric(grid.len(), 1.0).unwrap(),
        dynamic_delta: false,
    }
}

#[test]
fn q_learning_matches_value_iteration() {
    let mut r = seeded(1);
    let n = 3;
    let next: Vec<Vec<Option<usize>>> = (0..n)
        .map(|s| (0..Action::COUNT).map(|a| if s == 2 && a < 3 { None } else { Some((s + a) % n) }).collect())
        .collect();
    let reward: Vec<Vec<f64>> = (0..n).map(|_| (0..Action::COUNT).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let discount = 0.9;
    let want = oracles::value_iteration(&next, &reward, discount);
    let mut policy = PolicyTable::new(n, 0.5, discount).unwrap();
    for _ in 0..2000 {
        for s in 0..n {
            for a in 0..Action::COUNT {
                policy.q_update(s, a, reward[s][a], next[s][a].map(|s2| (s2, &ALL_ALLOWED)));
            }
        }
    }
    for s in 0..n {
        for a in 0..Action::COUNT {
            assert!((policy.q[s][a] - want[s][a]).abs() < 1e-6, "Q({s},{a})");
        }
    }
}

#[test]
fn full_exploration_is_uniform() {
    let mut policy = PolicyTable::new(1, 0.1, 0.9).unwrap();
    policy.q[0][3] = 10.0;
    let mut r = seeded(2);
    let n = 100_000;
    let mut counts = [0usize; Action::COUNT];
    for _ in 0..n {
        counts[policy.choose(0, &ALL_ALLOWED, 1.0, &mut r)] += 1;
    }
    let p = 1.0 / Action::COUNT as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    for c in counts {
        assert!((c as f64 / n as f64 - p).abs() < 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn greedy_choice_ignores_positive_scaling() {
    let mut r = seeded(3);
    let mut policy = PolicyTable::new(1, 0.1, 0.9).unwrap();
    for _ in 0..100 {
        policy.q[0] = std::array::from_fn(|_| r.random_range(-5.0..5.0));
        let a = policy.choose(0, &ALL_ALLOWED, 0.0, &mut r);
        let scale = r.random_range(0.01..100.0);
        policy.q[0].iter_mut().for_each(|v| *v *= scale);
        assert_eq!(policy.choose(0, &ALL_ALLOWED, 0.0, &mut r), a);
    }
}

#[test]
fn two_observations_follow_bayes() {
    let n = 300;
    let m = ConfusionModel::symmetric(n, 0.8).unwrap();
    let (b1, _) = belief_update(&Belief::uniform(n), 42, &m).unwrap();
    let (b2, _) = belief_update(&b1, 42, &m).unwrap();
    let off = 0.2 / (n - 1) as f64;
    let z = 0.8 * 0.8 + (n - 1) as f64 * off * off;
    assert!((b2.probs[42] - 0.64 / z).abs() < 1e-12);
    assert!((b2.probs[7] - off * off / z).abs() < 1e-12);
}

#[test]
fn coasting_from_altitude_always_crashes() {
    let cfg = LanderConfig::default();
    let s = surface();
    let env = oracle_env(&cfg, s.cells);
    let mut policy = PolicyTable::new(cfg.key.n_keys(), 0.1, 0.99).unwrap();
    for q in &mut policy.q {
        q[Action::Coast.index()] = 1.0;
    }
    let logs = evaluate(&env, &policy, &SpreadStats::default(), 20, 4).unwrap();
    for l in &logs {
        assert_eq!(l.outcome, Outcome::Failure);
        let vz = l.steps.last().unwrap().velocity[2];
        assert!((vz.abs() - (2.0 * 1.62 * 2000.0f64).sqrt()).abs() < 2.0, "{vz}");
    }
}

#[test]
fn episodes_are_reproducible() {
    let cfg = LanderConfig::default();
    let s = surface();
    let bank = ReferenceBank::build(&s, cfg.footprint_m).unwrap();
    let ch = ChannelConfig::new(ChannelMode::Rician, 5.0, db_to_linear(3.0), 3e6).unwrap();
    let env = EpisodeEnv {
        source: ObservationSource::Pipeline {
            link: ImageLink {
                method: LinkMethod::DctBaseline,
                student: None,
                teacher: None,
                q_bits: 8,
                channel: Some(ch),
            },
            surface: &s,
            bank: &bank,
        },
        belief_model: ConfusionModel::symmetric(300, 0.7).unwrap(),
        ..oracle_env(&cfg, s.cells)
    };
    let policy = PolicyTable::new(cfg.key.n_keys(), 0.1, 0.99).unwrap();
    let a = evaluate(&env, &policy, &SpreadStats::default(), 3, 9).unwrap();
    let b = evaluate(&env, &policy, &SpreadStats::default(), 3, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identity_link_matches_the_oracle() {
    let mut cfg = LanderConfig::default();
    cfg.rl.episodes = 20_000;
    let s = surface();
    let bank = ReferenceBank::build(&s, cfg.footprint_m).unwrap();
    let oracle = oracle_env(&cfg, s.cells);
    let (policy, stats, _) = train_policy(&oracle, 5).unwrap();
    let piped = EpisodeEnv {
        source: ObservationSource::Pipeline {
            link: ImageLink {
                method: LinkMethod::Identity,
                student: None,
                teacher: None,
                q_bits: 8,
                channel: None,
            },
            surface: &s,
            bank: &bank,
        },
        ..oracle.clone()
    };
    let a = EvalSummary::from_logs(&evaluate(&oracle, &policy, &stats, 500, 6).unwrap());
    let b = EvalSummary::from_logs(&evaluate(&piped, &policy, &stats, 500, 6).unwrap());
    assert!((a.perfect_rate - b.perfect_rate).abs() <= 0.02);
    assert!((a.success_rate - b.success_rate).abs() <= 0.02);
    assert!((a.failure_rate - b.failure_rate).abs() <= 0.02);
    assert!(a.success_rate >= 0.9, "{a:?}");
}

#[test]
fn detection_degrades_with_noise() {
    let cfg = LanderConfig::default();
    let s = surface();
    let bank = ReferenceBank::build(&s, cfg.footprint_m).unwrap();
    let acc: Vec<f64> = [12.0, 6.0, 0.0]
        .iter()
        .map(|&db| {
            let link = ImageLink {
                method: LinkMethod::DctBaseline,
                student: None,
                teacher: None,
                q_bits: 8,
                channel: Some(ChannelConfig::new(ChannelMode::Awgn, 0.0, db_to_linear(db), 3e6).unwrap()),
            };
            calibrate_accuracy(&link, &s, &bank, 0.0, 1.0, 500, 8).unwrap()
        })
        .collect();
    assert!(acc[0] >= acc[1] && acc[1] >= acc[2], "{acc:?}");
    assert!(acc[0] > acc[2]);
}

#[test]
fn reward_standard_error_shrinks_with_episodes() {
    let cfg = LanderConfig::default();
    let s = surface();
    let env = EpisodeEnv {
        source: ObservationSource::Sampled(ConfusionModel::symmetric(300, 0.3).unwrap()),
        belief_model: ConfusionModel::symmetric(300, 0.3).unwrap(),
        ..oracle_env(&cfg, s.cells)
    };
    let mut policy = PolicyTable::new(cfg.key.n_keys(), 0.1, 0.99).unwrap();
    let mut r = seeded(12);
    for q in &mut policy.q {
        *q = std::array::from_fn(|_| r.random_range(0.0..1.0));
    }
    let big = EvalSummary::from_logs(&evaluate(&env, &policy, &SpreadStats::default(), 800, 13).unwrap());
    let small = EvalSummary::from_logs(&evaluate(&env, &policy, &SpreadStats::default(), 400, 14).unwrap());
    let ratio = small.reward_se / big.reward_se;
    assert!((ratio - 2f64.sqrt()).abs() < 0.3, "{ratio}");
}

#[test]
fn training_runs_are_seeded() {
    let mut cfg = LanderConfig::default();
    cfg.rl.episodes = 300;
    let s = surface();
    let env = oracle_env(&cfg, s.cells);
    let (a, sa, ra) = train_policy(&env, 1).unwrap();
    let (b, sb, rb) = train_policy(&env, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_eq!(ra, rb);
    let mut p = a.clone();
    let mut st = sa;
    let mut r = seeded(0);
    let mode = EpisodeMode { epsilon: 0.0, learn: false };
    let log = env.run(&mut p, &mut st, mode, r.random()).unwrap();
    assert_eq!(p, a);
    assert!(log.steps.len() > cfg.free_fall_steps);
}

proptest! {
    #[test]
    fn prop1_holds(s2 in 1e-9f64..1e3, gap in 1e-9f64..1e3, eps in 1e-3f64..1e2) {
        prop_assert!(prop1_rate_check(s2 + gap, s2, eps).unwrap());
    }

    #[test]
    fn keep_ratio_stays_in_range(g in -50.0f64..50.0, kappa in 0.01f64..10.0, dmin in 0.0f64..0.9) {
        let d = delta_from_gradient(g, kappa, dmin);
        prop_assert!((dmin..=1.0).contains(&d));
    }

    #[test]
    fn keep_ratio_decreases_before_clamping(g in -5.0f64..5.0, step in 1e-3f64..1.0) {
        prop_assert!(delta_from_gradient(g + step, 1.0, 0.0) < delta_from_gradient(g, 1.0, 0.0));
    }

    #[test]
    fn beliefs_stay_normalized(seed in 0u64..500, z in 0usize..6) {
        let n = 6;
        let mut r = seeded(seed);
        let mut probs = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
            let s: f64 = row.iter().sum();
            probs.extend(row.iter().map(|v| v / s));
        }
        let m = ConfusionModel::matrix(n, probs).unwrap();
        let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        let b = Belief { probs: raw.iter().map(|v| v / s).collect() };
        let (b2, _) = belief_update(&b, z, &m).unwrap();
        prop_assert!((b2.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(b2.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn free_fall_is_exact(steps in 1usize..40, z0 in 3000.0f64..5000.0) {
        let cfg = LanderConfig::default();
        let mut x = LanderState::at_rest([100.0, 100.0, z0], 0);
        for _ in 0..steps {
            prop_assert!(action_allowed(&x, Action::Coast, &cfg.dynamics));
            x = dynamics_step(&x, Action::Coast, &cfg.dynamics);
        }
        prop_assert!((x.velocity[2] + 1.62 * steps as f64).abs() < 1e-9);
    }
}
