//! Experiment runners behind the command line. Each runner returns typed
//! rows; the `*_table` functions turn them into CSV tables.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use crate::baseline::dct_encode;
use crate::channel::{q_function, ChannelConfig, ChannelMode};
use crate::codec::{corpus, train, CodecParams, LossParts};
use crate::error::{Error, Result};
use crate::lander::{
    calibrate_accuracy, capture_target, evaluate, train_policy, ConfusionModel, EpisodeEnv, EpisodeLog, EvalSummary,
    ImageLink, LinkMethod, ObservationSource, Outcome, PolicyTable, ReferenceBank, SpreadStats,
};
use crate::latency::{compute_energy, compute_time, prob_time_reduction, prob_time_reduction_mc, timing_report};
use crate::metrics;
use crate::rng::{derive_seed, stream};
use crate::surface::SurfaceMap;

pub use config::{Experiment, ExperimentConfig, SnrPoint};
pub use report::{num, Table};

const TAG_TRAIN: u64 = 1;
const TAG_RECON: u64 = 2;
const TAG_DETECT: u64 = 3;
const TAG_TIMING: u64 = 4;
const TAG_PROP2: u64 = 5;
const TAG_POLICY: u64 = 6;
const TAG_CALIBRATE: u64 = 7;
const TAG_EVAL: u64 = 8;

/// Methods compared in the image sweeps, in report order.
pub const METHODS: [LinkMethod; 3] = [LinkMethod::Dynasc, LinkMethod::DenseTeacher, LinkMethod::DctBaseline];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    TrainCodec,
    EvalReconstruction,
    EvalTiming,
    EvalDetection,
    Landing,
    Prop2Table,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codecs {
    pub teacher: CodecParams,
    pub student: CodecParams,
}

impl Codecs {
    /// Reads the parameter files named in the config.
    pub fn load(exp: &Experiment) -> Result<Self> {
        let c = &exp.cfg.codec;
        let read = |p: &Option<PathBuf>, what: &str| -> Result<CodecParams> {
            let p = p.as_ref().ok_or_else(|| {
                Error::Config(format!("codec.{what}_path is required (produce it with train-codec)"))
            })?;
            let params = CodecParams::load(exp.resolve(p))?;
            if params.dims != c.dims {
                return Err(Error::Config(format!("{} does not match codec.dims", p.display())));
            }
            Ok(params)
        };
        Ok(Self {
            teacher: read(&c.teacher_path, "teacher")?,
            student: read(&c.student_path, "student")?,
        })
    }

    pub fn link(&self, method: LinkMethod, q_bits: u8, channel: Option<ChannelConfig>) -> ImageLink<'_> {
        ImageLink {
            method,
            student: Some(&self.student),
            teacher: Some(&self.teacher),
            q_bits,
            channel,
        }
    }
}

/// Terrain and the per-cell reference images shared by the image and
/// landing experiments.
#[derive(Clone, Debug)]
pub struct Scene {
    pub surface: SurfaceMap,
    pub bank: ReferenceBank,
}

impl Scene {
    pub fn build(exp: &Experiment) -> Result<Self> {
        let s = &exp.cfg.surface;
        let surface = s.terrain.generate(s.seed, s.crater_count, s.size_m)?;
        let bank = ReferenceBank::build(&surface, exp.cfg.lander.footprint_m)?;
        Ok(Self { surface, bank })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedCodecs {
    pub codecs: Codecs,
    pub teacher_log: Vec<LossParts>,
    pub student_log: Vec<LossParts>,
}

/// Teacher then student on the configured corpus.
pub fn train_codecs(exp: &Experiment) -> Result<TrainedCodecs> {
    let c = &exp.cfg.codec;
    let spec = c
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Config("codec.corpus is required to train (give at least its seed)".into()))?;
    let images = corpus::render_corpus(spec, c.dims.image_side())?;
    let data = corpus::to_patches(&images, &c.dims)?;
    let mut r = stream(exp.seed, TAG_TRAIN);
    let (teacher, tlog) = train::train_teacher(&data, c.dims, &c.train, &mut r)?;
    let (student, slog) = train::train_student(&data, &teacher, &c.train, &mut r)?;
    Ok(TrainedCodecs {
        codecs: Codecs { teacher, student },
        teacher_log: tlog.epochs,
        student_log: slog.epochs,
    })
}

pub fn loss_table(t: &TrainedCodecs) -> Table {
    let mut table = Table::new("codec_loss.csv", &["phase", "epoch", "mse", "kl", "sparsity", "distill", "total"]);
    for (phase, log) in [("teacher", &t.teacher_log), ("student", &t.student_log)] {
        for (i, e) in log.iter().enumerate() {
            table.push(vec![
                phase.into(),
                i.to_string(),
                num(e.mse),
                num(e.kl),
                num(e.sparsity),
                num(e.distill),
                num(e.total),
            ]);
        }
    }
    table
}

/// Scene for trial `i`: target index and captured image. Every method and
/// SNR sees the same scenes.
fn trial_scene(exp: &Experiment, scene: &Scene, tag: u64, i: usize) -> Result<(usize, crate::surface::CameraImage, u64)> {
    let seed = derive_seed(derive_seed(exp.seed, tag), i as u64);
    let mut r = stream(seed, 0);
    let target = rand::Rng::random_range(&mut r, 0..scene.bank.len());
    let img = capture_target(
        &scene.surface,
        scene.bank.cells.cell(target),
        scene.bank.footprint_m,
        exp.cfg.lander.jitter_m,
        &mut r,
    )?;
    Ok((target, img, seed))
}

fn sweep_points(exp: &Experiment) -> Vec<(ChannelMode, LinkMethod, SnrPoint)> {
    let mut out = Vec::new();
    for &mode in &exp.cfg.channel.modes {
        for m in METHODS {
            for &snr in &exp.grid {
                out.push((mode, m, snr));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconRow {
    pub snr_db: f64,
    pub method: LinkMethod,
    pub channel: ChannelMode,
    pub mean_psnr: f64,
    pub std_psnr: f64,
}

pub fn eval_reconstruction(exp: &Experiment, codecs: &Codecs, scene: &Scene) -> Result<Vec<ReconRow>> {
    let c = &exp.cfg.codec;
    let scenes: Vec<_> = (0..exp.cfg.trials)
        .map(|i| trial_scene(exp, scene, TAG_RECON, i))
        .collect::<Result<_>>()?;
    sweep_points(exp)
        .into_iter()
        .map(|(mode, method, snr)| {
            let link = codecs.link(method, c.q_bits, Some(exp.channel(mode, snr)?));
            let psnr: Vec<f64> = scenes
                .iter()
                .map(|(_, img, seed)| {
                    let rx = link.deliver(&link.encode(img, c.delta)?, &mut stream(*seed, 1))?;
                    Ok(metrics::psnr(&img.pixels, &rx.image.pixels))
                })
                .collect::<Result<_>>()?;
            Ok(ReconRow {
                snr_db: snr.db,
                method,
                channel: mode,
                mean_psnr: metrics::mean(&psnr),
                std_psnr: metrics::std_dev(&psnr),
            })
        })
        .collect()
}

pub fn reconstruction_table(rows: &[ReconRow]) -> Table {
    let mut t = Table::new("reconstruction.csv", &["snr_db", "method", "channel", "mean_psnr", "std"]);
    for r in rows {
        t.push(vec![
            num(r.snr_db),
            r.method.name().into(),
            r.channel.name().into(),
            num(r.mean_psnr),
            num(r.std_psnr),
        ]);
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRow {
    pub snr_db: f64,
    pub method: LinkMethod,
    pub channel: ChannelMode,
    pub accuracy: f64,
    pub trials: usize,
}

pub fn eval_detection(exp: &Experiment, codecs: &Codecs, scene: &Scene) -> Result<Vec<DetectionRow>> {
    let c = &exp.cfg.codec;
    let seed = derive_seed(exp.seed, TAG_DETECT);
    sweep_points(exp)
        .into_iter()
        .map(|(mode, method, snr)| {
            let link = codecs.link(method, c.q_bits, Some(exp.channel(mode, snr)?));
            let trials = exp.cfg.detection_trials;
            let accuracy = calibrate_accuracy(
                &link,
                &scene.surface,
                &scene.bank,
                exp.cfg.lander.jitter_m,
                c.delta,
                trials,
                seed,
            )?;
            Ok(DetectionRow {
                snr_db: snr.db,
                method,
                channel: mode,
                accuracy,
                trials,
            })
        })
        .collect()
}

pub fn detection_table(rows: &[DetectionRow]) -> Table {
    let mut t = Table::new("detection.csv", &["snr_db", "method", "channel", "accuracy", "trials"]);
    for r in rows {
        t.push(vec![
            num(r.snr_db),
            r.method.name().into(),
            r.channel.name().into(),
            num(r.accuracy),
            r.trials.to_string(),
        ]);
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub snr_db: f64,
    pub method: LinkMethod,
    pub channel: ChannelMode,
    pub bits: usize,
    pub t_c: f64,
    pub t_d: f64,
    pub total: f64,
    /// Time saved against sending the baseline stream raw.
    pub delta_t: f64,
    pub g_t: f64,
    pub p_improve: f64,
    pub e_c: f64,
    pub e_d: f64,
}

/// Mean encoder cost and payload size of one method over the trial images.
fn method_cost(exp: &Experiment, codecs: &Codecs, images: &[crate::surface::CameraImage], method: LinkMethod) -> Result<(f64, f64, usize)> {
    let c = &exp.cfg.codec;
    let cm = &exp.cfg.cost_model;
    if method == LinkMethod::DctBaseline {
        let bits = dct_encode(&images[0], c.q_bits)?.bit_size();
        return Ok((cm.baseline_time_s, cm.baseline_energy_j, bits));
    }
    let model = cm.codec_model(&c.dims)?;
    let link = codecs.link(method, c.q_bits, None);
    let n = c.dims.n_tokens();
    let (mut tc, mut ec, mut bits) = (Vec::new(), Vec::new(), Vec::new());
    for img in images {
        let tx = link.transmit(img, c.delta, &mut stream(0, 0))?;
        tc.push(compute_time(&model, n, &tx.stage_masks)?);
        ec.push(compute_energy(&model, n, &tx.stage_masks)?);
        bits.push(tx.bits as f64);
    }
    Ok((metrics::mean(&tc), metrics::mean(&ec), metrics::mean(&bits).round() as usize))
}

/// Operational encoder time from the masks the trained predictor produces,
/// transmission time at the mean SNR, and the Prop. 2 style threshold
/// against the raw baseline stream.
pub fn eval_timing(exp: &Experiment, codecs: &Codecs, scene: &Scene) -> Result<Vec<TimingRow>> {
    let images: Vec<_> = (0..exp.cfg.trials)
        .map(|i| trial_scene(exp, scene, TAG_TIMING, i).map(|(_, img, _)| img))
        .collect::<Result<_>>()?;
    let costs: Vec<(LinkMethod, (f64, f64, usize))> = METHODS
        .iter()
        .map(|&m| method_cost(exp, codecs, &images, m).map(|c| (m, c)))
        .collect::<Result<_>>()?;
    let z_raw = costs
        .iter()
        .find(|(m, _)| *m == LinkMethod::DctBaseline)
        .map(|(_, c)| c.2)
        .expect("baseline is always costed");
    let e_bit = exp.cfg.cost_model.e_bit;
    let mut rows = Vec::new();
    for &mode in &exp.cfg.channel.modes {
        for &(method, (t_c, e_c, bits)) in &costs {
            for &snr in &exp.grid {
                let ch = exp.channel(mode, snr)?;
                let rep = timing_report(z_raw, bits, t_c, &ch, snr.linear)?;
                rows.push(TimingRow {
                    snr_db: snr.db,
                    method,
                    channel: mode,
                    bits,
                    t_c: rep.t_c,
                    t_d: rep.t_d,
                    total: rep.total,
                    delta_t: rep.delta_t,
                    g_t: rep.g_t,
                    p_improve: rep.p_improve,
                    e_c,
                    e_d: e_bit * bits as f64,
                });
            }
        }
    }
    Ok(rows)
}

pub fn timing_table(rows: &[TimingRow]) -> Table {
    let mut t = Table::new(
        "timing.csv",
        &[
            "snr_db", "method", "channel", "bits", "t_c", "t_d", "total", "delta_t", "g_t", "p_improve", "e_c", "e_d",
            "e_total",
        ],
    );
    for r in rows {
        t.push(vec![
            num(r.snr_db),
            r.method.name().into(),
            r.channel.name().into(),
            r.bits.to_string(),
            num(r.t_c),
            num(r.t_d),
            num(r.total),
            num(r.delta_t),
            num(r.g_t),
            num(r.p_improve),
            num(r.e_c),
            num(r.e_d),
            num(r.e_c + r.e_d),
        ]);
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prop2Row {
    pub k_factor: f64,
    pub ebn0_db: f64,
    pub g_t: f64,
    pub p_integral: f64,
    pub p_montecarlo: f64,
    /// Standard error of the Monte Carlo estimate, taken at the integral's
    /// value so that degenerate estimates keep a meaningful scale.
    pub se: f64,
}

impl Prop2Row {
    pub fn abs_diff(&self) -> f64 {
        (self.p_integral - self.p_montecarlo).abs()
    }

    pub fn within_3se(&self) -> bool {
        self.abs_diff() <= 3.0 * self.se
    }
}

pub fn prop2_table_rows(exp: &Experiment) -> Result<Vec<Prop2Row>> {
    let p2 = &exp.cfg.prop2;
    let master = derive_seed(exp.seed, TAG_PROP2);
    let mut rows = Vec::new();
    for &k in &p2.k_factors {
        for &db in &p2.ebn0_db {
            for &g in &p2.g_values {
                let cfg = ChannelConfig::new(
                    ChannelMode::Rician,
                    k,
                    crate::channel::db_to_linear(db),
                    exp.cfg.channel.bandwidth_hz,
                )?;
                let p = prob_time_reduction(g, &cfg)?;
                let mut r = stream(master, rows.len() as u64);
                let (mc, _) = prob_time_reduction_mc(g, &cfg, p2.mc_samples, &mut r);
                rows.push(Prop2Row {
                    k_factor: k,
                    ebn0_db: db,
                    g_t: g,
                    p_integral: p,
                    p_montecarlo: mc,
                    se: (p * (1.0 - p) / p2.mc_samples as f64).sqrt(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn prop2_table(rows: &[Prop2Row]) -> Table {
    let mut t = Table::new(
        "prop2.csv",
        &["K", "ebn0_db", "G_t", "p_integral", "p_montecarlo", "se", "abs_diff", "within_3se"],
    );
    for r in rows {
        t.push(vec![
            num(r.k_factor),
            num(r.ebn0_db),
            num(r.g_t),
            num(r.p_integral),
            num(r.p_montecarlo),
            num(r.se),
            num(r.abs_diff()),
            r.within_3se().to_string(),
        ]);
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub method: LinkMethod,
    pub channel: ChannelMode,
    pub snr_db: f64,
    /// Smoothed detection accuracy fed to the belief filter.
    pub calibrated_accuracy: f64,
    pub summary: EvalSummary,
    /// Per-episode total reward, in episode order.
    pub rewards: Vec<f64>,
    pub outcomes: Vec<Outcome>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub channel: ChannelMode,
    pub snr_db: f64,
    pub semcom: LinkMethod,
    pub e_r_s: f64,
    pub se_s: f64,
    pub e_r_g: f64,
    pub se_g: f64,
    /// Mean of per-episode differences; episodes share seeds across links.
    pub diff: f64,
    pub se_diff: f64,
    /// One-sided p-value of `diff <= 0`.
    pub p_value: f64,
}

#[derive(Clone, Debug)]
pub struct LandingResult {
    pub policy: PolicyTable,
    pub stats: SpreadStats,
    pub train_rewards: Vec<f64>,
    pub sweep: Vec<SweepRow>,
    pub trajectories: Vec<EpisodeLog>,
    pub compare: Vec<CompareRow>,
}

/// Trains one policy with the target known, then evaluates it through every
/// link. Each link's belief filter uses a symmetric likelihood whose
/// diagonal is the link's calibrated detection accuracy, smoothed as
/// `(hits + 1) / (trials + 2)`. `progress` sees every finished sweep row.
pub fn landing(
    exp: &Experiment,
    codecs: &Codecs,
    scene: &Scene,
    progress: &mut dyn FnMut(&SweepRow),
) -> Result<LandingResult> {
    let cfg = &exp.cfg.lander;
    let land = &exp.cfg.landing;
    let grid = scene.bank.cells;
    let n = grid.len();
    let oracle = EpisodeEnv {
        cfg,
        grid,
        source: ObservationSource::Oracle,
        belief_model: ConfusionModel::symmetric(n, 1.0)?,
        dynamic_delta: true,
    };
    let (policy, stats, train_rewards) = train_policy(&oracle, derive_seed(exp.seed, TAG_POLICY))?;
    let top = exp.grid.iter().map(|p| p.db).fold(f64::NEG_INFINITY, f64::max);
    let traj_snr = land.trajectory_snr_db.unwrap_or(top);
    let mut sweep = Vec::new();
    let mut trajectories = None;
    for &mode in &exp.cfg.channel.modes {
        for &method in &land.methods {
            for &snr in &exp.grid {
                let link = codecs.link(method, exp.cfg.codec.q_bits, Some(exp.channel(mode, snr)?));
                let dynamic = method == LinkMethod::Dynasc;
                let calib_delta = if dynamic { cfg.rl.delta_min } else { 1.0 };
                let trials = land.calibration_trials;
                let acc = calibrate_accuracy(
                    &link,
                    &scene.surface,
                    &scene.bank,
                    cfg.jitter_m,
                    calib_delta,
                    trials,
                    derive_seed(exp.seed, TAG_CALIBRATE),
                )?;
                let hits = (acc * trials as f64).round();
                let smoothed = ((hits + 1.0) / (trials as f64 + 2.0)).max(1.0 / n as f64);
                let env = EpisodeEnv {
                    source: ObservationSource::Pipeline {
                        link,
                        surface: &scene.surface,
                        bank: &scene.bank,
                    },
                    belief_model: ConfusionModel::symmetric(n, smoothed)?,
                    dynamic_delta: dynamic,
                    ..oracle.clone()
                };
                let logs = evaluate(&env, &policy, &stats, land.eval_episodes, derive_seed(exp.seed, TAG_EVAL))?;
                if trajectories.is_none()
                    && method == land.trajectory_method
                    && mode == land.trajectory_channel
                    && snr.db == traj_snr
                {
                    trajectories = Some(logs.iter().take(land.trajectory_episodes).cloned().collect());
                }
                let row = SweepRow {
                    method,
                    channel: mode,
                    snr_db: snr.db,
                    calibrated_accuracy: smoothed,
                    summary: EvalSummary::from_logs(&logs),
                    rewards: logs.iter().map(|l| l.total_reward).collect(),
                    outcomes: logs.iter().map(|l| l.outcome).collect(),
                };
                progress(&row);
                sweep.push(row);
            }
        }
    }
    let trajectories = trajectories.ok_or_else(|| {
        Error::Config(format!(
            "trajectory point ({}, {}, {traj_snr} dB) is not part of the landing sweep",
            land.trajectory_method.name(),
            land.trajectory_channel.name()
        ))
    })?;
    let compare = compare_rows(&sweep);
    Ok(LandingResult {
        policy,
        stats,
        train_rewards,
        sweep,
        trajectories,
        compare,
    })
}

/// Each semantic method against the baseline at equal channel and SNR.
pub fn compare_rows(sweep: &[SweepRow]) -> Vec<CompareRow> {
    let mut out = Vec::new();
    for s in sweep.iter().filter(|r| r.method.is_semantic()) {
        let Some(g) = sweep
            .iter()
            .find(|r| r.method == LinkMethod::DctBaseline && r.channel == s.channel && r.snr_db == s.snr_db)
        else {
            continue;
        };
        let d: Vec<f64> = s.rewards.iter().zip(&g.rewards).map(|(a, b)| a - b).collect();
        let diff = metrics::mean(&d);
        let se_diff = metrics::std_error(&d);
        let p_value = if se_diff > 0.0 {
            q_function(diff / se_diff)
        } else if diff > 0.0 {
            0.0
        } else {
            1.0
        };
        out.push(CompareRow {
            channel: s.channel,
            snr_db: s.snr_db,
            semcom: s.method,
            e_r_s: s.summary.mean_reward,
            se_s: s.summary.reward_se,
            e_r_g: g.summary.mean_reward,
            se_g: g.summary.reward_se,
            diff,
            se_diff,
            p_value,
        });
    }
    out
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(
        "landing_sweep.csv",
        &[
            "method",
            "channel",
            "snr_db",
            "episodes",
            "calibrated_accuracy",
            "mean_reward",
            "reward_se",
            "perfect_rate",
            "success_rate",
            "failure_rate",
            "mean_bits",
            "mean_delta",
        ],
    );
    for r in rows {
        let s = &r.summary;
        t.push(vec![
            r.method.name().into(),
            r.channel.name().into(),
            num(r.snr_db),
            s.episodes.to_string(),
            num(r.calibrated_accuracy),
            num(s.mean_reward),
            num(s.reward_se),
            num(s.perfect_rate),
            num(s.success_rate),
            num(s.failure_rate),
            num(s.mean_bits),
            num(s.mean_delta),
        ]);
    }
    t
}

pub fn compare_table(rows: &[CompareRow]) -> Table {
    let mut t = Table::new(
        "landing_compare.csv",
        &["channel", "snr_db", "semcom", "e_r_s", "se_s", "e_r_g", "se_g", "diff", "se_diff", "p_value"],
    );
    for r in rows {
        t.push(vec![
            r.channel.name().into(),
            num(r.snr_db),
            r.semcom.name().into(),
            num(r.e_r_s),
            num(r.se_s),
            num(r.e_r_g),
            num(r.se_g),
            num(r.diff),
            num(r.se_diff),
            num(r.p_value),
        ]);
    }
    t
}

pub fn trajectory_table(logs: &[EpisodeLog]) -> Table {
    let mut header = vec!["episode"];
    header.extend(crate::lander::episode::EPISODE_CSV_HEADER);
    let mut t = Table::new("landing_trajectory.csv", &header);
    for (i, l) in logs.iter().enumerate() {
        for row in l.csv_rows(Some(i)) {
            t.push(row);
        }
    }
    t
}

/// Mean training reward over consecutive blocks of episodes.
pub fn training_table(rewards: &[f64]) -> Table {
    let mut t = Table::new("landing_training.csv", &["first_episode", "episodes", "mean_reward"]);
    let block = (rewards.len() / 20).max(1);
    for (i, chunk) in rewards.chunks(block).enumerate() {
        t.push(vec![(i * block).to_string(), chunk.len().to_string(), num(metrics::mean(chunk))]);
    }
    t
}

/// Runs `cmd` and writes its tables (and parameter files) under `out`.
pub fn run_command(cmd: Command, exp: &Experiment, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<Vec<PathBuf>> {
    let hash = exp.config_hash();
    let write_all = |tables: &[Table]| -> Result<Vec<PathBuf>> { tables.iter().map(|t| t.write(out, &hash)).collect() };
    match cmd {
        Command::TrainCodec => {
            let trained = train_codecs(exp)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let tp = out.join("teacher.dsc");
            let sp = out.join("student.dsc");
            trained.codecs.teacher.save(&tp)?;
            trained.codecs.student.save(&sp)?;
            let mut paths = vec![tp, sp];
            paths.extend(write_all(&[loss_table(&trained)])?);
            Ok(paths)
        }
        Command::EvalReconstruction => {
            let (codecs, scene) = (Codecs::load(exp)?, Scene::build(exp)?);
            write_all(&[reconstruction_table(&eval_reconstruction(exp, &codecs, &scene)?)])
        }
        Command::EvalDetection => {
            let (codecs, scene) = (Codecs::load(exp)?, Scene::build(exp)?);
            write_all(&[detection_table(&eval_detection(exp, &codecs, &scene)?)])
        }
        Command::EvalTiming => {
            let (codecs, scene) = (Codecs::load(exp)?, Scene::build(exp)?);
            write_all(&[timing_table(&eval_timing(exp, &codecs, &scene)?)])
        }
        Command::Prop2Table => write_all(&[prop2_table(&prop2_table_rows(exp)?)]),
        Command::Landing => {
            let (codecs, scene) = (Codecs::load(exp)?, Scene::build(exp)?);
            let mut report = |r: &SweepRow| {
                progress(&format!(
                    "{} {} {} dB: reward {:.1}, success {:.3}",
                    r.method.name(),
                    r.channel.name(),
                    r.snr_db,
                    r.summary.mean_reward,
                    r.summary.success_rate
                ))
            };
            let res = landing(exp, &codecs, &scene, &mut report)?;
            write_all(&[
                trajectory_table(&res.trajectories),
                sweep_table(&res.sweep),
                compare_table(&res.compare),
                training_table(&res.train_rewards),
            ])
        }
    }
}
