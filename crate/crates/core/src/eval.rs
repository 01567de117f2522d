//! Prediction-quality evaluation and the planning benchmark.

use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distractor::{identify, inpaint, IdentificationReport, IdentifyConfig};
use crate::error::Error;
use crate::frame::{Frame, Rect, HEIGHT, WIDTH};
use crate::metrics::{mean_std, proxy_perceptual, ssim};
use crate::mpc::{plan_baseline, plan_reoi, plan_trustregion, Intervention, Mode, Observation, PlanResult, PlannerConfig, Verdict};
use crate::rng::purpose::{PLANNER, SCENE};
use crate::rng::{derive_seed, normal, rng_for};
use crate::sim::{
    check_outcome, init_scene, Action, render, rollout_states, scripted_policy, ActionPlan, Category, ObjectSpec, Pos, Role, SceneConfig,
    SceneState, Shape, CONTAINER_SIZE, GRIPPER_SIZE, NOVEL_PALETTE, TRAINING_PALETTE,
};
use crate::trustregion::{query_input, QueryResult, TrustRegion};
use crate::wm::{Trajectory, TrajectoryMeta, WorldModel};

const HEIGHT_F: f64 = HEIGHT as f64;
const WIDTH_F: f64 = WIDTH as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Baseline,
    Reoi,
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::Baseline => "baseline",
            EvalMode::Reoi => "reoi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [EvalMode::Baseline, EvalMode::Reoi].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self { mean, std }
    }
}

/// A scene with its executed ground-truth trajectory.
#[derive(Clone, Debug)]
pub struct EvalScene {
    pub state: SceneState,
    pub plan: ActionPlan,
    /// Rendered frames `0..=T`.
    pub frames: Vec<Frame>,
}

impl EvalScene {
    pub fn execute(state: SceneState, plan: ActionPlan) -> Self {
        let frames = rollout_states(&state, &plan).iter().map(|s| render(s).frame).collect();
        Self { state, plan, frames }
    }
}

/// Random scenes with `n_novel` distractors, each paired with a noisy
/// scripted plan executed in the simulator.
pub fn eval_scenes(global_seed: u64, n: usize, n_novel: usize, noise: f64) -> Result<Vec<EvalScene>, Error> {
    (0..n as u64)
        .map(|i| {
            let cfg = SceneConfig { n_novel, ..Default::default() };
            let state = init_scene(&cfg, derive_seed(global_seed, i, SCENE))?;
            let plan = scripted_policy(&state, &state.task(), noise, &mut rng_for(global_seed, i, PLANNER));
            Ok(EvalScene::execute(state, plan))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub ssim_full: f64,
    pub proxy_full: f64,
    pub ssim_indist: f64,
    pub proxy_indist: f64,
    pub n_flagged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredReport {
    pub mode: EvalMode,
    pub ssim_full: Stat,
    pub proxy_perceptual_full: Stat,
    pub ssim_indist: Stat,
    pub proxy_perceptual_indist: Stat,
    pub n_scenes: usize,
    pub horizon: usize,
    pub scenes: Vec<SceneScore>,
}

/// Scores one scene: frames `1..=T` of the prediction against the executed
/// trajectory, first as-is and then with the flagged regions inpainted in both.
pub fn score_scene(model: &WorldModel, scene: &EvalScene, mode: EvalMode, config: &IdentifyConfig) -> Result<SceneScore, Error> {
    let frame0 = &scene.frames[0];
    let task = scene.state.task();
    let report = identify(model, frame0, &task, config)?;
    let pred = match mode {
        EvalMode::Baseline => model.rollout(frame0, &[], &scene.plan)?,
        EvalMode::Reoi => Intervention::new(frame0, &report, None)?.rollout(model, &scene.plan)?,
    };
    let truth = &scene.frames[1..];
    let mut sf = Vec::with_capacity(pred.len());
    let mut pf = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(truth) {
        sf.push(ssim(p, g)?);
        pf.push(proxy_perceptual(p, g)?);
    }
    let (si, pi) = match report.flagged_union() {
        Some(u) if !u.is_full() => {
            let mut si = Vec::with_capacity(pred.len());
            let mut pi = Vec::with_capacity(pred.len());
            for (p, g) in pred.iter().zip(truth) {
                let (p, g) = (inpaint(p, &u)?, inpaint(g, &u)?);
                si.push(ssim(&p, &g)?);
                pi.push(proxy_perceptual(&p, &g)?);
            }
            (si, pi)
        }
        _ => (sf.clone(), pf.clone()),
    };
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(SceneScore {
        ssim_full: avg(&sf),
        proxy_full: avg(&pf),
        ssim_indist: avg(&si),
        proxy_indist: avg(&pi),
        n_flagged: report.flagged.len(),
    })
}

pub fn summarize_pred(mode: EvalMode, scores: Vec<SceneScore>, horizon: usize) -> Result<PredReport, Error> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let col = |f: fn(&SceneScore) -> f64| Stat::of(&scores.iter().map(f).collect::<Vec<_>>());
    Ok(PredReport {
        mode,
        ssim_full: col(|s| s.ssim_full),
        proxy_perceptual_full: col(|s| s.proxy_full),
        ssim_indist: col(|s| s.ssim_indist),
        proxy_perceptual_indist: col(|s| s.proxy_indist),
        n_scenes: scores.len(),
        horizon,
        scenes: scores,
    })
}

pub fn eval_pred(model: &WorldModel, scenes: &[EvalScene], mode: EvalMode, config: &IdentifyConfig) -> Result<PredReport, Error> {
    let scores = scenes.iter().map(|s| score_scene(model, s, mode, config)).collect::<Result<Vec<_>, _>>()?;
    summarize_pred(mode, scores, scenes.first().map_or(0, |s| s.plan.len()))
}

/// Geometry of the planning benchmark: a target and a container some way
/// apart, with one novel distractor placed beside the straight carry line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSceneConfig {
    /// Distance from the target to the goal centre.
    pub carry_distance: f64,
    /// Perpendicular offset of the distractor from the carry line.
    pub lateral_offset: f64,
    /// Distractor size range.
    pub distractor_size: (f64, f64),
    pub target_size: f64,
}

impl Default for BenchSceneConfig {
    fn default() -> Self {
        Self { carry_distance: 30.0, lateral_offset: 9.0, distractor_size: (10.0, 12.0), target_size: 9.0 }
    }
}

const BENCH_ATTEMPTS: usize = 200;
const SPAWN_CLEARANCE: f64 = 4.0;

/// Builds a benchmark scene. The gripper starts one step from the target.
pub fn bench_scene(config: &BenchSceneConfig, seed: u64) -> Result<SceneState, Error> {
    let mut rng = crate::rng::seeded(seed);
    let half_c = CONTAINER_SIZE / 2.0;
    for _ in 0..BENCH_ATTEMPTS {
        let g = Pos::new(rng.gen_range(half_c + 1.0..WIDTH_F - half_c - 1.0), rng.gen_range(half_c + 1.0..HEIGHT_F - half_c - 1.0));
        let theta = rng.gen_range(0.0..2.0 * PI);
        let (ux, uy) = (libm::cos(theta), libm::sin(theta));
        let t = Pos::new(g.x + config.carry_distance * ux, g.y + config.carry_distance * uy);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let m = Pos::new(
            0.5 * (g.x + t.x) - side * config.lateral_offset * uy,
            0.5 * (g.y + t.y) + side * config.lateral_offset * ux,
        );
        let phi = rng.gen_range(0.0..2.0 * PI);
        let grip = Pos::new(t.x + 6.0 * libm::cos(phi), t.y + 6.0 * libm::sin(phi));
        let d_size = libm::round(rng.gen_range(config.distractor_size.0..=config.distractor_size.1));
        let inside = |p: Pos, half: f64| p.x - half >= 1.0 && p.y - half >= 1.0 && p.x + half <= WIDTH_F - 1.0 && p.y + half <= HEIGHT_F - 1.0;
        if !(inside(t, config.target_size / 2.0) && inside(m, d_size / 2.0) && inside(grip, GRIPPER_SIZE / 2.0)) {
            continue;
        }
        // a gripper spawned against the distractor collides before any plan runs
        let reach = GRIPPER_SIZE / 2.0 + d_size / 2.0 + SPAWN_CLEARANCE;
        if libm::fabs(grip.x - m.x) < reach && libm::fabs(grip.y - m.y) < reach {
            continue;
        }
        let gr = Rect::new(
            libm::round(g.y - half_c) as usize,
            libm::round(g.x - half_c) as usize,
            libm::round(g.y + half_c) as usize,
            libm::round(g.x + half_c) as usize,
        );
        let (gcy, gcx) = gr.center();
        let ci = rng.gen_range(0..TRAINING_PALETTE.len());
        let mut ti = rng.gen_range(0..TRAINING_PALETTE.len() - 1);
        if ti >= ci {
            ti += 1;
        }
        let shape = [Shape::Triangle, Shape::Rect, Shape::Circle][rng.gen_range(0..3)];
        let color = NOVEL_PALETTE[rng.gen_range(0..NOVEL_PALETTE.len())];
        let objects = alloc::vec![
            ObjectSpec {
                id: 1,
                shape: Shape::Rect,
                color: TRAINING_PALETTE[ci],
                center: Pos::new(gcx, gcy),
                size: CONTAINER_SIZE,
                depth_rank: 0,
                category: Category::Training,
                role: Role::Container,
            },
            ObjectSpec {
                id: 2,
                shape: if rng.gen_bool(0.5) { Shape::Circle } else { Shape::Rect },
                color: TRAINING_PALETTE[ti],
                center: t,
                size: config.target_size,
                depth_rank: 1,
                category: Category::Training,
                role: Role::Target,
            },
            ObjectSpec { id: 3, shape, color, center: m, size: d_size, depth_rank: 2, category: Category::Novel, role: Role::Distractor },
        ];
        return Ok(SceneState { objects, gripper: grip, grip_closed: false, held: None, goal_region: gr, rng_seed: seed, tick: 0 });
    }
    Err(Error::Placement { index: 0, attempts: BENCH_ATTEMPTS })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub global_seed: u64,
    pub episodes: usize,
    pub modes: Vec<Mode>,
    pub planner: PlannerConfig,
    pub scene: BenchSceneConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            global_seed: 0,
            episodes: 20,
            modes: Mode::ALL.to_vec(),
            planner: PlannerConfig::default(),
            scene: BenchSceneConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub mode: Mode,
    pub chosen: Option<usize>,
    pub n_rejected: usize,
    pub success: bool,
    pub collision: bool,
    pub needs_human: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub needs_human_rate: f64,
    pub n_episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub modes: Vec<ModeSummary>,
    pub episodes: Vec<EpisodeRecord>,
}

impl BenchReport {
    pub fn mode(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

pub fn plan_with(
    mode: Mode,
    model: &WorldModel,
    region: Option<&TrustRegion>,
    obs: &Observation<'_>,
    config: &PlannerConfig,
    seed: u64,
) -> Result<PlanResult, Error> {
    let task = obs.state.task();
    let mut rng = crate::rng::seeded(seed);
    match mode {
        Mode::Baseline => plan_baseline(model, obs, &task, config, &mut rng),
        Mode::Reoi => plan_reoi(model, obs, &task, config, &mut rng),
        Mode::Trustregion => {
            let region = region.ok_or(Error::Config("trust-region mode needs a region"))?;
            plan_trustregion(model, region, obs, &task, config, &mut rng)
        }
    }
}

/// Plans once in `mode` and executes the chosen plan open-loop in the
/// simulator. Every mode sees the same candidate plans for an episode.
pub fn run_episode(model: &WorldModel, region: Option<&TrustRegion>, mode: Mode, config: &BenchConfig, episode: u64) -> Result<EpisodeRecord, Error> {
    let state = bench_scene(&config.scene, derive_seed(config.global_seed, episode, SCENE))?;
    let frame = render(&state).frame;
    let obs = Observation { frame: &frame, state: &state, depth_map: None };
    let result = plan_with(mode, model, region, &obs, &config.planner, derive_seed(config.global_seed, episode, PLANNER))?;
    let n_rejected = result.verdicts.iter().filter(|v| !matches!(v, Verdict::Accept { .. })).count();
    let (success, collision) = match result.chosen_plan() {
        Some(p) => {
            let o = check_outcome(&rollout_states(&state, p));
            (o.success && !o.collision, o.collision)
        }
        None => (false, false),
    };
    Ok(EpisodeRecord { episode, mode, chosen: result.chosen, n_rejected, success, collision, needs_human: result.chosen.is_none() })
}

/// Per-mode rates, in the order modes first appear in `records`.
pub fn summarize_bench(records: Vec<EpisodeRecord>) -> BenchReport {
    let mut modes: Vec<Mode> = Vec::new();
    for r in &records {
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
    }
    let summaries = modes
        .into_iter()
        .map(|mode| {
            let eps: Vec<&EpisodeRecord> = records.iter().filter(|r| r.mode == mode).collect();
            let n = eps.len();
            let rate = |f: fn(&EpisodeRecord) -> bool| eps.iter().filter(|r| f(r)).count() as f64 / n as f64;
            ModeSummary {
                mode,
                success_rate: rate(|r| r.success),
                collision_rate: rate(|r| r.collision),
                needs_human_rate: rate(|r| r.needs_human),
                n_episodes: n,
            }
        })
        .collect();
    BenchReport { modes: summaries, episodes: records }
}

pub fn bench_planning(model: &WorldModel, region: Option<&TrustRegion>, config: &BenchConfig) -> Result<BenchReport, Error> {
    let mut records = Vec::new();
    for &mode in &config.modes {
        for e in 0..config.episodes as u64 {
            records.push(run_episode(model, region, mode, config, e)?);
        }
    }
    Ok(summarize_bench(records))
}

/// How held-out region inputs are drawn: a training scene with the gripper
/// start nudged and Gaussian noise on every motion command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoldoutConfig {
    pub samples: usize,
    pub gripper_jitter: f64,
    pub action_noise: f64,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        Self { samples: 600, gripper_jitter: 0.5, action_noise: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoldoutSample {
    pub source: usize,
    pub input: Vec<f32>,
    pub latent_error: f64,
}

/// Perturbed copies of training episodes, re-simulated so their true
/// rollout error is known. Sources cycle through the dataset in order.
pub fn holdout_samples(model: &WorldModel, dataset: &[Trajectory], config: &HoldoutConfig, seed: u64) -> Result<Vec<HoldoutSample>, Error> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = crate::rng::seeded(seed);
    let j = config.gripper_jitter;
    (0..config.samples)
        .map(|k| {
            let src = &dataset[k % dataset.len()];
            let mut scene = src.metadata.scene.clone();
            if j > 0.0 {
                scene.gripper.x += rng.gen_range(-j..=j);
                scene.gripper.y += rng.gen_range(-j..=j);
            }
            let plan: ActionPlan = src
                .actions
                .iter()
                .map(|a| {
                    let dx = a.dx + (config.action_noise * normal(&mut rng)) as f32;
                    let dy = a.dy + (config.action_noise * normal(&mut rng)) as f32;
                    Action::new(dx, dy, a.grip).clamped()
                })
                .collect();
            let frames = rollout_states(&scene, &plan).iter().map(|s| render(s).frame).collect();
            let traj = Trajectory { frames, actions: plan, metadata: TrajectoryMeta { scene, ..src.metadata.clone() } };
            Ok(HoldoutSample {
                source: k % dataset.len(),
                input: query_input(&model.encode(&traj.frames[0])?, &traj.actions),
                latent_error: model.latent_error(&traj)?,
            })
        })
        .collect()
}

/// Outcome of checking the error bound on held-out inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub n_samples: usize,
    pub n_inside: usize,
    pub n_within_bound: usize,
    pub bound: f64,
}

impl BoundCheck {
    pub fn fraction_within(&self) -> f64 {
        if self.n_inside == 0 {
            return 0.0;
        }
        self.n_within_bound as f64 / self.n_inside as f64
    }
}

pub fn check_bound(region: &TrustRegion, samples: &[HoldoutSample]) -> BoundCheck {
    let mut out = BoundCheck { n_samples: samples.len(), n_inside: 0, n_within_bound: 0, bound: region.bound() };
    for s in samples {
        if let QueryResult::Inside { bound } = region.query(&s.input) {
            out.n_inside += 1;
            if s.latent_error <= bound {
                out.n_within_bound += 1;
            }
        }
    }
    out
}

/// Identification counts against simulator labels. A segment belongs to the
/// object owning most of its pixels; a novel object counts as found when any
/// of its segments is flagged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub found: usize,
    pub missed: usize,
}

impl IdCounts {
    pub fn add(&mut self, o: &IdCounts) {
        self.true_positive += o.true_positive;
        self.false_positive += o.false_positive;
        self.found += o.found;
        self.missed += o.missed;
    }

    /// Precision over flagged segments; 1 when nothing was flagged.
    pub fn precision(&self) -> f64 {
        let n = self.true_positive + self.false_positive;
        if n == 0 {
            1.0
        } else {
            self.true_positive as f64 / n as f64
        }
    }

    /// Recall over visible novel objects; 1 when there were none.
    pub fn recall(&self) -> f64 {
        let n = self.found + self.missed;
        if n == 0 {
            1.0
        } else {
            self.found as f64 / n as f64
        }
    }
}

pub fn score_identification(report: &IdentificationReport, state: &SceneState, label_map: &[u32]) -> IdCounts {
    let w = report.segments.first().map_or(0, |s| s.mask.width());
    let owner = |s: &crate::distractor::Segment| -> Option<u32> {
        let mut ids: Vec<u32> = s.mask.iter_set().map(|(r, c)| label_map[r * w + c]).collect();
        ids.sort_unstable();
        let mut best = (None, 0);
        let mut i = 0;
        while i < ids.len() {
            let j = ids[i..].iter().take_while(|v| **v == ids[i]).count();
            if j > best.1 {
                best = (Some(ids[i]), j);
            }
            i += j;
        }
        best.0.filter(|id| *id != 0)
    };
    let is_novel = |id: Option<u32>| id.and_then(|i| state.object(i)).map_or(false, |o| o.category == Category::Novel);
    let mut counts = IdCounts::default();
    let mut seen: Vec<(u32, bool)> = Vec::new();
    for s in &report.segments {
        let o = owner(s);
        let flagged = report.flagged.contains(&s.id);
        if flagged {
            if is_novel(o) {
                counts.true_positive += 1;
            } else {
                counts.false_positive += 1;
            }
        }
        if let (true, Some(id)) = (is_novel(o), o) {
            match seen.iter_mut().find(|(i, _)| *i == id) {
                Some(e) => e.1 |= flagged,
                None => seen.push((id, flagged)),
            }
        }
    }
    for (_, f) in seen {
        if f {
            counts.found += 1;
        } else {
            counts.missed += 1;
        }
    }
    counts
}
