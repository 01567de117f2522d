//! Sampling-based planning: candidate plans are rolled out through the world
//! model, checked by a rule-based verifier and the best accepted one is kept.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::composite::{layer_from_segment, reinsert, Layer};
use crate::distractor::{identify, locate_gripper, inpaint, segment, IdentificationReport, IdentifyConfig, TARGET_COLOR_TOL};
use crate::error::Error;
use crate::frame::{color_distance, Frame, Mask};
use crate::sim::{color_mask, scripted_policy, ActionPlan, SceneState, TaskSpec};
use crate::trustregion::{query_input, QueryResult, TrustRegion};
use crate::wm::WorldModel;

pub const DEFAULT_CANDIDATES: usize = 8;
pub const CANDIDATE_NOISE: f64 = 4.0;
/// Pixels added around the located gripper before the overlap test.
pub const GRIPPER_MARGIN: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Collision,
    OutOfRegion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept { reward: f64 },
    RejectUnsafe { frame_index: usize, reason: RejectReason },
    NeedsHuman,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Chosen(usize),
    NeedsHuman,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Reoi,
    Trustregion,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Reoi, Mode::Trustregion];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Reoi => "reoi",
            Mode::Trustregion => "trustregion",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub mode: Mode,
    pub chosen: Option<usize>,
    pub verdicts: Vec<Verdict>,
    pub plans: Vec<ActionPlan>,
    pub rollouts: Vec<Vec<Frame>>,
    /// Segments flagged at t = 0, if identification ran.
    pub identification: Option<IdentificationReport>,
}

impl PlanResult {
    pub fn chosen_plan(&self) -> Option<&ActionPlan> {
        self.chosen.map(|i| &self.plans[i])
    }
}

/// Fraction of target-coloured pixels of the final frame inside the goal.
pub fn reward(frames: &[Frame], task: &TaskSpec) -> f64 {
    let Some(last) = frames.last() else { return 0.0 };
    let m = color_mask(last, task.target_color, TARGET_COLOR_TOL);
    let total = m.count();
    if total == 0 {
        return 0.0;
    }
    let inside = m.iter_set().filter(|(r, c)| task.goal_region.contains(*r, *c)).count();
    inside as f64 / total as f64
}

/// Rejects the rollout at the first frame where the located gripper, grown
/// by one pixel, touches a distractor mask; otherwise accepts it with its
/// reward.
pub fn verify(frames: &[Frame], task: &TaskSpec, distractor_masks: &[Mask]) -> Verdict {
    if !distractor_masks.is_empty() {
        for (k, f) in frames.iter().enumerate() {
            let Some(g) = locate_gripper(f) else { continue };
            let (h, w) = f.shape();
            let g = Mask::from_rect(h, w, &g.dilate(GRIPPER_MARGIN, h, w));
            if distractor_masks.iter().any(|m| m.intersects(&g)) {
                return Verdict::RejectUnsafe { frame_index: k + 1, reason: RejectReason::Collision };
            }
        }
    }
    Verdict::Accept { reward: reward(frames, task) }
}

/// Highest-reward accepted candidate, lowest index on ties.
pub fn select(verdicts: &[Verdict]) -> Selection {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in verdicts.iter().enumerate() {
        if let Verdict::Accept { reward } = v {
            if best.map_or(true, |(_, b)| *reward > b) {
                best = Some((i, *reward));
            }
        }
    }
    best.map_or(Selection::NeedsHuman, |(i, _)| Selection::Chosen(i))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub n_candidates: usize,
    pub noise: f64,
    pub identify: IdentifyConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { n_candidates: DEFAULT_CANDIDATES, noise: CANDIDATE_NOISE, identify: IdentifyConfig::default() }
    }
}

/// What the planner observes: the current frame plus the state the plan
/// sampler conditions on, and optionally the simulator depth map.
pub struct Observation<'a> {
    pub frame: &'a Frame,
    pub state: &'a SceneState,
    pub depth_map: Option<&'a [Option<u32>]>,
}

pub fn sample_candidates<R: Rng + ?Sized>(state: &SceneState, task: &TaskSpec, config: &PlannerConfig, rng: &mut R) -> Vec<ActionPlan> {
    (0..config.n_candidates).map(|_| scripted_policy(state, task, config.noise, rng)).collect()
}

fn finish(mode: Mode, plans: Vec<ActionPlan>, rollouts: Vec<Vec<Frame>>, verdicts: Vec<Verdict>, id: Option<IdentificationReport>) -> PlanResult {
    let chosen = match select(&verdicts) {
        Selection::Chosen(i) => Some(i),
        Selection::NeedsHuman => None,
    };
    PlanResult { mode, chosen, verdicts, plans, rollouts, identification: id }
}

/// Masks of predicted-frame segments that still look like a flagged
/// distractor: similar colour, near its original box. Unioned over frames.
pub fn tracked_distractor_masks(frames: &[Frame], report: &IdentificationReport) -> Vec<Mask> {
    let mut out = Vec::new();
    for seg in report.flagged_segments() {
        let (h, w) = seg.mask.shape();
        let region = seg.bbox.dilate(2, h, w);
        let mut m = Mask::new(h, w);
        for f in frames {
            for s in segment(f) {
                if color_distance(s.mean_color, seg.mean_color) < TARGET_COLOR_TOL && s.bbox.intersects(&region) {
                    m.union_with(&s.mask);
                }
            }
        }
        if !m.is_empty() {
            out.push(m);
        }
    }
    out
}

/// Raw world-model predictions; distractors are only caught if they survive
/// in the predicted frames.
pub fn plan_baseline<R: Rng + ?Sized>(model: &WorldModel, obs: &Observation<'_>, task: &TaskSpec, config: &PlannerConfig, rng: &mut R) -> Result<PlanResult, Error> {
    let plans = sample_candidates(obs.state, task, config, rng);
    let report = identify(model, obs.frame, task, &config.identify)?;
    let mut rollouts = Vec::with_capacity(plans.len());
    let mut verdicts = Vec::with_capacity(plans.len());
    for p in &plans {
        let frames = model.rollout(obs.frame, &[], p)?;
        let masks = tracked_distractor_masks(&frames, &report);
        verdicts.push(verify(&frames, task, &masks));
        rollouts.push(frames);
    }
    Ok(finish(Mode::Baseline, plans, rollouts, verdicts, Some(report)))
}

/// A current observation with the flagged distractors cut out, plus the
/// layers needed to put them back into predicted frames.
#[derive(Clone, Debug)]
pub struct Intervention {
    pub intervened: Frame,
    pub layers: Vec<Layer>,
    pub masks: Vec<Mask>,
}

impl Intervention {
    pub fn new(frame: &Frame, report: &IdentificationReport, depth_map: Option<&[Option<u32>]>) -> Result<Self, Error> {
        let layers = report
            .flagged_segments()
            .map(|s| layer_from_segment(frame, s, depth_map))
            .collect::<Result<Vec<_>, _>>()?;
        let masks = report.flagged_segments().map(|s| s.mask.clone()).collect();
        let intervened = match report.flagged_union() {
            Some(u) => inpaint(frame, &u)?,
            None => frame.clone(),
        };
        Ok(Self { intervened, layers, masks })
    }

    /// Reimagined rollout with the distractors reinserted.
    pub fn rollout(&self, model: &WorldModel, plan: &[crate::sim::Action]) -> Result<Vec<Frame>, Error> {
        let raw = model.rollout(&self.intervened, &[], plan)?;
        reinsert(&raw, &self.layers)
    }
}

/// Identify, inpaint, reimagine, reinsert, verify, select.
pub fn plan_reoi<R: Rng + ?Sized>(model: &WorldModel, obs: &Observation<'_>, task: &TaskSpec, config: &PlannerConfig, rng: &mut R) -> Result<PlanResult, Error> {
    let plans = sample_candidates(obs.state, task, config, rng);
    let report = identify(model, obs.frame, task, &config.identify)?;
    let iv = Intervention::new(obs.frame, &report, obs.depth_map)?;
    let mut rollouts = Vec::with_capacity(plans.len());
    let mut verdicts = Vec::with_capacity(plans.len());
    for p in &plans {
        let frames = iv.rollout(model, p)?;
        verdicts.push(verify(&frames, task, &iv.masks));
        rollouts.push(frames);
    }
    Ok(finish(Mode::Reoi, plans, rollouts, verdicts, Some(report)))
}

/// Like the baseline, but candidates whose `(z0, plan)` input falls outside
/// the trust region are rejected without being verified.
pub fn plan_trustregion<R: Rng + ?Sized>(
    model: &WorldModel,
    region: &TrustRegion,
    obs: &Observation<'_>,
    task: &TaskSpec,
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanResult, Error> {
    let plans = sample_candidates(obs.state, task, config, rng);
    let report = identify(model, obs.frame, task, &config.identify)?;
    let z0 = model.encode(obs.frame)?;
    let mut rollouts = Vec::with_capacity(plans.len());
    let mut verdicts = Vec::with_capacity(plans.len());
    for p in &plans {
        let x = query_input(&z0, p);
        let frames = model.rollout(obs.frame, &[], p)?;
        let verdict = match region.query(&x) {
            QueryResult::Outside { .. } => Verdict::RejectUnsafe { frame_index: 0, reason: RejectReason::OutOfRegion },
            QueryResult::Inside { .. } => verify(&frames, task, &tracked_distractor_masks(&frames, &report)),
        };
        verdicts.push(verdict);
        rollouts.push(frames);
    }
    Ok(finish(Mode::Trustregion, plans, rollouts, verdicts, Some(report)))
}
