//! Distractor identification from rollout degradation, plus the segmentation
//! and harmonic inpainting it relies on.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::frame::{color_distance, Frame, Mask, Rect, Rgb};
use crate::metrics::masked_ssim;
use crate::sim::{Action, ActionPlan, TaskSpec, BACKGROUND, GRIPPER_COLOR, GRIPPER_SIZE};
use crate::wm::WorldModel;

/// Quantisation levels per channel minus one.
const LEVELS: f32 = 11.0;
pub const MIN_AREA: usize = 12;
/// Pixels darker than this (mean of channels) are treated as gripper.
pub const GRIPPER_LUMA: f32 = 0.55;
/// Colour distance under which a segment counts as the task target.
pub const TARGET_COLOR_TOL: f64 = 0.15;
pub const SAFETY_PLAN_LEN: usize = 6;
pub const CHECK_FRAME: usize = 5;
pub const DEFAULT_TAU: f64 = 0.36;
const BBOX_DILATION: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub id: u32,
    pub mask: Mask,
    pub bbox: Rect,
    pub mean_color: Rgb,
    pub area: usize,
}

fn quantize(p: Rgb) -> [u8; 3] {
    let q = |v: f32| libm::roundf(v.clamp(0.0, 1.0) * LEVELS) as u8;
    [q(p[0]), q(p[1]), q(p[2])]
}

/// Dark pixels, which can only come from the gripper.
pub fn gripper_mask(frame: &Frame) -> Mask {
    let (h, w) = frame.shape();
    let mut m = Mask::new(h, w);
    for r in 0..h {
        for c in 0..w {
            if frame.luminance(r, c) < GRIPPER_LUMA {
                m.set(r, c, true);
            }
        }
    }
    m
}

/// Square window of the gripper's size holding the most darkness
/// (`BACKGROUND` luminance minus pixel luminance, clipped at zero). Works on
/// blurred predictions where thresholding loses the gripper. `None` when no
/// pixel is darker than `GRIPPER_LUMA`.
pub fn locate_gripper(frame: &Frame) -> Option<Rect> {
    let (h, w) = frame.shape();
    let side = (GRIPPER_SIZE as usize).min(h).min(w);
    let bg = (BACKGROUND[0] + BACKGROUND[1] + BACKGROUND[2]) / 3.0;
    // summed-area table of darkness
    let mut sat = vec![0.0f64; (h + 1) * (w + 1)];
    let mut darkest = f32::INFINITY;
    for r in 0..h {
        let mut row = 0.0;
        for c in 0..w {
            let l = frame.luminance(r, c);
            darkest = darkest.min(l);
            row += (bg - l).max(0.0) as f64;
            sat[(r + 1) * (w + 1) + c + 1] = sat[r * (w + 1) + c + 1] + row;
        }
    }
    if darkest >= GRIPPER_LUMA {
        return None;
    }
    let mut best = (0, 0, f64::NEG_INFINITY);
    for r in 0..=h - side {
        for c in 0..=w - side {
            let s = sat[(r + side) * (w + 1) + c + side] - sat[r * (w + 1) + c + side] - sat[(r + side) * (w + 1) + c] + sat[r * (w + 1) + c];
            if s > best.2 + 1e-9 {
                best = (r, c, s);
            }
        }
    }
    Some(Rect::new(best.0, best.1, best.0 + side, best.1 + side))
}

/// Connected regions of equal quantised colour, excluding background and
/// gripper pixels. Ids follow raster order of each region's first pixel.
pub fn segment(frame: &Frame) -> Vec<Segment> {
    segment_with(frame, MIN_AREA)
}

pub fn segment_with(frame: &Frame, min_area: usize) -> Vec<Segment> {
    let (h, w) = frame.shape();
    let bg = quantize(BACKGROUND);
    let grip = quantize(GRIPPER_COLOR);
    let mut q = vec![[0u8; 3]; h * w];
    let mut usable = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            q[i] = quantize(frame.get(r, c));
            usable[i] = q[i] != bg && q[i] != grip && frame.luminance(r, c) >= GRIPPER_LUMA;
        }
    }
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    let mut next_id = 1;
    for start in 0..h * w {
        if !usable[start] || seen[start] {
            continue;
        }
        let color = q[start];
        let mut mask = Mask::new(h, w);
        let mut area = 0;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            mask.set(r, c, true);
            area += 1;
            let mut visit = |j: usize| {
                if usable[j] && !seen[j] && q[j] == color {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        if area >= min_area {
            let bbox = mask.bbox().expect("non-empty component");
            let mean_color = frame.mean_color(&mask).expect("non-empty component");
            out.push(Segment { id: next_id, mask, bbox, mean_color, area });
            next_id += 1;
        }
    }
    out
}

/// Harmonic fill: masked pixels start at the mean of the mask's outer
/// boundary and are Jacobi-relaxed towards the average of their 4-neighbours.
pub fn inpaint(frame: &Frame, mask: &Mask) -> Result<Frame, Error> {
    inpaint_with(frame, mask, 1e-4, 500)
}

pub fn inpaint_with(frame: &Frame, mask: &Mask, tol: f64, max_iter: usize) -> Result<Frame, Error> {
    if mask.shape() != frame.shape() {
        return Err(Error::Shape { expected: frame.shape(), got: mask.shape() });
    }
    if mask.is_empty() {
        return Ok(frame.clone());
    }
    if mask.is_full() {
        return Err(Error::FullMask);
    }
    let (h, w) = frame.shape();
    let boundary = mask.outer_boundary();
    let mut init = [0.0f64; 3];
    let mut n = 0usize;
    for (r, c) in boundary.iter_set() {
        let p = frame.get(r, c);
        for k in 0..3 {
            init[k] += p[k] as f64;
        }
        n += 1;
    }
    for v in init.iter_mut() {
        *v /= n as f64;
    }
    let mut cur: Vec<[f64; 3]> = (0..h * w)
        .map(|i| {
            let p = frame.get(i / w, i % w);
            [p[0] as f64, p[1] as f64, p[2] as f64]
        })
        .collect();
    let pixels: Vec<(usize, usize)> = mask.iter_set().collect();
    for &(r, c) in &pixels {
        cur[r * w + c] = init;
    }
    let mut next = cur.clone();
    for _ in 0..max_iter {
        let mut change = 0.0f64;
        for &(r, c) in &pixels {
            let mut s = [0.0f64; 3];
            let mut k = 0.0;
            let mut add = |j: usize| {
                for ch in 0..3 {
                    s[ch] += cur[j][ch];
                }
                k += 1.0;
            };
            if r > 0 {
                add((r - 1) * w + c);
            }
            if r + 1 < h {
                add((r + 1) * w + c);
            }
            if c > 0 {
                add(r * w + c - 1);
            }
            if c + 1 < w {
                add(r * w + c + 1);
            }
            let i = r * w + c;
            for ch in 0..3 {
                let v = s[ch] / k;
                change = change.max((v - cur[i][ch]).abs());
                next[i][ch] = v;
            }
        }
        core::mem::swap(&mut cur, &mut next);
        if change < tol {
            break;
        }
    }
    let mut out = frame.clone();
    for &(r, c) in &pixels {
        let v = cur[r * w + c];
        out.set(r, c, [v[0] as f32, v[1] as f32, v[2] as f32]);
    }
    Ok(out)
}

/// The gripper holds still with the grip open.
pub fn safety_check_plan() -> ActionPlan {
    vec![Action::NULL; SAFETY_PLAN_LEN]
}

/// Masked SSIM between the two frames over the segment's box grown by 2 px.
pub fn persistence_score(segment: &Segment, frame0: &Frame, frame_k: &Frame) -> Result<f64, Error> {
    if segment.mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (h, w) = frame0.shape();
    let region = Mask::from_rect(h, w, &segment.bbox.dilate(BBOX_DILATION, h, w));
    masked_ssim(frame0, frame_k, &region)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exemption {
    TouchesGripper,
    TargetColor,
    Container,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyConfig {
    pub tau: f64,
    pub check_frame_index: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, check_frame_index: CHECK_FRAME }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentificationReport {
    pub segments: Vec<Segment>,
    pub scores: Vec<f64>,
    pub exemptions: Vec<Option<Exemption>>,
    pub flagged: Vec<u32>,
    pub check_frame_index: usize,
    pub tau: f64,
}

impl IdentificationReport {
    pub fn flagged_segments(&self) -> impl Iterator<Item = &Segment> + '_ {
        self.segments.iter().filter(|s| self.flagged.contains(&s.id))
    }

    /// Union of the flagged masks, or `None` when nothing was flagged.
    pub fn flagged_union(&self) -> Option<Mask> {
        let mut it = self.flagged_segments();
        let mut m = it.next()?.mask.clone();
        for s in it {
            m.union_with(&s.mask);
        }
        Some(m)
    }
}

fn exemption(seg: &Segment, grip: &Mask, task: &TaskSpec) -> Option<Exemption> {
    if seg.mask.intersects(grip) {
        return Some(Exemption::TouchesGripper);
    }
    if color_distance(seg.mean_color, task.target_color) < TARGET_COLOR_TOL {
        return Some(Exemption::TargetColor);
    }
    let g = &task.goal_region;
    let inside = seg.mask.iter_set().filter(|(r, c)| g.contains(*r, *c)).count();
    if 2 * inside >= seg.area {
        return Some(Exemption::Container);
    }
    None
}

/// Rolls out the safety-check plan and flags segments whose region has
/// degraded by the check frame, skipping the gripper, the target and the
/// goal container.
pub fn identify(model: &WorldModel, frame0: &Frame, task: &TaskSpec, config: &IdentifyConfig) -> Result<IdentificationReport, Error> {
    let plan = safety_check_plan();
    let k = config.check_frame_index;
    if k == 0 || plan.len() < k {
        return Err(Error::ShortRollout { len: plan.len(), index: k });
    }
    let predicted = model.rollout(frame0, &[], &plan)?;
    let frame_k = &predicted[k - 1];
    let segments = segment(frame0);
    let grip = gripper_mask(frame0).dilate(1);
    let mut scores = Vec::with_capacity(segments.len());
    let mut exemptions = Vec::with_capacity(segments.len());
    let mut flagged = Vec::new();
    for s in &segments {
        let score = persistence_score(s, frame0, frame_k)?;
        let ex = exemption(s, &grip, task);
        if ex.is_none() && score < config.tau {
            flagged.push(s.id);
        }
        scores.push(score);
        exemptions.push(ex);
    }
    Ok(IdentificationReport { segments, scores, exemptions, flagged, check_frame_index: k, tau: config.tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{render, Category, ObjectSpec, Pos, Role, SceneState, Shape, TRAINING_PALETTE};

    fn scene(objects: Vec<ObjectSpec>) -> SceneState {
        SceneState {
            objects,
            gripper: Pos::new(-50.0, -50.0),
            grip_closed: false,
            held: None,
            goal_region: Rect::new(0, 0, 1, 1),
            rng_seed: 0,
            tick: 0,
        }
    }

    fn obj(id: u32, x: f64, y: f64, size: f64, color: Rgb) -> ObjectSpec {
        ObjectSpec {
            id,
            shape: Shape::Rect,
            color,
            center: Pos::new(x, y),
            size,
            depth_rank: id,
            category: Category::Training,
            role: Role::Obstacle,
        }
    }

    #[test]
    fn locates_blurred_gripper() {
        let mut f = Frame::filled(64, 64, BACKGROUND);
        assert_eq!(locate_gripper(&f), None);
        for r in 20..28 {
            for c in 30..38 {
                f.set(r, c, GRIPPER_COLOR);
            }
        }
        assert_eq!(locate_gripper(&f), Some(Rect::new(20, 30, 28, 38)));
        // a faint wide smear loses to a compact dark core
        for c in 0..64 {
            f.set(50, c, [0.5; 3]);
        }
        assert_eq!(locate_gripper(&f), Some(Rect::new(20, 30, 28, 38)));
    }

    #[test]
    fn empty_scene_has_no_segments() {
        assert!(segment(&render(&scene(vec![])).frame).is_empty());
    }

    #[test]
    fn segments_match_labels() {
        let s = scene(vec![
            obj(1, 10.0, 10.0, 8.0, TRAINING_PALETTE[0]),
            obj(2, 40.0, 12.0, 9.0, TRAINING_PALETTE[1]),
            obj(3, 30.0, 45.0, 10.0, TRAINING_PALETTE[4]),
        ]);
        let out = render(&s);
        let segs = segment(&out.frame);
        assert_eq!(segs.len(), 3);
        for seg in &segs {
            let (r, c) = seg.mask.iter_set().next().unwrap();
            let id = out.label_map[r * 64 + c];
            let truth = Mask::from_bits(64, 64, out.label_map.iter().map(|l| *l == id).collect()).unwrap();
            assert_eq!(seg.mask, truth);
        }
    }

    #[test]
    fn same_color_touching_objects_merge() {
        let s = scene(vec![obj(1, 20.0, 20.0, 8.0, TRAINING_PALETTE[2]), obj(2, 28.0, 20.0, 8.0, TRAINING_PALETTE[2])]);
        assert_eq!(segment(&render(&s).frame).len(), 1);
    }

    #[test]
    fn inpaint_empty_mask_is_identity() {
        let f = render(&scene(vec![obj(1, 20.0, 20.0, 8.0, TRAINING_PALETTE[0])])).frame;
        assert_eq!(inpaint(&f, &Mask::new(64, 64)).unwrap(), f);
    }

    #[test]
    fn inpaint_gray_stays_gray() {
        let f = Frame::filled(64, 64, BACKGROUND);
        let m = Mask::from_rect(64, 64, &Rect::new(10, 10, 30, 25));
        let out = inpaint(&f, &m).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.7).abs() < 1e-3));
    }

    #[test]
    fn inpaint_removes_object_color() {
        let o = obj(1, 20.0, 20.0, 10.0, TRAINING_PALETTE[0]);
        let f = render(&scene(vec![o.clone()])).frame;
        let m = o.mask(64, 64);
        let out = inpaint(&f, &m).unwrap();
        let filled = out.mean_color(&m).unwrap();
        assert!(color_distance(filled, o.color) >= 0.2);
    }

    #[test]
    fn inpaint_full_mask_rejected() {
        let f = Frame::filled(8, 8, BACKGROUND);
        assert_eq!(inpaint(&f, &Mask::full(8, 8)), Err(Error::FullMask));
    }

    #[test]
    fn persistence_identity_and_erasure() {
        let o = obj(1, 30.0, 30.0, 10.0, [1.0, 0.1, 1.0]);
        let f = render(&scene(vec![o])).frame;
        let seg = segment(&f).remove(0);
        assert!((persistence_score(&seg, &f, &f).unwrap() - 1.0).abs() < 1e-12);
        let gone = Frame::filled(64, 64, BACKGROUND);
        let s = persistence_score(&seg, &f, &gone).unwrap();
        assert!(s < 0.4, "{s}");
        assert!((s - persistence_score(&seg, &gone, &f).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn safety_plan_is_six_null_actions() {
        let p = safety_check_plan();
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|a| *a == Action::NULL));
        assert!(p.len() >= CHECK_FRAME);
    }
}
