//! Synthetic tabletop: scene generation, kinematics, rasterisation and task
//! outcome checks.
//!
//! Positions are continuous pixel coordinates with `x` along columns and `y`
//! along rows; pixel `(r, c)` has its centre at `(c + 0.5, r + 0.5)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::frame::{color_distance, Frame, Mask, Rect, Rgb, HEIGHT, WIDTH};
use crate::rng::normal;

pub const BACKGROUND: Rgb = [0.7, 0.7, 0.7];
pub const GRIPPER_COLOR: Rgb = [0.1, 0.1, 0.1];
/// Gripper translation per tick at full action, in pixels.
pub const V_MAX: f64 = 6.0;
/// Side length of the square gripper footprint.
pub const GRIPPER_SIZE: f64 = 8.0;
pub const PICKUP_RADIUS: f64 = 5.0;
pub const DEFAULT_HORIZON: usize = 12;
pub const CONTAINER_SIZE: f64 = 14.0;
const PLACEMENT_ATTEMPTS: usize = 1000;
const PLACEMENT_MARGIN: f64 = 2.0;

/// Training colours. All share the background luminance and vary only along
/// the red/blue opponent axis.
pub const TRAINING_PALETTE: [Rgb; 6] = [
    [1.0, 0.7, 0.4],
    [0.4, 0.7, 1.0],
    [0.92, 0.7, 0.48],
    [0.48, 0.7, 0.92],
    [0.84, 0.7, 0.56],
    [0.56, 0.7, 0.84],
];

/// Colours reserved for novel distractors. Each differs from every training
/// colour by at least 0.25 in some channel.
pub const NOVEL_PALETTE: [Rgb; 6] = [
    [1.0, 0.1, 1.0],
    [0.55, 1.0, 0.55],
    [1.0, 0.3, 0.8],
    [0.8, 0.3, 1.0],
    [0.85, 0.4, 0.85],
    [0.9, 0.2, 1.0],
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pos {
    pub x: f64,
    pub y: f64,
}

impl Pos {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, o: &Pos) -> f64 {
        libm::hypot(self.x - o.x, self.y - o.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Rect,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Training,
    Novel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Obstacle,
    Distractor,
    Container,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub shape: Shape,
    pub color: Rgb,
    pub center: Pos,
    pub size: f64,
    /// Higher is closer to the camera.
    pub depth_rank: u32,
    pub category: Category,
    pub role: Role,
}

impl ObjectSpec {
    /// Whether the pixel centred at `(px, py)` lies inside the object.
    #[inline]
    pub fn covers(&self, px: f64, py: f64) -> bool {
        let half = self.size / 2.0;
        let dx = px - self.center.x;
        let dy = py - self.center.y;
        match self.shape {
            Shape::Rect => dx.abs() < half && dy.abs() < half,
            Shape::Circle => dx * dx + dy * dy < half * half,
            Shape::Triangle => {
                let from_apex = dy + half;
                from_apex >= 0.0 && from_apex < self.size && dx.abs() < from_apex / 2.0
            }
        }
    }

    /// Pixel rectangle guaranteed to contain every covered pixel.
    pub fn pixel_bounds(&self, height: usize, width: usize) -> Rect {
        let half = self.size / 2.0;
        let lo = |v: f64| libm::floor(v - half - 1.0).max(0.0) as usize;
        let hi = |v: f64, n: usize| (libm::ceil(v + half + 1.0).max(0.0) as usize).min(n);
        Rect::new(lo(self.center.y), lo(self.center.x), hi(self.center.y, height), hi(self.center.x, width))
    }

    pub fn mask(&self, height: usize, width: usize) -> Mask {
        let mut m = Mask::new(height, width);
        let b = self.pixel_bounds(height, width);
        for r in b.r0..b.r1 {
            for c in b.c0..b.c1 {
                if self.covers(c as f64 + 0.5, r as f64 + 0.5) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn is_pickable(&self) -> bool {
        matches!(self.role, Role::Target | Role::Obstacle)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub objects: Vec<ObjectSpec>,
    pub gripper: Pos,
    pub grip_closed: bool,
    pub held: Option<u32>,
    pub goal_region: Rect,
    pub rng_seed: u64,
    pub tick: u32,
}

impl SceneState {
    pub fn object(&self, id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn target(&self) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.role == Role::Target)
    }

    pub fn novel_count(&self) -> usize {
        self.objects.iter().filter(|o| o.category == Category::Novel).count()
    }

    pub fn task(&self) -> TaskSpec {
        let target = self.target();
        TaskSpec {
            instruction_tag: String::from("place_target_in_goal"),
            target_color: target.map(|t| t.color).unwrap_or(TRAINING_PALETTE[0]),
            goal_region: self.goal_region,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub instruction_tag: String,
    pub target_color: Rgb,
    pub goal_region: Rect,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f32,
    pub dy: f32,
    pub grip: f32,
}

impl Action {
    pub const NULL: Action = Action { dx: 0.0, dy: 0.0, grip: 0.0 };

    pub fn new(dx: f32, dy: f32, grip: f32) -> Self {
        Self { dx, dy, grip }.clamped()
    }

    /// Clamps motion to `[-1, 1]` and snaps the grip bit to 0 or 1.
    pub fn clamped(self) -> Self {
        let c = |v: f32| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
        Self { dx: c(self.dx), dy: c(self.dy), grip: if self.grip >= 0.5 { 1.0 } else { 0.0 } }
    }

    pub fn as_array(&self) -> [f32; 3] {
        [self.dx, self.dy, self.grip]
    }
}

pub type ActionPlan = Vec<Action>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Training-category obstacles in addition to the target and container.
    pub n_obstacles: usize,
    pub n_novel: usize,
    /// Fixed goal region; sampled when absent.
    pub goal_region: Option<Rect>,
    pub target_size: (f64, f64),
    pub obstacle_size: (f64, f64),
    pub novel_size: (f64, f64),
    pub training_palette: Option<Vec<Rgb>>,
    pub novel_palette: Option<Vec<Rgb>>,
    pub height: usize,
    pub width: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_obstacles: 2,
            n_novel: 0,
            goal_region: None,
            target_size: (8.0, 10.0),
            obstacle_size: (7.0, 11.0),
            novel_size: (10.0, 14.0),
            training_palette: None,
            novel_palette: None,
            height: HEIGHT,
            width: WIDTH,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.n_novel > 3 {
            return Err(Error::Config("at most 3 novel distractors"));
        }
        if self.height < 16 || self.width < 16 {
            return Err(Error::Config("image too small"));
        }
        for (lo, hi) in [self.target_size, self.obstacle_size, self.novel_size] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::Config("invalid size range"));
            }
        }
        for p in [&self.training_palette, &self.novel_palette].into_iter().flatten() {
            if p.is_empty() {
                return Err(Error::Config("empty palette override"));
            }
        }
        Ok(())
    }

    fn training_palette(&self) -> &[Rgb] {
        self.training_palette.as_deref().unwrap_or(&TRAINING_PALETTE)
    }

    fn novel_palette(&self) -> &[Rgb] {
        self.novel_palette.as_deref().unwrap_or(&NOVEL_PALETTE)
    }
}

fn sample_size<R: Rng + ?Sized>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        libm::round(rng.gen_range(range.0..=range.1))
    } else {
        range.0
    }
}

/// Half-extent used for non-overlap checks; circles and triangles fit in
/// the same box as a rect of equal size.
fn footprint_box(center: Pos, size: f64) -> (f64, f64, f64, f64) {
    let h = size / 2.0;
    (center.x - h, center.y - h, center.x + h, center.y + h)
}

fn boxes_clear(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), margin: f64) -> bool {
    a.2 + margin <= b.0 || b.2 + margin <= a.0 || a.3 + margin <= b.1 || b.3 + margin <= a.1
}

/// Builds a reproducible scene: a container marking the goal, one target,
/// `n_obstacles` training obstacles and `n_novel` novel distractors.
pub fn init_scene(config: &SceneConfig, seed: u64) -> Result<SceneState, Error> {
    config.validate()?;
    let mut rng = crate::rng::seeded(seed);
    let (h, w) = (config.height as f64, config.width as f64);
    let train = config.training_palette();
    let novel = config.novel_palette();

    let mut objects: Vec<ObjectSpec> = Vec::new();
    let mut boxes: Vec<(f64, f64, f64, f64)> = Vec::new();

    let goal_region = match config.goal_region {
        Some(g) => {
            if g.is_empty() || g.r1 > config.height || g.c1 > config.width {
                return Err(Error::Config("goal region outside image"));
            }
            g
        }
        None => {
            let s = CONTAINER_SIZE as usize;
            let r0 = rng.gen_range(1..config.height - s - 1);
            let c0 = rng.gen_range(1..config.width - s - 1);
            Rect::new(r0, c0, r0 + s, c0 + s)
        }
    };
    let (gcy, gcx) = goal_region.center();
    let container_color_idx = rng.gen_range(0..train.len());
    objects.push(ObjectSpec {
        id: 1,
        shape: Shape::Rect,
        color: train[container_color_idx],
        center: Pos::new(gcx, gcy),
        size: (goal_region.r1 - goal_region.r0) as f64,
        depth_rank: 0,
        category: Category::Training,
        role: Role::Container,
    });
    boxes.push((goal_region.c0 as f64, goal_region.r0 as f64, goal_region.c1 as f64, goal_region.r1 as f64));

    let mut kinds: Vec<Role> = vec![Role::Target];
    kinds.extend(core::iter::repeat(Role::Obstacle).take(config.n_obstacles));
    kinds.extend(core::iter::repeat(Role::Distractor).take(config.n_novel));

    let mut target_color_idx = None;
    for (k, role) in kinds.iter().enumerate() {
        let index = k + 1;
        let is_novel = *role == Role::Distractor;
        let range = match role {
            Role::Target => config.target_size,
            Role::Obstacle => config.obstacle_size,
            _ => config.novel_size,
        };
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let size = sample_size(&mut rng, range);
            let lo = size / 2.0 + 1.0;
            if w - lo <= lo || h - lo <= lo {
                continue;
            }
            let center = Pos::new(rng.gen_range(lo..w - lo), rng.gen_range(lo..h - lo));
            let b = footprint_box(center, size);
            if boxes.iter().all(|o| boxes_clear(b, *o, PLACEMENT_MARGIN)) {
                placed = Some((center, size, b));
                break;
            }
        }
        let (center, size, b) = placed.ok_or(Error::Placement { index, attempts: PLACEMENT_ATTEMPTS })?;
        boxes.push(b);
        let (shape, color) = if is_novel {
            let shape = [Shape::Triangle, Shape::Rect, Shape::Circle][rng.gen_range(0..3)];
            (shape, novel[rng.gen_range(0..novel.len())])
        } else {
            let shape = if rng.gen_bool(0.5) { Shape::Circle } else { Shape::Rect };
            // the target never shares the container's colour
            let mut ci = rng.gen_range(0..train.len());
            if *role == Role::Target && train.len() > 1 {
                while ci == container_color_idx {
                    ci = rng.gen_range(0..train.len());
                }
                target_color_idx = Some(ci);
            } else if *role == Role::Obstacle && train.len() > 2 {
                while Some(ci) == target_color_idx {
                    ci = rng.gen_range(0..train.len());
                }
            }
            (shape, train[ci])
        };
        objects.push(ObjectSpec {
            id: index as u32 + 1,
            shape,
            color,
            center,
            size,
            depth_rank: index as u32,
            category: if is_novel { Category::Novel } else { Category::Training },
            role: *role,
        });
    }

    // gripper starts clear of every object
    let half = GRIPPER_SIZE / 2.0;
    let mut gripper = None;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let p = Pos::new(rng.gen_range(half..w - half), rng.gen_range(half..h - half));
        if boxes.iter().all(|o| boxes_clear(footprint_box(p, GRIPPER_SIZE), *o, 1.0)) {
            gripper = Some(p);
            break;
        }
    }
    let gripper = gripper.ok_or(Error::Placement { index: 0, attempts: PLACEMENT_ATTEMPTS })?;

    Ok(SceneState { objects, gripper, grip_closed: false, held: None, goal_region, rng_seed: seed, tick: 0 })
}

/// Advances the simulator by one tick. Translation happens before the grip
/// transition, so an action that arrives at an object may also close on it.
pub fn step(state: &SceneState, action: Action) -> SceneState {
    step_sized(state, action, WIDTH, HEIGHT)
}

pub fn step_sized(state: &SceneState, action: Action, width: usize, height: usize) -> SceneState {
    let a = action.clamped();
    let mut next = state.clone();
    next.tick += 1;
    next.gripper.x = (state.gripper.x + V_MAX * a.dx as f64).clamp(0.0, (width - 1) as f64);
    next.gripper.y = (state.gripper.y + V_MAX * a.dy as f64).clamp(0.0, (height - 1) as f64);
    let close = a.grip >= 0.5;
    if close && !state.grip_closed {
        next.grip_closed = true;
        if next.held.is_none() {
            let mut best: Option<(f64, u32)> = None;
            for o in next.objects.iter().filter(|o| o.is_pickable()) {
                let d = o.center.dist(&next.gripper);
                if d <= PICKUP_RADIUS && best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, o.id));
                }
            }
            next.held = best.map(|(_, id)| id);
        }
    } else if !close && state.grip_closed {
        next.grip_closed = false;
        next.held = None;
    }
    if let Some(id) = next.held {
        let g = next.gripper;
        if let Some(o) = next.objects.iter_mut().find(|o| o.id == id) {
            o.center = g;
        }
    }
    next
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub frame: Frame,
    /// Object id per pixel, 0 for background. The gripper is not labelled.
    pub label_map: Vec<u32>,
    /// Depth rank of the visible object per pixel, `None` for background.
    pub depth_map: Vec<Option<u32>>,
}

pub fn gripper_mask(pos: Pos, height: usize, width: usize) -> Mask {
    let mut m = Mask::new(height, width);
    let half = GRIPPER_SIZE / 2.0;
    let r0 = libm::floor(pos.y - half).max(0.0) as usize;
    let c0 = libm::floor(pos.x - half).max(0.0) as usize;
    let r1 = (libm::ceil(pos.y + half).max(0.0) as usize).min(height);
    let c1 = (libm::ceil(pos.x + half).max(0.0) as usize).min(width);
    for r in r0..r1 {
        for c in c0..c1 {
            if (c as f64 + 0.5 - pos.x).abs() < half && (r as f64 + 0.5 - pos.y).abs() < half {
                m.set(r, c, true);
            }
        }
    }
    m
}

pub fn render(state: &SceneState) -> RenderOutput {
    render_sized(state, HEIGHT, WIDTH)
}

pub fn render_sized(state: &SceneState, height: usize, width: usize) -> RenderOutput {
    let mut frame = Frame::filled(height, width, BACKGROUND);
    let mut label_map = vec![0u32; height * width];
    let mut depth_map = vec![None; height * width];
    let mut order: Vec<&ObjectSpec> = state.objects.iter().collect();
    order.sort_by_key(|o| o.depth_rank);
    for o in order {
        let b = o.pixel_bounds(height, width);
        for r in b.r0..b.r1 {
            for c in b.c0..b.c1 {
                if o.covers(c as f64 + 0.5, r as f64 + 0.5) {
                    frame.set(r, c, o.color);
                    label_map[r * width + c] = o.id;
                    depth_map[r * width + c] = Some(o.depth_rank);
                }
            }
        }
    }
    for (r, c) in gripper_mask(state.gripper, height, width).iter_set() {
        frame.set(r, c, GRIPPER_COLOR);
    }
    RenderOutput { frame, label_map, depth_map }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub collision: bool,
}

/// Pixels occupied by the gripper and whatever it holds.
pub fn footprint(state: &SceneState, height: usize, width: usize) -> Mask {
    let mut m = gripper_mask(state.gripper, height, width);
    if let Some(o) = state.held.and_then(|id| state.object(id)) {
        m.union_with(&o.mask(height, width));
    }
    m
}

pub fn collides(state: &SceneState, height: usize, width: usize) -> bool {
    let fp = footprint(state, height, width);
    state
        .objects
        .iter()
        .filter(|o| !matches!(o.role, Role::Target | Role::Container) && Some(o.id) != state.held)
        .any(|o| o.mask(height, width).intersects(&fp))
}

/// Success requires the target to end released with its centre in the goal
/// region; collision is flagged if any tick's footprint touches an obstacle
/// or distractor.
pub fn check_outcome(trajectory: &[SceneState]) -> Outcome {
    let (h, w) = (HEIGHT, WIDTH);
    let collision = trajectory.iter().any(|s| collides(s, h, w));
    let success = trajectory.last().map_or(false, |s| match s.target() {
        Some(t) => s.held != Some(t.id) && s.goal_region.contains_point(t.center.y, t.center.x),
        None => false,
    });
    Outcome { success, collision }
}

/// Applies `plan` from `state`, returning all `T + 1` states.
pub fn rollout_states(state: &SceneState, plan: &[Action]) -> Vec<SceneState> {
    let mut out = Vec::with_capacity(plan.len() + 1);
    out.push(state.clone());
    for a in plan {
        let next = step(out.last().unwrap(), *a);
        out.push(next);
    }
    out
}

fn move_towards(pos: Pos, goal: Pos) -> (Pos, f32, f32) {
    let dx = ((goal.x - pos.x) / V_MAX).clamp(-1.0, 1.0);
    let dy = ((goal.y - pos.y) / V_MAX).clamp(-1.0, 1.0);
    let (dx, dy) = (dx as f32, dy as f32);
    (Pos::new(pos.x + V_MAX * dx as f64, pos.y + V_MAX * dy as f64), dx, dy)
}

/// Noisy pick-and-place plan: approach the target, close, carry through two
/// perturbed intermediate waypoints to the goal centre, release, then idle.
/// Obstacles are ignored.
pub fn scripted_policy<R: Rng + ?Sized>(state: &SceneState, task: &TaskSpec, noise: f64, rng: &mut R) -> ActionPlan {
    scripted_policy_len(state, task, noise, rng, DEFAULT_HORIZON)
}

pub fn scripted_policy_len<R: Rng + ?Sized>(
    state: &SceneState,
    task: &TaskSpec,
    noise: f64,
    rng: &mut R,
    horizon: usize,
) -> ActionPlan {
    let target = match state.target() {
        Some(t) => t.center,
        None => return vec![Action::NULL; horizon],
    };
    let (gy, gx) = task.goal_region.center();
    let goal = Pos::new(gx, gy);
    let mut waypoints = vec![(target, true)];
    for f in [1.0 / 3.0, 2.0 / 3.0] {
        let mut p = Pos::new(target.x + f * (goal.x - target.x), target.y + f * (goal.y - target.y));
        if noise > 0.0 {
            p.x += noise * normal(rng);
            p.y += noise * normal(rng);
        }
        p.x = p.x.clamp(0.0, (WIDTH - 1) as f64);
        p.y = p.y.clamp(0.0, (HEIGHT - 1) as f64);
        waypoints.push((p, true));
    }
    waypoints.push((goal, false));

    let mut plan = Vec::with_capacity(horizon);
    let mut pos = state.gripper;
    let mut grip = 0.0f32;
    let mut wi = 0;
    while plan.len() < horizon {
        if wi >= waypoints.len() {
            plan.push(Action { dx: 0.0, dy: 0.0, grip });
            continue;
        }
        let (wp, _) = waypoints[wi];
        let (next, dx, dy) = move_towards(pos, wp);
        pos = next;
        if pos.dist(&wp) < 1e-3 {
            if wi == 0 {
                grip = 1.0;
            } else if wi == waypoints.len() - 1 {
                grip = 0.0;
            }
            wi += 1;
        }
        plan.push(Action { dx, dy, grip });
    }
    plan
}

/// Uniform random motion; the grip bit starts open and flips with
/// probability 0.1 per tick.
pub fn sample_exploration_plan<R: Rng + ?Sized>(rng: &mut R, horizon: usize) -> ActionPlan {
    let mut grip = 0.0f32;
    (0..horizon)
        .map(|_| {
            if rng.gen_bool(0.1) {
                grip = 1.0 - grip;
            }
            Action { dx: rng.gen_range(-1.0..=1.0), dy: rng.gen_range(-1.0..=1.0), grip }
        })
        .collect()
}

/// Pixels whose colour is within `tol` of `color`.
pub fn color_mask(frame: &Frame, color: Rgb, tol: f64) -> Mask {
    let (h, w) = frame.shape();
    let mut m = Mask::new(h, w);
    for r in 0..h {
        for c in 0..w {
            if color_distance(frame.get(r, c), color) < tol {
                m.set(r, c, true);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn empty_scene() -> SceneState {
        SceneState {
            objects: Vec::new(),
            gripper: Pos::new(32.0, 32.0),
            grip_closed: false,
            held: None,
            goal_region: Rect::new(40, 40, 54, 54),
            rng_seed: 0,
            tick: 0,
        }
    }

    fn obj(id: u32, shape: Shape, x: f64, y: f64, size: f64, rank: u32, role: Role) -> ObjectSpec {
        ObjectSpec {
            id,
            shape,
            color: TRAINING_PALETTE[id as usize % 6],
            center: Pos::new(x, y),
            size,
            depth_rank: rank,
            category: Category::Training,
            role,
        }
    }

    #[test]
    fn null_action_only_advances_tick() {
        let s = empty_scene();
        let n = step(&s, Action::NULL);
        assert_eq!(n.tick, 1);
        assert_eq!(SceneState { tick: 0, ..n }, s);
    }

    #[test]
    fn full_dx_moves_six_columns() {
        let s = SceneState { gripper: Pos::new(10.0, 10.0), ..empty_scene() };
        let n = step(&s, Action::new(1.0, 0.0, 0.0));
        assert_eq!(n.gripper, Pos::new(16.0, 10.0));
    }

    #[test]
    fn motion_clamped_to_image() {
        let s = SceneState { gripper: Pos::new(62.0, 1.0), ..empty_scene() };
        let n = step(&s, Action::new(1.0, -1.0, 0.0));
        assert_eq!(n.gripper, Pos::new(63.0, 0.0));
    }

    #[test]
    fn grasp_within_radius_attaches_and_release_detaches() {
        let mut s = empty_scene();
        s.objects.push(obj(2, Shape::Circle, 35.0, 32.0, 9.0, 1, Role::Target));
        let held = step(&s, Action::new(0.0, 0.0, 1.0));
        assert_eq!(held.held, Some(2));
        let moved = step(&held, Action::new(1.0, 0.0, 1.0));
        assert_eq!(moved.object(2).unwrap().center, moved.gripper);
        let released = step(&moved, Action::new(0.0, 0.0, 0.0));
        assert_eq!(released.held, None);
        let after = step(&released, Action::new(-1.0, 0.0, 0.0));
        assert_eq!(after.object(2).unwrap().center, Pos::new(38.0, 32.0));
    }

    #[test]
    fn grasp_out_of_range_holds_nothing() {
        let mut s = empty_scene();
        s.objects.push(obj(2, Shape::Circle, 38.0, 32.0, 9.0, 1, Role::Target));
        assert_eq!(step(&s, Action::new(0.0, 0.0, 1.0)).held, None);
    }

    #[test]
    fn empty_scene_renders_background() {
        let mut s = empty_scene();
        s.gripper = Pos::new(-100.0, -100.0);
        let out = render(&s);
        assert!(out.frame.data().iter().all(|v| *v == 0.7));
        assert!(out.label_map.iter().all(|l| *l == 0));
    }

    #[test]
    fn closer_object_wins_overlap() {
        let mut s = empty_scene();
        s.gripper = Pos::new(-100.0, -100.0);
        s.objects.push(obj(2, Shape::Rect, 20.0, 20.0, 10.0, 2, Role::Obstacle));
        s.objects.push(obj(3, Shape::Rect, 24.0, 20.0, 10.0, 1, Role::Obstacle));
        let out = render(&s);
        assert_eq!(out.label_map[20 * 64 + 23], 2);
        assert_eq!(out.frame.get(20, 23), s.objects[0].color);
    }

    #[test]
    fn triangle_points_up() {
        let o = obj(2, Shape::Triangle, 20.0, 20.0, 12.0, 1, Role::Distractor);
        let m = o.mask(64, 64);
        let rows: Vec<usize> = (14..26).map(|r| (0..64).filter(|c| m.get(r, *c)).count()).collect();
        assert!(rows.windows(2).all(|w| w[0] <= w[1]), "{rows:?}");
        assert!(rows[11] > rows[1]);
    }

    #[test]
    fn scripted_noise_free_plan_completes_task() {
        let mut s = empty_scene();
        s.gripper = Pos::new(10.0, 12.0);
        s.objects.push(obj(1, Shape::Rect, 47.0, 47.0, 14.0, 0, Role::Container));
        s.objects.push(obj(2, Shape::Circle, 20.0, 20.0, 9.0, 1, Role::Target));
        let task = s.task();
        let plan = scripted_policy(&s, &task, 0.0, &mut seeded(0));
        let traj = rollout_states(&s, &plan);
        assert_eq!(check_outcome(&traj), Outcome { success: true, collision: false });
    }

    #[test]
    fn never_closing_fails() {
        let mut s = empty_scene();
        s.objects.push(obj(2, Shape::Circle, 20.0, 20.0, 9.0, 1, Role::Target));
        let plan = vec![Action::new(-1.0, -1.0, 0.0); 12];
        assert!(!check_outcome(&rollout_states(&s, &plan)).success);
    }

    #[test]
    fn path_through_distractor_collides() {
        let mut s = empty_scene();
        s.gripper = Pos::new(8.0, 32.0);
        s.objects.push(obj(3, Shape::Rect, 32.0, 32.0, 10.0, 2, Role::Distractor));
        let plan = vec![Action::new(1.0, 0.0, 0.0); 8];
        assert!(check_outcome(&rollout_states(&s, &plan)).collision);
    }

    #[test]
    fn exploration_statistics() {
        let mut rng = seeded(11);
        let mut abs_dx = 0.0;
        let mut n = 0usize;
        let mut toggles = 0usize;
        let mut ticks = 0usize;
        for _ in 0..1000 {
            let plan = sample_exploration_plan(&mut rng, 12);
            let mut prev = 0.0;
            for a in &plan {
                abs_dx += a.dx.abs() as f64;
                n += 1;
                toggles += (a.grip != prev) as usize;
                prev = a.grip;
                ticks += 1;
            }
        }
        let mean = abs_dx / n as f64;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
        let freq = toggles as f64 / ticks as f64;
        assert!((freq - 0.1).abs() <= 0.03, "{freq}");
    }
}
