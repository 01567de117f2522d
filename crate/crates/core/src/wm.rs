//! Linear latent world model.
//!
//! The encoder averages RGB over an 8x8 grid of 8-pixel patches. Dynamics and
//! decoder are linear maps fitted by ridge regression. Both are fitted as
//! small translation-invariant kernels over a 3x3 neighbourhood of patches
//! (edge-replicated at the border) and then expanded into the dense matrices
//! that the model file stores and that prediction uses.
//!
//! Dynamics input layout, for latent size `D`:
//!
//! ```text
//! [ z(t-2) | z(t-1) | z(t) | dx dy grip | z(t)*f_1 | ... | z(t)*f_15 ]
//! ```
//!
//! with action factors `f = dx, dy, |dx|, |dy|, grip, dx*dy, |dx|*dy,
//! dx*|dy|, |dx|*|dy|, dx^2, dy^2, grip*dx, grip*dy, grip*|dx|, grip*|dy|`.
//! The sign/magnitude split lets a linear map move content by a different
//! amount in each direction.
//!
//! There is no bias column, so a zero input maps to a zero latent.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::frame::{Frame, CHANNELS};
use crate::linalg::NormalEquations;
use crate::sim::{Action, SceneState};

pub const HISTORY: usize = 3;
pub const ACTION_DIM: usize = 3;
/// Number of action-modulated copies of the current latent.
pub const LIFTS: usize = 15;
pub const PATCH: usize = 8;
pub const DEFAULT_LAMBDA: f64 = 1e-3;

const NEIGHBOURS: usize = 9;
const LOCAL_Z: usize = NEIGHBOURS * CHANNELS;
const LOCAL_DYN: usize = HISTORY * LOCAL_Z + ACTION_DIM + LIFTS * LOCAL_Z;

pub type Latent = Vec<f32>;

/// Patch grid geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch: usize,
}

impl Geometry {
    pub const DEFAULT: Geometry = Geometry { height: 64, width: 64, channels: 3, patch: PATCH };

    pub fn grid_rows(&self) -> usize {
        self.height / self.patch
    }

    pub fn grid_cols(&self) -> usize {
        self.width / self.patch
    }

    pub fn latent_dim(&self) -> usize {
        self.grid_rows() * self.grid_cols() * self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn dyn_inputs(&self) -> usize {
        (HISTORY + LIFTS) * self.latent_dim() + ACTION_DIM
    }

    fn check(&self, frame: &Frame) -> Result<(), Error> {
        if frame.shape() != (self.height, self.width) {
            return Err(Error::Shape { expected: (self.height, self.width), got: frame.shape() });
        }
        Ok(())
    }

    /// Latent indices of the 3x3 patch neighbourhood around `(pr, pc)`,
    /// edge-replicated, in `(dr, dc)` row-major order.
    fn neighbourhood(&self, pr: usize, pc: usize) -> [usize; NEIGHBOURS] {
        let (gr, gc) = (self.grid_rows() as isize, self.grid_cols() as isize);
        let mut out = [0; NEIGHBOURS];
        let mut k = 0;
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let r = (pr as isize + dr).clamp(0, gr - 1) as usize;
                let c = (pc as isize + dc).clamp(0, gc - 1) as usize;
                out[k] = (r * gc as usize + c) * self.channels;
                k += 1;
            }
        }
        out
    }
}

/// Mean RGB per patch, row-major over the patch grid.
pub fn encode(frame: &Frame) -> Result<Latent, Error> {
    encode_with(&Geometry::DEFAULT, frame)
}

pub fn encode_with(geo: &Geometry, frame: &Frame) -> Result<Latent, Error> {
    geo.check(frame)?;
    let (gc, p, ch) = (geo.grid_cols(), geo.patch, geo.channels);
    let mut z = vec![0.0f64; geo.latent_dim()];
    let data = frame.data();
    for r in 0..geo.height {
        let pr = r / p;
        for c in 0..geo.width {
            let base = ((pr * gc) + c / p) * ch;
            let px = (r * geo.width + c) * ch;
            for k in 0..ch {
                z[base + k] += data[px + k] as f64;
            }
        }
    }
    let n = (p * p) as f64;
    Ok(z.into_iter().map(|v| (v / n) as f32).collect())
}

/// One-step and reconstruction residuals measured on the training set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Mean L2 norm of the one-step latent residual.
    pub dyn_mean: f64,
    /// Largest L2 norm of the one-step latent residual.
    pub dyn_max: f64,
    /// Mean RMS pixel error of `decode(encode(frame))`.
    pub dec_mean: f64,
    pub dec_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldModel {
    pub geometry: Geometry,
    /// `D x dyn_inputs`, row-major.
    pub dyn_w: Vec<f32>,
    /// `pixels x D`, row-major.
    pub dec_w: Vec<f32>,
    pub ridge_lambda: f64,
    pub residuals: ResidualStats,
}

/// A recorded episode: `T + 1` frames and `T` actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
    pub actions: Vec<Action>,
    pub metadata: TrajectoryMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub episode: u64,
    pub policy: alloc::string::String,
    /// Initial simulator state, which carries object labels and categories.
    pub scene: SceneState,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), Error> {
        if self.actions.is_empty() {
            return Err(Error::EmptyPlan);
        }
        if self.frames.len() != self.actions.len() + 1 {
            return Err(Error::Config("trajectory needs exactly one more frame than actions"));
        }
        Ok(())
    }

    pub fn has_novel(&self) -> bool {
        self.metadata.scene.novel_count() > 0
    }
}

fn action_factors(a: &Action) -> [f64; LIFTS] {
    let a = a.clamped();
    let (dx, dy, g) = (a.dx as f64, a.dy as f64, a.grip as f64);
    let (ax, ay) = (dx.abs(), dy.abs());
    [dx, dy, ax, ay, g, dx * dy, ax * dy, dx * ay, ax * ay, dx * dx, dy * dy, g * dx, g * dy, g * ax, g * ay]
}

/// Builds the dense dynamics input vector.
pub fn dyn_input(history: [&[f32]; HISTORY], action: &Action) -> Vec<f32> {
    let d = history[0].len();
    let mut u = Vec::with_capacity((HISTORY + LIFTS) * d + ACTION_DIM);
    for h in history {
        u.extend_from_slice(h);
    }
    let a = action.clamped();
    u.extend_from_slice(&a.as_array());
    for f in action_factors(&a) {
        let f = f as f32;
        u.extend(history[HISTORY - 1].iter().map(|v| v * f));
    }
    u
}

/// Incremental accumulator for [`train`], so datasets can be streamed.
pub struct Trainer {
    geometry: Geometry,
    dynamics: NormalEquations,
    decoder: NormalEquations,
    transitions: usize,
}

impl Trainer {
    pub fn new(geometry: Geometry) -> Self {
        let p2c = geometry.patch * geometry.patch * geometry.channels;
        Self {
            geometry,
            dynamics: NormalEquations::new(LOCAL_DYN, CHANNELS),
            decoder: NormalEquations::new(LOCAL_Z, p2c),
            transitions: 0,
        }
    }

    pub fn transitions(&self) -> usize {
        self.transitions
    }

    /// Adds every transition and every frame of a training-only trajectory.
    pub fn add(&mut self, traj: &Trajectory) -> Result<(), Error> {
        traj.validate()?;
        if traj.has_novel() {
            return Err(Error::NovelInTraining);
        }
        let geo = self.geometry;
        let zs: Vec<Vec<f64>> = traj
            .frames
            .iter()
            .map(|f| encode_with(&geo, f).map(|z| z.into_iter().map(f64::from).collect()))
            .collect::<Result<_, _>>()?;
        self.add_transitions(&zs, &zs, &traj.actions);
        let mut xd = vec![0.0f64; LOCAL_Z];
        let mut yd = vec![0.0f64; geo.patch * geo.patch * CHANNELS];
        for (f, z) in traj.frames.iter().zip(&zs) {
            for pr in 0..geo.grid_rows() {
                for pc in 0..geo.grid_cols() {
                    let nb = geo.neighbourhood(pr, pc);
                    local_dec_features(&nb, z, &mut xd);
                    patch_pixels(&geo, f, pr, pc, &mut yd);
                    self.decoder.add_row(&xd, &yd);
                }
            }
        }
        Ok(())
    }

    fn add_transitions(&mut self, hist: &[Vec<f64>], targets: &[Vec<f64>], actions: &[Action]) {
        let geo = self.geometry;
        let mut x = vec![0.0f64; LOCAL_DYN];
        let mut y = vec![0.0f64; CHANNELS];
        for (t, a) in actions.iter().enumerate() {
            let h = [&hist[t.saturating_sub(2)], &hist[t.saturating_sub(1)], &hist[t]];
            let factors = action_factors(a);
            let a = a.clamped();
            for pr in 0..geo.grid_rows() {
                for pc in 0..geo.grid_cols() {
                    let nb = geo.neighbourhood(pr, pc);
                    local_dyn_features(&nb, h, &a, &factors, &mut x);
                    let base = (pr * geo.grid_cols() + pc) * CHANNELS;
                    y.copy_from_slice(&targets[t + 1][base..base + CHANNELS]);
                    self.dynamics.add_row(&x, &y);
                }
            }
            self.transitions += 1;
        }
    }

    /// Solves both ridge problems and expands the kernels into dense
    /// matrices. Residual statistics are left at zero; see [`train`].
    pub fn finish(&self, lambda: f64) -> Result<WorldModel, Error> {
        if self.transitions == 0 {
            return Err(Error::EmptyDataset);
        }
        let kd = self.dynamics.solve(lambda)?;
        let kc = self.decoder.solve(lambda)?;
        Ok(WorldModel {
            geometry: self.geometry,
            dyn_w: expand_dynamics(&self.geometry, &kd),
            dec_w: expand_decoder(&self.geometry, &kc),
            ridge_lambda: lambda,
            residuals: ResidualStats::default(),
        })
    }
}

fn local_dyn_features(
    nb: &[usize; NEIGHBOURS],
    hist: [&Vec<f64>; HISTORY],
    a: &Action,
    factors: &[f64; LIFTS],
    x: &mut [f64],
) {
    let mut k = 0;
    for h in hist {
        for &i in nb {
            x[k..k + CHANNELS].copy_from_slice(&h[i..i + CHANNELS]);
            k += CHANNELS;
        }
    }
    x[k] = a.dx as f64;
    x[k + 1] = a.dy as f64;
    x[k + 2] = a.grip as f64;
    k += ACTION_DIM;
    let cur = hist[HISTORY - 1];
    for f in factors {
        for &i in nb {
            for c in 0..CHANNELS {
                x[k + c] = cur[i + c] * f;
            }
            k += CHANNELS;
        }
    }
}

fn local_dec_features(nb: &[usize; NEIGHBOURS], z: &[f64], x: &mut [f64]) {
    for (j, &i) in nb.iter().enumerate() {
        x[j * CHANNELS..(j + 1) * CHANNELS].copy_from_slice(&z[i..i + CHANNELS]);
    }
}

fn patch_pixels(geo: &Geometry, f: &Frame, pr: usize, pc: usize, out: &mut [f64]) {
    let p = geo.patch;
    let mut k = 0;
    for i in 0..p {
        for j in 0..p {
            let px = f.get(pr * p + i, pc * p + j);
            for c in 0..CHANNELS {
                out[k] = px[c] as f64;
                k += 1;
            }
        }
    }
}

fn expand_dynamics(geo: &Geometry, kernel: &[f64]) -> Vec<f32> {
    let d = geo.latent_dim();
    let n_in = geo.dyn_inputs();
    let mut w = vec![0.0f64; d * n_in];
    for pr in 0..geo.grid_rows() {
        for pc in 0..geo.grid_cols() {
            let nb = geo.neighbourhood(pr, pc);
            let out_base = (pr * geo.grid_cols() + pc) * CHANNELS;
            for oc in 0..CHANNELS {
                let row = &mut w[(out_base + oc) * n_in..(out_base + oc + 1) * n_in];
                let mut f = 0;
                for h in 0..HISTORY {
                    for &i in &nb {
                        for c in 0..CHANNELS {
                            row[h * d + i + c] += kernel[f * CHANNELS + oc];
                            f += 1;
                        }
                    }
                }
                for c in 0..ACTION_DIM {
                    row[HISTORY * d + c] += kernel[f * CHANNELS + oc];
                    f += 1;
                }
                for l in 0..LIFTS {
                    let off = HISTORY * d + ACTION_DIM + l * d;
                    for &i in &nb {
                        for c in 0..CHANNELS {
                            row[off + i + c] += kernel[f * CHANNELS + oc];
                            f += 1;
                        }
                    }
                }
            }
        }
    }
    w.into_iter().map(|v| v as f32).collect()
}

fn expand_decoder(geo: &Geometry, kernel: &[f64]) -> Vec<f32> {
    let d = geo.latent_dim();
    let p = geo.patch;
    let n_out = p * p * CHANNELS;
    let mut w = vec![0.0f64; geo.pixels() * d];
    for pr in 0..geo.grid_rows() {
        for pc in 0..geo.grid_cols() {
            let nb = geo.neighbourhood(pr, pc);
            for i in 0..p {
                for j in 0..p {
                    for oc in 0..CHANNELS {
                        let o = (i * p + j) * CHANNELS + oc;
                        let pix = ((pr * p + i) * geo.width + pc * p + j) * CHANNELS + oc;
                        let row = &mut w[pix * d..(pix + 1) * d];
                        for (n, &zi) in nb.iter().enumerate() {
                            for c in 0..CHANNELS {
                                row[zi + c] += kernel[(n * CHANNELS + c) * n_out + o];
                            }
                        }
                    }
                }
            }
        }
    }
    w.into_iter().map(|v| v as f32).collect()
}

fn matvec(w: &[f32], cols: usize, x: &[f32]) -> Vec<f32> {
    w.chunks_exact(cols)
        .map(|row| {
            let mut acc = [0.0f32; 8];
            let mut chunks = row.chunks_exact(8);
            let mut xs = x.chunks_exact(8);
            for (r, v) in (&mut chunks).zip(&mut xs) {
                for k in 0..8 {
                    acc[k] += r[k] * v[k];
                }
            }
            let mut s: f32 = acc.iter().sum();
            for (r, v) in chunks.remainder().iter().zip(xs.remainder()) {
                s += r * v;
            }
            s
        })
        .collect()
}

impl WorldModel {
    pub fn latent_dim(&self) -> usize {
        self.geometry.latent_dim()
    }

    pub fn encode(&self, frame: &Frame) -> Result<Latent, Error> {
        encode_with(&self.geometry, frame)
    }

    pub fn decode(&self, z: &[f32]) -> Frame {
        let g = &self.geometry;
        let mut px = matvec(&self.dec_w, self.latent_dim(), z);
        for v in px.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Frame::from_raw(g.height, g.width, px).expect("decoder shape")
    }

    pub fn predict_next(&self, history: [&[f32]; HISTORY], action: &Action) -> Latent {
        let u = dyn_input(history, action);
        matvec(&self.dyn_w, self.geometry.dyn_inputs(), &u)
    }

    /// Predicted latents for every step of `plan`. Missing history before
    /// `frame0` repeats the earliest available frame.
    pub fn rollout_latents(&self, frame0: &Frame, warmup: &[Frame], plan: &[Action]) -> Result<Vec<Latent>, Error> {
        if plan.is_empty() {
            return Err(Error::EmptyPlan);
        }
        let mut hist: Vec<Latent> = Vec::with_capacity(HISTORY);
        for f in warmup.iter().rev().take(HISTORY - 1).rev() {
            hist.push(self.encode(f)?);
        }
        hist.push(self.encode(frame0)?);
        while hist.len() < HISTORY {
            let first = hist[0].clone();
            hist.insert(0, first);
        }
        let mut out = Vec::with_capacity(plan.len());
        for a in plan {
            let next = self.predict_next([&hist[0], &hist[1], &hist[2]], a);
            hist.remove(0);
            hist.push(next.clone());
            out.push(next);
        }
        Ok(out)
    }

    /// Decoded predictions for steps `1..=T`.
    pub fn rollout(&self, frame0: &Frame, warmup: &[Frame], plan: &[Action]) -> Result<Vec<Frame>, Error> {
        Ok(self.rollout_latents(frame0, warmup, plan)?.iter().map(|z| self.decode(z)).collect())
    }

    /// Per-step latent error `||z_hat(t) - encode(frame(t))||` for `t = 1..=T`.
    pub fn latent_errors(&self, traj: &Trajectory) -> Result<Vec<f64>, Error> {
        traj.validate()?;
        let pred = self.rollout_latents(&traj.frames[0], &[], &traj.actions)?;
        pred.iter()
            .zip(&traj.frames[1..])
            .map(|(p, f)| Ok(l2(p, &self.encode(f)?)))
            .collect()
    }

    /// Summed latent error over the horizon.
    pub fn latent_error(&self, traj: &Trajectory) -> Result<f64, Error> {
        Ok(self.latent_errors(traj)?.iter().sum())
    }

    /// Teacher-forced one-step residual norms of a trajectory.
    pub fn one_step_residuals(&self, traj: &Trajectory) -> Result<Vec<f64>, Error> {
        traj.validate()?;
        let zs: Vec<Latent> = traj.frames.iter().map(|f| self.encode(f)).collect::<Result<_, _>>()?;
        Ok(traj
            .actions
            .iter()
            .enumerate()
            .map(|(t, a)| {
                let p = self.predict_next([&zs[t.saturating_sub(2)], &zs[t.saturating_sub(1)], &zs[t]], a);
                l2(&p, &zs[t + 1])
            })
            .collect())
    }

    /// RMS pixel error of decoding the encoded frame.
    pub fn reconstruction_rms(&self, frame: &Frame) -> Result<f64, Error> {
        let rec = self.decode(&self.encode(frame)?);
        let n = frame.data().len() as f64;
        let s: f64 = rec.data().iter().zip(frame.data()).map(|(a, b)| { let d = (a - b) as f64; d * d }).sum();
        Ok(libm::sqrt(s / n))
    }
}

pub fn l2(a: &[f32], b: &[f32]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| { let d = (x - y) as f64; d * d }).sum())
}

/// Running mean/max used for the residual statistics.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningStats {
    sum: f64,
    max: f64,
    n: usize,
}

impl RunningStats {
    pub fn push(&mut self, v: f64) {
        self.sum += v;
        self.max = self.max.max(v);
        self.n += 1;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// Fits the model on an in-memory dataset and records training residuals.
pub fn train(dataset: &[Trajectory], lambda: f64) -> Result<WorldModel, Error> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let geo = Geometry::DEFAULT;
    let mut trainer = Trainer::new(geo);
    for t in dataset {
        trainer.add(t)?;
    }
    let mut model = trainer.finish(lambda)?;
    let mut dyn_stats = RunningStats::default();
    let mut dec_stats = RunningStats::default();
    for t in dataset {
        for r in model.one_step_residuals(t)? {
            dyn_stats.push(r);
        }
        for f in &t.frames {
            dec_stats.push(model.reconstruction_rms(f)?);
        }
    }
    model.residuals = ResidualStats {
        dyn_mean: dyn_stats.mean(),
        dyn_max: dyn_stats.max(),
        dec_mean: dec_stats.mean(),
        dec_max: dec_stats.max(),
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Pos, BACKGROUND};

    fn gray() -> Frame {
        Frame::filled(64, 64, BACKGROUND)
    }

    #[test]
    fn uniform_frame_encodes_to_constant() {
        assert!(encode(&gray()).unwrap().iter().all(|v| (*v - 0.7).abs() < 1e-6));
    }

    #[test]
    fn aligned_patch_touches_three_entries() {
        let mut f = gray();
        for r in 8..16 {
            for c in 16..24 {
                f.set(r, c, [1.0, 0.0, 0.0]);
            }
        }
        let z = encode(&f).unwrap();
        let changed: Vec<usize> = (0..z.len()).filter(|i| (z[*i] - 0.7).abs() > 1e-6).collect();
        assert_eq!(changed, [(8 + 2) * 3, (8 + 2) * 3 + 1, (8 + 2) * 3 + 2]);
    }

    #[test]
    fn encode_rejects_wrong_shape() {
        assert!(matches!(encode(&Frame::zeros(32, 64)), Err(Error::Shape { .. })));
    }

    fn identity_dataset() -> Vec<Trajectory> {
        // each frame equals the previous one, which the tied kernel can express exactly
        let mut out = Vec::new();
        for k in 0..4u32 {
            let mut f = gray();
            for r in 0..64 {
                for c in 0..64 {
                    let v = ((r * 7 + c * 3 + k as usize * 11) % 17) as f32 / 17.0;
                    f.set(r, c, [v, 1.0 - v, 0.5 * v]);
                }
            }
            let mut scene = crate::sim::init_scene(&Default::default(), k as u64).unwrap();
            scene.gripper = Pos::new(0.0, 0.0);
            out.push(Trajectory {
                frames: vec![f.clone(); 4],
                actions: vec![Action::new(0.3 * k as f32, -0.2, (k % 2) as f32), Action::NULL, Action::new(1.0, 1.0, 1.0)],
                metadata: TrajectoryMeta { seed: 0, episode: k as u64, policy: "test".into(), scene },
            });
        }
        out
    }

    #[test]
    fn exact_linear_transitions_are_recovered() {
        let data = identity_dataset();
        let model = train(&data, 1e-9).unwrap();
        assert!(model.residuals.dyn_max <= 1e-6 * 10.0, "{:?}", model.residuals);
        let z = encode(&data[0].frames[0]).unwrap();
        let p = model.predict_next([&z, &z, &z], &Action::new(0.5, 0.5, 0.0));
        // weights are f32, so the bound is relative to the latent's size
        let zero = vec![0.0f32; z.len()];
        assert!(l2(&p, &z) < 1e-4 * l2(&z, &zero), "{}", l2(&p, &z));
    }

    #[test]
    fn zero_history_and_action_predicts_zero() {
        let model = train(&identity_dataset(), 1e-3).unwrap();
        let z = vec![0.0f32; 192];
        assert!(model.predict_next([&z, &z, &z], &Action::NULL).iter().all(|v| *v == 0.0));
        assert!(model.decode(&z).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn prediction_is_homogeneous_in_history_for_null_action() {
        let model = train(&identity_dataset(), 1e-3).unwrap();
        let z: Vec<f32> = (0..192).map(|i| (i % 13) as f32 / 13.0).collect();
        let z2: Vec<f32> = z.iter().map(|v| 2.0 * v).collect();
        let a = model.predict_next([&z, &z, &z], &Action::NULL);
        let b = model.predict_next([&z2, &z2, &z2], &Action::NULL);
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = identity_dataset();
        assert_eq!(train(&data, 1e-3).unwrap(), train(&data, 1e-3).unwrap());
    }

    #[test]
    fn novel_data_is_refused() {
        let mut data = identity_dataset();
        let cfg = crate::sim::SceneConfig { n_novel: 1, ..Default::default() };
        data[1].metadata.scene = crate::sim::init_scene(&cfg, 5).unwrap();
        assert_eq!(train(&data, 1e-3), Err(Error::NovelInTraining));
    }

    #[test]
    fn degenerate_data_without_ridge_is_singular() {
        let mut data = identity_dataset();
        for t in data.iter_mut() {
            for f in t.frames.iter_mut() {
                *f = gray();
            }
        }
        assert!(matches!(train(&data, 0.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn rollout_length_and_empty_plan() {
        let model = train(&identity_dataset(), 1e-3).unwrap();
        let f = gray();
        assert_eq!(model.rollout(&f, &[], &[Action::NULL; 5]).unwrap().len(), 5);
        assert_eq!(model.rollout(&f, &[], &[]), Err(Error::EmptyPlan));
    }
}
