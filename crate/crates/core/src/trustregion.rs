//! Trust region over world-model inputs: a union of balls around training
//! inputs whose rollout error is low, with a Lipschitz-style error bound
//! `eps = L * b + e` for queries that fall inside.
//!
//! Inputs are `x = [z0, flattened plan]`, standardised per dimension.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::percentile;
use crate::sim::Action;
use crate::wm::{Trajectory, WorldModel};

/// Lower bound on per-dimension standard deviation.
pub const STD_FLOOR: f64 = 1e-3;
pub const DEFAULT_MAX_PAIRS: usize = 100_000;
const MIN_PAIR_DISTANCE: f64 = 1e-6;

pub fn query_input(z0: &[f32], plan: &[Action]) -> Vec<f32> {
    let mut x = Vec::with_capacity(z0.len() + 3 * plan.len());
    x.extend_from_slice(z0);
    for a in plan {
        x.extend_from_slice(&a.clamped().as_array());
    }
    x
}

/// Region inputs and summed rollout errors of a dataset.
pub fn dataset_inputs(model: &WorldModel, dataset: &[Trajectory]) -> Result<(Vec<Vec<f32>>, Vec<f64>), Error> {
    let mut points = Vec::with_capacity(dataset.len());
    let mut errors = Vec::with_capacity(dataset.len());
    for t in dataset {
        points.push(query_input(&model.encode(&t.frames[0])?, &t.actions));
        errors.push(model.latent_error(t)?);
    }
    Ok((points, errors))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(points: &[Vec<f32>]) -> Self {
        let d = points[0].len();
        let n = points.len() as f64;
        let mut mean = vec![0.0; d];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += *v as f64;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for p in points {
            for k in 0..d {
                let e = p[k] as f64 - mean[k];
                var[k] += e * e;
            }
        }
        let std = var.into_iter().map(|v| libm::sqrt(v / n).max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn apply(&self, x: &[f32]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (*v as f64 - m) / s).collect()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Largest `|e_i - e_j| / ||x_i - x_j||` over point pairs. All pairs are
/// used when there are at most `max_pairs` of them; otherwise `max_pairs`
/// pairs are drawn at random.
pub fn estimate_lipschitz<R: Rng + ?Sized>(points: &[Vec<f64>], errors: &[f64], max_pairs: usize, rng: &mut R) -> Result<f64, Error> {
    let n = points.len();
    if n < 2 || errors.len() != n {
        return Err(Error::Config("need at least two points with matching errors"));
    }
    let total = n * (n - 1) / 2;
    let mut best: Option<f64> = None;
    let mut visit = |i: usize, j: usize| {
        let d = dist(&points[i], &points[j]);
        if d >= MIN_PAIR_DISTANCE {
            let s = (errors[i] - errors[j]).abs() / d;
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
    };
    if total <= max_pairs {
        for i in 0..n {
            for j in i + 1..n {
                visit(i, j);
            }
        }
    } else {
        for _ in 0..max_pairs {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            visit(i, j);
        }
    }
    best.ok_or(Error::DegeneratePairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Keep points below this percentile of the training errors.
    Percentile(f64),
    Absolute(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildConfig {
    pub threshold: Threshold,
    pub r0: f64,
    pub max_pairs: usize,
    pub standardize: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self { threshold: Threshold::Percentile(75.0), r0: 0.1, max_pairs: DEFAULT_MAX_PAIRS, standardize: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpandConfig {
    pub l_max: f64,
    pub r_step: f64,
    pub r_max: f64,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        Self { l_max: 1.0, r_step: 0.05, r_max: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub standardization: Standardization,
    /// Standardised ball centres.
    pub centers: Vec<Vec<f64>>,
    /// Index of each centre in the dataset the region was built from.
    pub members: Vec<usize>,
    pub radius: f64,
    pub lipschitz: f64,
    pub max_error: f64,
    pub dispersion: f64,
    pub error_threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryResult {
    Inside { bound: f64 },
    Outside { nearest_distance: f64 },
}

impl TrustRegion {
    /// Keeps the points whose error is below the threshold, as balls of
    /// radius `r0`.
    pub fn build<R: Rng + ?Sized>(points: &[Vec<f32>], errors: &[f64], config: &BuildConfig, rng: &mut R) -> Result<Self, Error> {
        if points.len() < 2 || points.len() != errors.len() {
            return Err(Error::Config("need at least two points with matching errors"));
        }
        if !(config.r0 > 0.0) {
            return Err(Error::Config("r0 must be positive"));
        }
        let standardization =
            if config.standardize { Standardization::fit(points) } else { Standardization::identity(points[0].len()) };
        let threshold = match config.threshold {
            Threshold::Percentile(q) => percentile(errors, q),
            Threshold::Absolute(t) => t,
        };
        let members: Vec<usize> = (0..points.len()).filter(|&i| errors[i] < threshold).collect();
        if members.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let centers: Vec<Vec<f64>> = members.iter().map(|&i| standardization.apply(&points[i])).collect();
        let kept: Vec<f64> = members.iter().map(|&i| errors[i]).collect();
        let lipschitz = if centers.len() < 2 {
            0.0
        } else {
            match estimate_lipschitz(&centers, &kept, config.max_pairs, rng) {
                Ok(l) => l,
                Err(Error::DegeneratePairs) => 0.0,
                Err(e) => return Err(e),
            }
        };
        let max_error = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            standardization,
            centers,
            members,
            radius: config.r0,
            lipschitz,
            max_error,
            dispersion: config.r0,
            error_threshold: threshold,
        })
    }

    /// Grows the radius in steps, admitting any training point that the
    /// enlarged balls reach, until the next step would push the Lipschitz
    /// estimate to `l_max` or the radius past `r_max`.
    pub fn expand(&self, points: &[Vec<f32>], errors: &[f64], config: &ExpandConfig) -> Result<Self, Error> {
        if points.len() != errors.len() {
            return Err(Error::Config("points and errors differ in length"));
        }
        let xs: Vec<Vec<f64>> = points.iter().map(|p| self.standardization.apply(p)).collect();
        let n = xs.len();
        let mut admitted = vec![false; n];
        for &m in &self.members {
            if m < n {
                admitted[m] = true;
            }
        }
        let mut members = self.members.clone();
        let mut lipschitz = self.lipschitz;
        let mut max_error = self.max_error;
        let mut radius = self.radius;
        let mut steps = 0usize;
        // nearest admitted distance per point, updated as points join
        let mut nearest: Vec<f64> = (0..n)
            .map(|i| members.iter().map(|&m| dist(&xs[i], &xs[m])).fold(f64::INFINITY, f64::min))
            .collect();
        loop {
            steps += 1;
            let r = self.radius + steps as f64 * config.r_step;
            if r > config.r_max + 1e-12 {
                break;
            }
            let joining: Vec<usize> = (0..n).filter(|&i| !admitted[i] && nearest[i] <= r).collect();
            let mut l = lipschitz;
            for (k, &i) in joining.iter().enumerate() {
                let others = members.iter().chain(joining[..k].iter());
                for &j in others {
                    let d = dist(&xs[i], &xs[j]);
                    if d >= MIN_PAIR_DISTANCE {
                        l = l.max((errors[i] - errors[j]).abs() / d);
                    }
                }
            }
            if l >= config.l_max {
                break;
            }
            for &i in &joining {
                admitted[i] = true;
                members.push(i);
                max_error = max_error.max(errors[i]);
                for (p, near) in nearest.iter_mut().enumerate() {
                    if !admitted[p] {
                        *near = near.min(dist(&xs[p], &xs[i]));
                    }
                }
            }
            lipschitz = l;
            radius = r;
        }
        let centers = members.iter().map(|&i| xs[i].clone()).collect();
        Ok(Self { centers, members, radius, lipschitz, max_error, dispersion: radius, ..self.clone() })
    }

    /// Build followed by expansion over the same points.
    pub fn fit<R: Rng + ?Sized>(
        points: &[Vec<f32>],
        errors: &[f64],
        build: &BuildConfig,
        expand: &ExpandConfig,
        rng: &mut R,
    ) -> Result<Self, Error> {
        Self::build(points, errors, build, rng)?.expand(points, errors, expand)
    }

    pub fn bound(&self) -> f64 {
        self.lipschitz * self.dispersion + self.max_error
    }

    pub fn nearest_distance(&self, x: &[f32]) -> f64 {
        let z = self.standardization.apply(x);
        self.centers.iter().map(|c| dist(&z, c)).fold(f64::INFINITY, f64::min)
    }

    pub fn query(&self, x: &[f32]) -> QueryResult {
        let d = self.nearest_distance(x);
        if d <= self.radius {
            QueryResult::Inside { bound: self.bound() }
        } else {
            QueryResult::Outside { nearest_distance: d }
        }
    }

    pub fn dim(&self) -> usize {
        self.standardization.mean.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn raw(cfg_threshold: f64) -> BuildConfig {
        BuildConfig { threshold: Threshold::Absolute(cfg_threshold), standardize: false, ..Default::default() }
    }

    #[test]
    fn constant_errors_have_zero_slope() {
        let pts = vec![vec![0.0f32, 0.0], vec![1.0, 2.0], vec![3.0, -1.0]];
        let r = TrustRegion::build(&pts, &[0.4, 0.4, 0.4], &raw(1.0), &mut seeded(0)).unwrap();
        assert_eq!(r.lipschitz, 0.0);
        assert_eq!(r.bound(), 0.4);
    }

    #[test]
    fn single_pair_slope() {
        let pts = vec![vec![0.0f32], vec![1.0]];
        let r = TrustRegion::build(&pts, &[0.0, 0.5], &raw(1.0), &mut seeded(0)).unwrap();
        assert_eq!(r.lipschitz, 0.5);
    }

    #[test]
    fn reference_scale_bound() {
        let r = TrustRegion {
            standardization: Standardization::identity(1),
            centers: vec![vec![0.0]],
            members: vec![0],
            radius: 0.1,
            lipschitz: 0.84,
            max_error: 2.0,
            dispersion: 0.1,
            error_threshold: 3.0,
        };
        assert!((r.bound() - (0.084 + 2.0)).abs() < 1e-12);
        let r = TrustRegion { lipschitz: 2.0, dispersion: 0.5, radius: 0.5, max_error: 0.1, ..r };
        assert_eq!(r.query(&[0.0]), QueryResult::Inside { bound: 1.1 });
    }

    #[test]
    fn colinear_linear_errors() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let errs: Vec<f64> = pts.iter().map(|p| libm::sqrt(p[0] * p[0] + p[1] * p[1])).collect();
        let l = estimate_lipschitz(&pts, &errs, 1000, &mut seeded(0)).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pairs_rejected() {
        let pts = vec![vec![1.0], vec![1.0]];
        assert_eq!(estimate_lipschitz(&pts, &[0.0, 1.0], 10, &mut seeded(0)), Err(Error::DegeneratePairs));
    }

    #[test]
    fn no_points_below_threshold() {
        let pts = vec![vec![0.0f32], vec![1.0]];
        assert_eq!(TrustRegion::build(&pts, &[2.0, 3.0], &raw(1.0), &mut seeded(0)), Err(Error::EmptyRegion));
    }

    #[test]
    fn boundary_is_exact() {
        let pts = vec![vec![0.0f32], vec![100.0]];
        let cfg = BuildConfig { r0: 0.125, ..raw(1.0) };
        let r = TrustRegion::build(&pts, &[0.0, 5.0], &cfg, &mut seeded(0)).unwrap();
        assert!(matches!(r.query(&[0.0]), QueryResult::Inside { .. }));
        assert!(matches!(r.query(&[0.125]), QueryResult::Inside { .. }));
        assert!(matches!(r.query(&[0.126]), QueryResult::Outside { .. }));
    }

    #[test]
    fn zero_slope_expands_to_max() {
        let pts: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32 * 0.3]).collect();
        let errs = vec![1.0; 10];
        let r = TrustRegion::build(&pts, &errs, &raw(2.0), &mut seeded(0)).unwrap();
        let cfg = ExpandConfig { r_max: 0.6, ..Default::default() };
        let e = r.expand(&pts, &errs, &cfg).unwrap();
        assert!((e.radius - 0.6).abs() < 1e-9);
        assert_eq!(e.dispersion, e.radius);
    }

    #[test]
    fn steep_pair_halts_expansion() {
        // kept point at 0, a high-error point 0.32 away with slope above 9
        let pts = vec![vec![0.0f32], vec![0.32], vec![5.0]];
        let errs = [0.0, 3.0, 0.0];
        let r = TrustRegion::build(&pts, &errs, &raw(1.0), &mut seeded(0)).unwrap();
        let e = r.expand(&pts, &errs, &ExpandConfig { r_max: 2.0, ..Default::default() }).unwrap();
        assert!((e.radius - 0.3).abs() < 1e-9, "{}", e.radius);
        assert!(!e.members.contains(&1));
    }
}
