//! Episode generation for training and evaluation datasets.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::{derive_seed, purpose, rng_for};
use crate::sim::{self, init_scene, render, rollout_states, SceneConfig, DEFAULT_HORIZON};
use crate::wm::{Trajectory, TrajectoryMeta};

/// Noise (pixels) on intermediate waypoints of scripted plans.
pub const SCRIPTED_NOISE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMix {
    Scripted,
    Random,
    /// Two scripted episodes in every five, the rest exploration.
    Mixed,
}

impl PolicyMix {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scripted" => Some(Self::Scripted),
            "random" => Some(Self::Random),
            "mixed" => Some(Self::Mixed),
            _ => None,
        }
    }

    pub fn is_scripted(&self, episode: u64) -> bool {
        match self {
            Self::Scripted => true,
            Self::Random => false,
            Self::Mixed => episode % 5 < 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub global_seed: u64,
    pub episode: u64,
    pub n_novel: usize,
    pub policy: PolicyMix,
    pub horizon: usize,
}

impl EpisodeSpec {
    pub fn new(global_seed: u64, episode: u64, n_novel: usize, policy: PolicyMix) -> Self {
        Self { global_seed, episode, n_novel, policy, horizon: DEFAULT_HORIZON }
    }
}

/// Simulates one episode. The number of training obstacles varies between
/// zero and two.
pub fn generate_episode(spec: &EpisodeSpec) -> Result<Trajectory, Error> {
    let scene_seed = derive_seed(spec.global_seed, spec.episode, purpose::SCENE);
    let mut layout = rng_for(spec.global_seed, spec.episode, purpose::SCENE);
    let config = SceneConfig { n_obstacles: layout.gen_range(0..=2), n_novel: spec.n_novel, ..Default::default() };
    let scene = init_scene(&config, scene_seed)?;
    let scripted = spec.policy.is_scripted(spec.episode);
    let plan = if scripted {
        let mut rng = rng_for(spec.global_seed, spec.episode, purpose::POLICY);
        sim::scripted_policy_len(&scene, &scene.task(), SCRIPTED_NOISE, &mut rng, spec.horizon)
    } else {
        let mut rng = rng_for(spec.global_seed, spec.episode, purpose::EXPLORE);
        sim::sample_exploration_plan(&mut rng, spec.horizon)
    };
    let states = rollout_states(&scene, &plan);
    let frames = states.iter().map(|s| render(s).frame).collect();
    Ok(Trajectory {
        frames,
        actions: plan,
        metadata: TrajectoryMeta {
            seed: spec.global_seed,
            episode: spec.episode,
            policy: String::from(if scripted { "scripted" } else { "random" }),
            scene,
        },
    })
}

pub fn generate_dataset(global_seed: u64, episodes: usize, n_novel: usize, policy: PolicyMix) -> Result<Vec<Trajectory>, Error> {
    (0..episodes as u64).map(|e| generate_episode(&EpisodeSpec::new(global_seed, e, n_novel, policy))).collect()
}
