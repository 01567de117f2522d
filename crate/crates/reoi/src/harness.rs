//! Parallel drivers around the core experiments. Work is split per episode
//! or per scene and gathered back in index order, so results never depend on
//! the thread count.

use rayon::prelude::*;
use reoi_core::data::{generate_episode, EpisodeSpec, PolicyMix};
use reoi_core::eval::{
    run_episode, score_scene, summarize_bench, summarize_pred, BenchConfig, BenchReport, EvalMode, EvalScene, PredReport,
};
use reoi_core::distractor::IdentifyConfig;
use reoi_core::trustregion::TrustRegion;
use reoi_core::wm::{Trajectory, WorldModel};
use reoi_core::Error;

pub const THREADS_ENV: &str = "REOI_THREADS";

/// Thread pool sized by `threads`, else `REOI_THREADS`, else one thread per
/// logical core.
pub fn pool(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| anyhow::anyhow!("{THREADS_ENV}={v:?} is not a thread count"))?,
            Err(_) => 0,
        },
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

pub fn generate(global_seed: u64, episodes: usize, n_novel: usize, policy: PolicyMix) -> Result<Vec<Trajectory>, Error> {
    (0..episodes as u64)
        .into_par_iter()
        .map(|e| generate_episode(&EpisodeSpec::new(global_seed, e, n_novel, policy)))
        .collect()
}

pub fn eval_pred(model: &WorldModel, scenes: &[EvalScene], mode: EvalMode, config: &IdentifyConfig) -> Result<PredReport, Error> {
    let scores = scenes.par_iter().map(|s| score_scene(model, s, mode, config)).collect::<Result<Vec<_>, _>>()?;
    summarize_pred(mode, scores, scenes.first().map_or(0, |s| s.plan.len()))
}

/// Same records and order as the sequential benchmark: modes outermost,
/// then episodes.
pub fn bench(model: &WorldModel, region: Option<&TrustRegion>, config: &BenchConfig) -> Result<BenchReport, Error> {
    let jobs: Vec<_> = config.modes.iter().flat_map(|&m| (0..config.episodes as u64).map(move |e| (m, e))).collect();
    let records = jobs.par_iter().map(|&(m, e)| run_episode(model, region, m, config, e)).collect::<Result<Vec<_>, _>>()?;
    Ok(summarize_bench(records))
}
