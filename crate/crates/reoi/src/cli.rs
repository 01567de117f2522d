//! The `reoi` command line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use reoi_core::data::PolicyMix;
use reoi_core::distractor::{identify, Exemption, IdentifyConfig};
use reoi_core::eval::{bench_scene, eval_scenes, plan_with, BenchConfig, EvalMode, PredReport};
use reoi_core::frame::{Rect, Rgb};
use reoi_core::mpc::{Intervention, Mode, Observation, Verdict};
use reoi_core::rng::{derive_seed, purpose, seeded};
use reoi_core::sim::{check_outcome, init_scene, render, rollout_states, scripted_policy, Outcome, SceneConfig};
use reoi_core::trustregion::{dataset_inputs, TrustRegion};
use reoi_core::wm::{train, WorldModel};
use serde::Serialize;

use crate::config::{parse_modes, RunConfig};
use crate::harness;
use crate::io::{self, ModelManifest, RegionManifest};
use crate::report::{write_report, Meta};

#[derive(Debug, Parser)]
#[command(name = "reoi", version, about = "Distractor-robust world-model planning experiments")]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: REOI_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset of episodes.
    GenData(GenData),
    /// Fit the world model and its trust region.
    Train(Train),
    /// Score rollout predictions against simulated ground truth.
    EvalPred(EvalPred),
    /// Plan once on a benchmark scene and export the candidate rollouts.
    Plan(Plan),
    /// Run the planning benchmark.
    Bench(Bench),
    /// Flag distractors in a rendered scene.
    Identify(Identify),
    /// Render a scene, or a scripted episode as a filmstrip.
    Render(Render),
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub novel: Option<u8>,
    #[arg(long, value_parser = ["scripted", "random", "mixed"])]
    pub policy: Option<String>,
}

#[derive(Debug, Args)]
pub struct Train {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Trust-region file (default: `<out>.region`).
    #[arg(long)]
    pub region_out: Option<PathBuf>,
    /// Training report (default: `<out>.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Trust-region file, needed by the trustregion mode.
    #[arg(long)]
    pub region: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalPred {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub novel: Option<u8>,
}

#[derive(Debug, Args)]
pub struct Plan {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory for the JSON result and filmstrips.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "reoi")]
    pub mode: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub episode: u64,
}

#[derive(Debug, Args)]
pub struct Bench {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub modes: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Identify {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub novel: u8,
    /// Also write the frame and one bitmap per flagged segment here.
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Render {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub novel: u8,
    /// Execute a scripted plan and render every step side by side.
    #[arg(long)]
    pub episode: bool,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let pool = harness::pool(cfg.threads)?;
    pool.install(|| match cli.command {
        Command::GenData(a) => gen_data(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::EvalPred(a) => eval_pred(cfg, a),
        Command::Plan(a) => plan(cfg, a),
        Command::Bench(a) => bench(cfg, a),
        Command::Identify(a) => cmd_identify(cfg, a),
        Command::Render(a) => cmd_render(cfg, a),
    })
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct DataSummary {
    episodes: usize,
    scripted: usize,
    novel: usize,
    policy: PolicyMix,
    dataset_hash: String,
}

pub const MANIFEST: &str = "manifest.json";

fn gen_data(mut cfg: RunConfig, a: GenData) -> anyhow::Result<()> {
    cfg.global_seed = a.seed.unwrap_or(cfg.global_seed);
    cfg.data.episodes = a.episodes.unwrap_or(cfg.data.episodes);
    cfg.data.novel = a.novel.map_or(cfg.data.novel, usize::from);
    if let Some(p) = &a.policy {
        cfg.data.policy = PolicyMix::parse(p).expect("clap restricts the values");
    }
    cfg.paths.out = Some(a.out.clone());
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if !io::episode_paths(&a.out)?.is_empty() {
        bail!("{} already holds episodes; use an empty directory", a.out.display());
    }
    let d = &cfg.data;
    let eps = harness::generate(cfg.global_seed, d.episodes, d.novel, d.policy)?;
    for (i, t) in eps.iter().enumerate() {
        io::save_episode(&a.out.join(format!("episode_{i:05}.{}", io::EPISODE_EXT)), t)?;
    }
    let hash = io::hash_dataset(&a.out)?;
    let summary = DataSummary {
        episodes: eps.len(),
        scripted: eps.iter().filter(|t| t.metadata.policy == "scripted").count(),
        novel: d.novel,
        policy: d.policy,
        dataset_hash: hash.clone(),
    };
    let mut meta = Meta::new("gen-data", &cfg, vec![cfg.global_seed]);
    meta.dataset_hash = Some(hash);
    write_report(&a.out.join(MANIFEST), meta, summary)
}

#[derive(Serialize)]
struct RegionSummary {
    centers: usize,
    radius: f64,
    lipschitz: f64,
    max_error: f64,
    dispersion: f64,
    bound: f64,
    error_threshold: f64,
}

impl RegionSummary {
    fn of(r: &TrustRegion) -> Self {
        Self {
            centers: r.centers.len(),
            radius: r.radius,
            lipschitz: r.lipschitz,
            max_error: r.max_error,
            dispersion: r.dispersion,
            bound: r.bound(),
            error_threshold: r.error_threshold,
        }
    }
}

#[derive(Serialize)]
struct TrainSummary {
    episodes: usize,
    transitions: usize,
    ridge: f64,
    residuals: reoi_core::wm::ResidualStats,
    region: RegionSummary,
}

fn cmd_train(mut cfg: RunConfig, a: Train) -> anyhow::Result<()> {
    cfg.train.ridge = a.ridge.unwrap_or(cfg.train.ridge);
    cfg.paths.data = Some(a.data.clone());
    cfg.paths.model = Some(a.out.clone());
    let region_path = a.region_out.clone().unwrap_or_else(|| with_suffix(&a.out, ".region"));
    cfg.paths.region = Some(region_path.clone());
    let data = io::load_dataset(&a.data)?;
    if data.is_empty() {
        bail!("no episodes in {}", a.data.display());
    }
    let dataset_hash = io::hash_dataset(&a.data)?;
    let model = train(&data, cfg.train.ridge).context("training refused")?;
    let transitions = data.iter().map(|t| t.actions.len()).sum();
    let manifest = ModelManifest { dataset_hash: dataset_hash.clone(), episodes: data.len(), transitions, lifts: reoi_core::wm::LIFTS };
    io::save_model(&a.out, &model, &manifest)?;
    let model_hash = io::hash_file(&a.out)?;

    let (points, errors) = dataset_inputs(&model, &data)?;
    let mut rng = seeded(derive_seed(cfg.global_seed, 0, purpose::LIPSCHITZ));
    let region = TrustRegion::fit(&points, &errors, &cfg.train.region_build, &cfg.train.region_expand, &mut rng)?;
    let rm = RegionManifest {
        model_hash: model_hash.clone(),
        dataset_hash: dataset_hash.clone(),
        error_threshold: region.error_threshold,
        members: region.members.clone(),
    };
    io::save_region(&region_path, &region, &rm)?;

    let mut meta = Meta::new("train", &cfg, vec![cfg.global_seed]);
    meta.dataset_hash = Some(dataset_hash);
    meta.model_hash = Some(model_hash);
    meta.region_hash = Some(io::hash_file(&region_path)?);
    let summary = TrainSummary {
        episodes: data.len(),
        transitions,
        ridge: cfg.train.ridge,
        residuals: model.residuals,
        region: RegionSummary::of(&region),
    };
    write_report(&a.report.unwrap_or_else(|| with_suffix(&a.out, ".json")), meta, summary)
}

struct Loaded {
    model: WorldModel,
    region: Option<TrustRegion>,
    meta_hashes: (String, String, Option<String>),
}

fn load_artifacts(args: &ModelArgs, need_region: bool) -> anyhow::Result<Loaded> {
    let (model, manifest) = io::load_model(&args.model)?;
    let model_hash = io::hash_file(&args.model)?;
    let region = match &args.region {
        Some(p) => Some((io::load_region(p)?.0, io::hash_file(p)?)),
        None if need_region => bail!("the trustregion mode needs --region"),
        None => None,
    };
    let region_hash = region.as_ref().map(|r| r.1.clone());
    Ok(Loaded { model, region: region.map(|r| r.0), meta_hashes: (manifest.dataset_hash, model_hash, region_hash) })
}

fn stamp(meta: &mut Meta, l: &Loaded) {
    meta.dataset_hash = Some(l.meta_hashes.0.clone());
    meta.model_hash = Some(l.meta_hashes.1.clone());
    meta.region_hash = l.meta_hashes.2.clone();
}

fn eval_pred(mut cfg: RunConfig, a: EvalPred) -> anyhow::Result<()> {
    cfg.global_seed = a.seed.unwrap_or(cfg.global_seed);
    cfg.eval.scenes = a.scenes.unwrap_or(cfg.eval.scenes);
    cfg.eval.novel = a.novel.map_or(cfg.eval.novel, usize::from);
    cfg.paths.model = Some(a.model.model.clone());
    cfg.paths.out = Some(a.out.clone());
    let l = load_artifacts(&a.model, false)?;
    let scenes = eval_scenes(cfg.global_seed, cfg.eval.scenes, cfg.eval.novel, cfg.eval.noise)?;
    let reports: Vec<PredReport> = [EvalMode::Baseline, EvalMode::Reoi]
        .into_iter()
        .map(|m| harness::eval_pred(&l.model, &scenes, m, &cfg.planner.identify))
        .collect::<Result<_, _>>()?;
    let mut meta = Meta::new("eval-pred", &cfg, vec![cfg.global_seed]);
    stamp(&mut meta, &l);
    write_report(&a.out, meta, reports)
}

#[derive(Serialize)]
struct CandidateSummary {
    index: usize,
    verdict: Verdict,
    reward: Option<f64>,
    outcome: Outcome,
}

#[derive(Serialize)]
struct PlanSummary {
    mode: Mode,
    episode: u64,
    chosen: Option<usize>,
    needs_human: bool,
    executed: Option<Outcome>,
    flagged: Vec<SegmentSummary>,
    candidates: Vec<CandidateSummary>,
}

fn plan(mut cfg: RunConfig, a: Plan) -> anyhow::Result<()> {
    let mode = Mode::parse(&a.mode).ok_or_else(|| anyhow::anyhow!("unknown mode {:?}", a.mode))?;
    cfg.global_seed = a.seed.unwrap_or(cfg.global_seed);
    cfg.modes = vec![mode];
    cfg.paths.model = Some(a.model.model.clone());
    cfg.paths.region = a.model.region.clone();
    cfg.paths.out = Some(a.out.clone());
    let l = load_artifacts(&a.model, mode == Mode::Trustregion)?;
    let state = bench_scene(&cfg.bench_scene, derive_seed(cfg.global_seed, a.episode, purpose::SCENE))?;
    let out = render(&state);
    let obs = Observation { frame: &out.frame, state: &state, depth_map: None };
    let seed = derive_seed(cfg.global_seed, a.episode, purpose::PLANNER);
    let result = plan_with(mode, &l.model, l.region.as_ref(), &obs, &cfg.planner, seed)?;

    fs::create_dir_all(&a.out)?;
    io::write_atomic(&a.out.join("observation.ppm"), &io::ppm(&out.frame))?;
    if let Some(rep) = &result.identification {
        if mode == Mode::Reoi {
            let iv = Intervention::new(&out.frame, rep, None)?;
            io::write_atomic(&a.out.join("intervened.ppm"), &io::ppm(&iv.intervened))?;
        }
    }
    let mut candidates = Vec::new();
    for (i, (p, v)) in result.plans.iter().zip(&result.verdicts).enumerate() {
        if let Some(strip) = io::filmstrip(&result.rollouts[i]) {
            io::write_atomic(&a.out.join(format!("candidate_{i}.ppm")), &io::ppm(&strip))?;
        }
        let reward = match v {
            Verdict::Accept { reward } => Some(*reward),
            _ => None,
        };
        candidates.push(CandidateSummary { index: i, verdict: *v, reward, outcome: check_outcome(&rollout_states(&state, p)) });
    }
    let summary = PlanSummary {
        mode,
        episode: a.episode,
        chosen: result.chosen,
        needs_human: result.chosen.is_none(),
        executed: result.chosen.map(|i| candidates[i].outcome),
        flagged: result.identification.as_ref().map(segment_summaries).unwrap_or_default().into_iter().filter(|s| s.flagged).collect(),
        candidates,
    };
    let mut meta = Meta::new("plan", &cfg, vec![cfg.global_seed, a.episode]);
    stamp(&mut meta, &l);
    write_report(&a.out.join("plan.json"), meta, summary)
}

fn bench(mut cfg: RunConfig, a: Bench) -> anyhow::Result<()> {
    cfg.global_seed = a.seed.unwrap_or(cfg.global_seed);
    cfg.bench_episodes = a.episodes.unwrap_or(cfg.bench_episodes);
    if let Some(m) = &a.modes {
        cfg.modes = parse_modes(m)?;
    }
    if cfg.modes.is_empty() {
        bail!("no modes selected");
    }
    cfg.paths.model = Some(a.model.model.clone());
    cfg.paths.region = a.model.region.clone();
    cfg.paths.out = Some(a.out.clone());
    let l = load_artifacts(&a.model, cfg.modes.contains(&Mode::Trustregion))?;
    let bc = BenchConfig {
        global_seed: cfg.global_seed,
        episodes: cfg.bench_episodes,
        modes: cfg.modes.clone(),
        planner: cfg.planner.clone(),
        scene: cfg.bench_scene.clone(),
    };
    let report = harness::bench(&l.model, l.region.as_ref(), &bc)?;
    let mut meta = Meta::new("bench", &cfg, (0..cfg.bench_episodes as u64).map(|e| derive_seed(cfg.global_seed, e, purpose::SCENE)).collect());
    stamp(&mut meta, &l);
    write_report(&a.out, meta, report)
}

#[derive(Clone, Serialize)]
struct SegmentSummary {
    id: u32,
    bbox: Rect,
    area: usize,
    mean_color: Rgb,
    score: f64,
    exemption: Option<Exemption>,
    flagged: bool,
}

fn segment_summaries(rep: &reoi_core::distractor::IdentificationReport) -> Vec<SegmentSummary> {
    rep.segments
        .iter()
        .zip(rep.scores.iter().zip(&rep.exemptions))
        .map(|(s, (score, ex))| SegmentSummary {
            id: s.id,
            bbox: s.bbox,
            area: s.area,
            mean_color: s.mean_color,
            score: *score,
            exemption: *ex,
            flagged: rep.flagged.contains(&s.id),
        })
        .collect()
}

#[derive(Serialize)]
struct IdentifySummary {
    tau: f64,
    check_frame_index: usize,
    n_flagged: usize,
    segments: Vec<SegmentSummary>,
}

fn scene_for(seed: u64, novel: u8) -> anyhow::Result<reoi_core::sim::SceneState> {
    Ok(init_scene(&SceneConfig { n_novel: novel.into(), ..Default::default() }, seed)?)
}

fn cmd_identify(mut cfg: RunConfig, a: Identify) -> anyhow::Result<()> {
    cfg.global_seed = a.seed.unwrap_or(cfg.global_seed);
    cfg.paths.model = Some(a.model.clone());
    cfg.paths.out = Some(a.out.clone());
    let l = load_artifacts(&ModelArgs { model: a.model.clone(), region: None }, false)?;
    let state = scene_for(cfg.global_seed, a.novel)?;
    let frame = render(&state).frame;
    let id_cfg: &IdentifyConfig = &cfg.planner.identify;
    let rep = identify(&l.model, &frame, &state.task(), id_cfg)?;
    if let Some(dir) = &a.images {
        fs::create_dir_all(dir)?;
        io::write_atomic(&dir.join("frame.ppm"), &io::ppm(&frame))?;
        for s in rep.flagged_segments() {
            io::write_atomic(&dir.join(format!("flagged_{}.pbm", s.id)), &io::pbm(&s.mask))?;
        }
    }
    let summary =
        IdentifySummary { tau: rep.tau, check_frame_index: rep.check_frame_index, n_flagged: rep.flagged.len(), segments: segment_summaries(&rep) };
    let mut meta = Meta::new("identify", &cfg, vec![cfg.global_seed]);
    stamp(&mut meta, &l);
    write_report(&a.out, meta, summary)
}

fn cmd_render(mut cfg: RunConfig, a: Render) -> anyhow::Result<()> {
    cfg.global_seed = a.seed.unwrap_or(cfg.global_seed);
    let state = scene_for(cfg.global_seed, a.novel)?;
    let image = if a.episode {
        let plan = scripted_policy(&state, &state.task(), 4.0, &mut seeded(derive_seed(cfg.global_seed, 0, purpose::POLICY)));
        let frames: Vec<_> = rollout_states(&state, &plan).iter().map(|s| render(s).frame).collect();
        io::filmstrip(&frames).expect("rollout has frames")
    } else {
        render(&state).frame
    };
    io::write_atomic(&a.out, &io::ppm(&image))?;
    Ok(())
}
