//! Checks that need a trained model. One model is shared by every test.

use std::sync::OnceLock;

use reoi_core::data::{generate_dataset, PolicyMix};
use reoi_core::distractor::{identify, IdentifyConfig};
use reoi_core::eval::{bench_scene, eval_pred, eval_scenes, plan_with, BenchSceneConfig, EvalMode};
use reoi_core::mpc::{verify, Mode, Observation, PlannerConfig, RejectReason, Verdict};
use reoi_core::rng::{derive_seed, purpose, seeded};
use reoi_core::sim::{init_scene, render, rollout_states, scripted_policy, Category, Role, SceneConfig, SceneState};
use reoi_core::trustregion::{dataset_inputs, query_input, BuildConfig, ExpandConfig, QueryResult, TrustRegion};
use reoi_core::wm::{train, Trajectory, TrajectoryMeta, WorldModel};

struct Fixture {
    data: Vec<Trajectory>,
    model: WorldModel,
    region: TrustRegion,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let data = generate_dataset(0, 300, 0, PolicyMix::Mixed).unwrap();
        let model = train(&data, 1e-3).unwrap();
        let (p, e) = dataset_inputs(&model, &data).unwrap();
        let region = TrustRegion::fit(&p, &e, &BuildConfig::default(), &ExpandConfig::default(), &mut seeded(5)).unwrap();
        Fixture { data, model, region }
    })
}

fn simulate(state: &SceneState, seed: u64) -> Trajectory {
    let plan = scripted_policy(state, &state.task(), 4.0, &mut seeded(seed));
    let frames = rollout_states(state, &plan).iter().map(|s| render(s).frame).collect();
    Trajectory {
        frames,
        actions: plan,
        metadata: TrajectoryMeta { seed, episode: 0, policy: "scripted".into(), scene: state.clone() },
    }
}

#[test]
fn heldout_residuals_stay_near_training() {
    let f = fixture();
    let limit = 3.0 * f.model.residuals.dyn_max;
    assert!(f.model.residuals.dyn_max.is_finite() && f.model.residuals.dec_max.is_finite());
    for t in generate_dataset(1, 40, 0, PolicyMix::Mixed).unwrap() {
        for r in f.model.one_step_residuals(&t).unwrap() {
            assert!(r <= limit, "{r} > {limit}");
        }
    }
}

#[test]
fn rollout_error_compounds() {
    let f = fixture();
    let held = generate_dataset(2, 100, 0, PolicyMix::Mixed).unwrap();
    let mut mean = vec![0.0; held[0].actions.len()];
    for t in &held {
        for (m, e) in mean.iter_mut().zip(f.model.latent_errors(t).unwrap()) {
            *m += e / held.len() as f64;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] >= w[0]), "{mean:?}");
}

#[test]
fn pasted_distractor_raises_latent_error() {
    let f = fixture();
    let (mut clean, mut pasted) = (0.0, 0.0);
    for s in 0..30u64 {
        let st = init_scene(&SceneConfig::default(), 4000 + s).unwrap();
        let donor = init_scene(&SceneConfig { n_novel: 1, n_obstacles: 0, ..Default::default() }, 4100 + s).unwrap();
        let mut novel = donor.objects.iter().find(|o| o.category == Category::Novel).unwrap().clone();
        novel.id = 99;
        novel.depth_rank = 99;
        let mut with = st.clone();
        with.objects.push(novel);
        clean += f.model.latent_error(&simulate(&st, s)).unwrap();
        pasted += f.model.latent_error(&simulate(&with, s)).unwrap();
    }
    assert!(clean <= pasted, "{clean} vs {pasted}");
}

#[test]
fn identification_spares_clean_scenes_and_targets() {
    let f = fixture();
    let cfg = IdentifyConfig::default();
    let mut noisy = 0;
    for s in 0..30u64 {
        let st = init_scene(&SceneConfig::default(), 6000 + s).unwrap();
        let frame = render(&st).frame;
        let rep = identify(&f.model, &frame, &st.task(), &cfg).unwrap();
        assert_eq!(rep, identify(&f.model, &frame, &st.task(), &cfg).unwrap());
        noisy += usize::from(!rep.flagged.is_empty());

        let st = init_scene(&SceneConfig { n_novel: 2, ..Default::default() }, 6100 + s).unwrap();
        let out = render(&st);
        let rep = identify(&f.model, &out.frame, &st.task(), &cfg).unwrap();
        for seg in rep.flagged_segments() {
            let (r, c) = seg.mask.iter_set().next().unwrap();
            let owner = st.object(out.label_map[r * 64 + c]);
            assert!(owner.map_or(true, |o| o.role != Role::Target));
        }
    }
    assert!(noisy <= 3, "{noisy} clean scenes flagged");
}

#[test]
fn reoi_matches_baseline_without_distractors() {
    let f = fixture();
    let scenes = eval_scenes(11, 8, 0, 4.0).unwrap();
    let cfg = IdentifyConfig::default();
    let a = eval_pred(&f.model, &scenes, EvalMode::Baseline, &cfg).unwrap();
    let b = eval_pred(&f.model, &scenes, EvalMode::Reoi, &cfg).unwrap();
    assert!((a.ssim_full.mean - b.ssim_full.mean).abs() < 0.02);
    assert_eq!(f.model.rollout(&scenes[0].frames[0], &[], &scenes[0].plan).unwrap(), f.model.rollout(&scenes[0].frames[0], &[], &scenes[0].plan).unwrap());
}

#[test]
fn reoi_never_picks_a_rollout_through_a_flagged_object() {
    let f = fixture();
    let sc = BenchSceneConfig::default();
    for ep in 0..8u64 {
        let st = bench_scene(&sc, derive_seed(3, ep, purpose::SCENE)).unwrap();
        let frame = render(&st).frame;
        let obs = Observation { frame: &frame, state: &st, depth_map: None };
        let r = plan_with(Mode::Reoi, &f.model, None, &obs, &PlannerConfig::default(), ep).unwrap();
        if let Some(i) = r.chosen {
            let masks: Vec<_> = r.identification.as_ref().unwrap().flagged_segments().map(|s| s.mask.clone()).collect();
            assert!(matches!(verify(&r.rollouts[i], &st.task(), &masks), Verdict::Accept { .. }));
        }
    }
}

#[test]
fn trust_region_admits_training_inputs_only() {
    let f = fixture();
    let member = f.region.members[0];
    let t = &f.data[member];
    let x = query_input(&f.model.encode(&t.frames[0]).unwrap(), &t.actions);
    assert!(matches!(f.region.query(&x), QueryResult::Inside { .. }));

    let sc = BenchSceneConfig::default();
    let mut all_out = 0;
    for ep in 0..20u64 {
        let st = bench_scene(&sc, derive_seed(4, ep, purpose::SCENE)).unwrap();
        let frame = render(&st).frame;
        let obs = Observation { frame: &frame, state: &st, depth_map: None };
        let r = plan_with(Mode::Trustregion, &f.model, Some(&f.region), &obs, &PlannerConfig::default(), ep).unwrap();
        let out = r.verdicts.iter().all(|v| matches!(v, Verdict::RejectUnsafe { reason: RejectReason::OutOfRegion, .. }));
        all_out += usize::from(out);
    }
    assert!(all_out >= 16, "{all_out}/20");
}

#[test]
fn trust_region_planner_is_baseline_inside_the_region() {
    let f = fixture();
    let member = f.region.members.iter().copied().find(|&i| f.data[i].metadata.policy == "scripted").unwrap();
    let t = &f.data[member];
    let st = &t.metadata.scene;
    let obs = Observation { frame: &t.frames[0], state: st, depth_map: None };
    let cfg = PlannerConfig { n_candidates: 4, ..Default::default() };
    let base = plan_with(Mode::Baseline, &f.model, None, &obs, &cfg, 9).unwrap();
    let tr = plan_with(Mode::Trustregion, &f.model, Some(&f.region), &obs, &cfg, 9).unwrap();
    assert_eq!(base.plans, tr.plans);
    for (i, (b, r)) in base.verdicts.iter().zip(&tr.verdicts).enumerate() {
        let x = query_input(&f.model.encode(&t.frames[0]).unwrap(), &tr.plans[i]);
        match f.region.query(&x) {
            QueryResult::Inside { .. } => assert_eq!(b, r),
            QueryResult::Outside { .. } => {
                assert_eq!(*r, Verdict::RejectUnsafe { frame_index: 0, reason: RejectReason::OutOfRegion })
            }
        }
    }
}
