use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reoi_core::composite::{composite, decompose, ground_truth_stack, reinsert, Layer};
use reoi_core::distractor::inpaint;
use reoi_core::frame::{Frame, Mask, Rect};
use reoi_core::metrics::ssim;
use reoi_core::mpc::{select, verify, RejectReason, Selection, Verdict};
use reoi_core::sim::{
    check_outcome, init_scene, render, rollout_states, scripted_policy, step, Category, ObjectSpec, Pos, Role, SceneConfig, Shape,
    TaskSpec, BACKGROUND, GRIPPER_COLOR,
};
use reoi_core::trustregion::estimate_lipschitz;

fn frame_from(h: usize, w: usize, vals: &[f32]) -> Frame {
    Frame::from_raw(h, w, vals.to_vec()).unwrap()
}

fn arb_frame(h: usize, w: usize) -> impl Strategy<Value = Frame> {
    prop::collection::vec(0.0f32..=1.0, h * w * 3).prop_map(move |v| frame_from(h, w, &v))
}

fn arb_mask(h: usize, w: usize) -> impl Strategy<Value = Mask> {
    prop::collection::vec(any::<bool>(), h * w)
        .prop_filter("partial mask", |b| b.iter().any(|x| *x) && !b.iter().all(|x| *x))
        .prop_map(move |b| Mask::from_bits(h, w, b).unwrap())
}

fn task() -> TaskSpec {
    TaskSpec { instruction_tag: "t".into(), target_color: [1.0, 0.7, 0.4], goal_region: Rect::new(40, 40, 54, 54) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inpaint_is_local_and_bounded(f in arb_frame(12, 14), m in arb_mask(12, 14)) {
        let out = inpaint(&f, &m).unwrap();
        let boundary = m.outer_boundary();
        for r in 0..12 {
            for c in 0..14 {
                if !m.get(r, c) {
                    prop_assert_eq!(out.get(r, c), f.get(r, c));
                }
            }
        }
        for ch in 0..3 {
            let vals: Vec<f32> = boundary.iter_set().map(|(r, c)| f.channel(r, c, ch)).collect();
            if vals.is_empty() {
                continue;
            }
            let lo = vals.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            for (r, c) in m.iter_set() {
                let v = out.channel(r, c, ch);
                prop_assert!(v >= lo - 1e-5 && v <= hi + 1e-5, "{v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(a in arb_frame(16, 16), b in arb_frame(16, 16)) {
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab > -1.0 && ab <= 1.0 + 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lipschitz_never_drops_when_pairs_are_added(
        pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 3..12),
        errs in prop::collection::vec(0.0f64..5.0, 12),
        seed in any::<u64>(),
    ) {
        let n = pts.len();
        let e = &errs[..n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = estimate_lipschitz(&pts[..n - 1], &e[..n - 1], usize::MAX, &mut rng);
        let all = estimate_lipschitz(&pts, e, usize::MAX, &mut rng);
        if let (Ok(s), Ok(a)) = (sub, &all) {
            prop_assert!(*a >= s);
        }
        let sampled = estimate_lipschitz(&pts, e, 3, &mut rng);
        if let (Ok(s), Ok(a)) = (sampled, &all) {
            prop_assert!(s <= *a);
        }
    }

    #[test]
    fn select_is_scale_covariant(rewards in prop::collection::vec(prop::option::of(0.0f64..1.0), 1..10), c in 0.01f64..100.0) {
        let v = |k: f64| -> Vec<Verdict> {
            rewards
                .iter()
                .map(|r| match r {
                    Some(r) => Verdict::Accept { reward: r * k },
                    None => Verdict::RejectUnsafe { frame_index: 1, reason: RejectReason::Collision },
                })
                .collect()
        };
        let chosen = select(&v(1.0));
        prop_assert_eq!(chosen, select(&v(c)));
        if let Selection::Chosen(i) = chosen {
            prop_assert!(rewards[i].is_some());
        } else {
            prop_assert!(rewards.iter().all(|r| r.is_none()));
        }
    }

    #[test]
    fn adding_a_mask_never_accepts(r in 0usize..56, c in 0usize..56, extra in (0usize..60, 0usize..60, 1usize..8)) {
        let mut f = Frame::filled(64, 64, BACKGROUND);
        for rr in r..r + 8 {
            for cc in c..c + 8 {
                f.set(rr, cc, GRIPPER_COLOR);
            }
        }
        let (er, ec, s) = extra;
        let near = Mask::from_rect(64, 64, &Rect::new(r, c + 8, (r + 4).min(64), (c + 12).min(64)));
        let other = Mask::from_rect(64, 64, &Rect::new(er, ec, (er + s).min(64), (ec + s).min(64)));
        let frames = [f];
        let before = verify(&frames, &task(), &[near.clone()]);
        let after = verify(&frames, &task(), &[near, other]);
        let accepted = |v: &Verdict| matches!(v, Verdict::Accept { .. });
        prop_assert!(accepted(&before) || !accepted(&after));
    }

    #[test]
    fn ground_truth_layers_match_render(seed in any::<u64>(), n_novel in 0usize..3) {
        let s = init_scene(&SceneConfig { n_novel, ..Default::default() }, seed).unwrap();
        let out = render(&s);
        let stack = ground_truth_stack(&s, 64, 64);
        let once = composite(&stack);
        prop_assert_eq!(&once, &out.frame);
        prop_assert_eq!(composite(&stack), once);
        // painter consistency: the visible label is the deepest-ranked covering object
        for r in 0..64 {
            for c in 0..64 {
                let top = s
                    .objects
                    .iter()
                    .filter(|o| o.covers(c as f64 + 0.5, r as f64 + 0.5))
                    .max_by_key(|o| o.depth_rank)
                    .map_or(0, |o| o.id);
                prop_assert_eq!(out.label_map[r * 64 + c], top);
            }
        }
    }

    #[test]
    fn reinsert_touches_only_layer_pixels(seed in any::<u64>(), r0 in 0usize..50, c0 in 0usize..50, s in 3usize..14) {
        let scene = init_scene(&SceneConfig { n_novel: 1, ..Default::default() }, seed).unwrap();
        let f = render(&scene).frame;
        let mask = Mask::from_rect(64, 64, &Rect::new(r0, c0, (r0 + s).min(64), (c0 + s).min(64)));
        let layer = Layer { mask: mask.clone(), pixels: Frame::filled(64, 64, [0.9, 0.2, 1.0]), depth_key: 0.5 };
        let out = reinsert(&[f.clone()], &[layer]).unwrap().remove(0);
        for r in 0..64 {
            for c in 0..64 {
                if !mask.get(r, c) {
                    prop_assert_eq!(out.get(r, c), f.get(r, c));
                }
            }
        }
        prop_assert_eq!(composite(&decompose(&f).unwrap()), f);
    }

    #[test]
    fn unheld_objects_stay_put(seed in any::<u64>(), plan_seed in any::<u64>()) {
        let s = init_scene(&SceneConfig { n_novel: 1, ..Default::default() }, seed).unwrap();
        let plan = scripted_policy(&s, &s.task(), 4.0, &mut ChaCha8Rng::seed_from_u64(plan_seed));
        let mut cur = s.clone();
        for a in plan {
            let next = step(&cur, a);
            for (o0, o1) in cur.objects.iter().zip(&next.objects) {
                if cur.held != Some(o0.id) && next.held != Some(o0.id) {
                    prop_assert_eq!(o0.center, o1.center);
                }
            }
            cur = next;
        }
    }

    #[test]
    fn collision_is_monotone_in_objects(seed in any::<u64>(), x in 4.0f64..60.0, y in 4.0f64..60.0, size in 4.0f64..12.0) {
        let s = init_scene(&SceneConfig::default(), seed).unwrap();
        let plan = scripted_policy(&s, &s.task(), 4.0, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let before = check_outcome(&rollout_states(&s, &plan)).collision;
        let mut more = s.clone();
        let id = more.objects.iter().map(|o| o.id).max().unwrap() + 1;
        more.objects.push(ObjectSpec {
            id,
            shape: Shape::Rect,
            color: [1.0, 0.1, 1.0],
            center: Pos::new(x, y),
            size,
            depth_rank: id,
            category: Category::Novel,
            role: Role::Distractor,
        });
        let after = check_outcome(&rollout_states(&more, &plan)).collision;
        prop_assert!(!before || after);
    }
}
