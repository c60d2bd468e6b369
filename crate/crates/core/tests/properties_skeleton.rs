use proptest::prelude::*;
use pushpull::skeleton::{build_topology, make_window, raw_incidence, DirectedSkeletonGraph, SkeletonFrame, FRAME_RATE_HZ};

fn frames_strategy(len: usize) -> impl Strategy<Value = Vec<SkeletonFrame>> {
    prop::collection::vec(prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 17), len).prop_map(|all| {
        all.into_iter()
            .enumerate()
            .map(|(i, joints)| SkeletonFrame {
                timestamp: i as f64 / FRAME_RATE_HZ,
                joints,
            })
            .collect()
    })
}

/// Rounds to a multiple of 1/1024 so sums and differences stay exact.
fn dyadic(x: f64) -> f64 {
    (x * 1024.0).round() / 1024.0
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn windows_ignore_global_translation(frames in frames_strategy(10), offset in prop::array::uniform3(-50.0f64..50.0)) {
        let g = build_topology();
        let base = make_window(&frames, &g, 10).unwrap();
        let moved: Vec<_> = frames.iter().map(|f| f.translated(offset)).collect();
        let shifted = make_window(&moved, &g, 10).unwrap();
        for (a, b) in base.joints.iter().chain(&base.bones).zip(shifted.joints.iter().chain(&shifted.bones)) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-12, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn dyadic_translation_is_exact(frames in frames_strategy(4), offset in prop::array::uniform3(-8i32..8)) {
        let g = build_topology();
        let frames: Vec<_> = frames
            .into_iter()
            .map(|f| SkeletonFrame { timestamp: f.timestamp, joints: f.joints.iter().map(|p| p.map(dyadic)).collect() })
            .collect();
        let offset = offset.map(|o| o as f64 * 0.25);
        let moved: Vec<_> = frames.iter().map(|f| f.translated(offset)).collect();
        prop_assert_eq!(make_window(&frames, &g, 4).unwrap(), make_window(&moved, &g, 4).unwrap());
    }

    #[test]
    fn relabelled_topology_stays_a_tree(perm in permutation(17)) {
        let g = build_topology().relabeled(&perm).unwrap();
        prop_assert_eq!(g.bone_count(), g.joint_count() - 1);
        prop_assert!(g.reachable_from_root(None).iter().all(|&r| r));
        for b in 0..g.bone_count() {
            let reach = g.reachable_from_root(Some(b));
            prop_assert!(reach.iter().any(|&r| !r), "removing bone {} kept the tree connected", b);
        }
        for j in 0..g.joint_count() {
            let path = g.path_from_root(j);
            prop_assert_eq!(path[0], g.root());
            prop_assert_eq!(*path.last().unwrap(), j);
        }
        let inc = raw_incidence(&g);
        for b in 0..inc.bone_count {
            let s: f64 = (0..inc.joint_count).map(|j| inc.source[j * inc.bone_count + b]).sum();
            let t: f64 = (0..inc.joint_count).map(|j| inc.target[j * inc.bone_count + b]).sum();
            prop_assert_eq!((s, t), (1.0, 1.0));
        }
    }

    #[test]
    fn extra_bone_is_rejected(perm in permutation(17), s in 0usize..17, t in 0usize..17) {
        let g = build_topology().relabeled(&perm).unwrap();
        let mut bones = g.bones().to_vec();
        bones.push((s, t));
        prop_assert!(DirectedSkeletonGraph::new(17, g.root(), bones).is_err());
    }

    #[test]
    fn window_assembly_is_deterministic(frames in frames_strategy(6)) {
        let g = build_topology();
        prop_assert_eq!(make_window(&frames, &g, 6).unwrap(), make_window(&frames, &g, 6).unwrap());
    }

    #[test]
    fn window_rejects_gaps(frames in frames_strategy(6), at in 1usize..6, gap in 0.021f64..1.0) {
        let g = build_topology();
        let mut frames = frames;
        for f in frames.iter_mut().skip(at) {
            f.timestamp += gap;
        }
        prop_assert!(make_window(&frames, &g, 6).is_err());
    }
}
