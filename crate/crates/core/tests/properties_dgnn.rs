use proptest::prelude::*;
use pushpull::dgnn::{model_forward, select_class, Mode, ModelConfig, ModelParams};
use pushpull::skeleton::{build_topology, incidence_matrices, make_window, SkeletonFrame, FRAME_RATE_HZ};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAMES: usize = 6;

fn small_config() -> ModelConfig {
    ModelConfig {
        in_channels: 3,
        channels: vec![4, 4],
        temporal_kernel: 3,
        fc_hidden: 8,
        dropout: 0.3,
        window_length: FRAMES,
        frame_step: 1,
    }
}

fn random_frames(rng: &mut ChaCha8Rng) -> Vec<SkeletonFrame> {
    (0..FRAMES)
        .map(|i| SkeletonFrame {
            timestamp: i as f64 / FRAME_RATE_HZ,
            joints: (0..17).map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0))).collect(),
        })
        .collect()
}

fn logits_for(frames: &[SkeletonFrame], params: &ModelParams, graph: &pushpull::skeleton::DirectedSkeletonGraph) -> [f64; 3] {
    let window = make_window(frames, graph, FRAMES).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    model_forward(&window, params, &incidence_matrices(graph), Mode::Eval, &mut rng).unwrap().0
}

fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
    a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn joint_relabelling_leaves_logits_unchanged(seed in any::<u64>(), perm in Just((0..17).collect::<Vec<usize>>()).prop_shuffle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&small_config(), &mut rng).unwrap();
        let frames = random_frames(&mut rng);
        let graph = build_topology();
        let relabeled = graph.relabeled(&perm).unwrap();
        let permuted: Vec<SkeletonFrame> = frames
            .iter()
            .map(|f| {
                let mut joints = vec![[0.0; 3]; 17];
                for (old, p) in f.joints.iter().enumerate() {
                    joints[perm[old]] = *p;
                }
                SkeletonFrame { timestamp: f.timestamp, joints }
            })
            .collect();
        let a = logits_for(&frames, &params, &graph);
        let b = logits_for(&permuted, &params, &relabeled);
        prop_assert!(close(a, b, 1e-10), "{:?} vs {:?}", a, b);
    }

    #[test]
    fn eval_is_deterministic_and_ignores_rng(seed in any::<u64>(), rng_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&small_config(), &mut rng).unwrap();
        let graph = build_topology();
        let window = make_window(&random_frames(&mut rng), &graph, FRAMES).unwrap();
        let inc = incidence_matrices(&graph);
        let mut r1 = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(rng_seed.wrapping_add(1));
        let a = model_forward(&window, &params, &inc, Mode::Eval, &mut r1).unwrap().0;
        let b = model_forward(&window, &params, &inc, Mode::Eval, &mut r2).unwrap().0;
        prop_assert_eq!(a, b);
        prop_assert_eq!(r1.random::<u64>(), ChaCha8Rng::seed_from_u64(rng_seed).random::<u64>());
    }

    #[test]
    fn argmax_ignores_common_shift(raw in prop::array::uniform3(-4096i32..4096), shift in -1000i32..1000) {
        // dyadic values keep the shifted comparison exact
        let logits = raw.map(|x| x as f64 / 64.0);
        let shifted = logits.map(|x| x + shift as f64);
        prop_assert_eq!(select_class(&logits), select_class(&shifted));
    }

    #[test]
    fn translated_performer_gets_same_prediction(seed in any::<u64>(), offset in prop::array::uniform3(-20.0f64..20.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&small_config(), &mut rng).unwrap();
        let frames = random_frames(&mut rng);
        let moved: Vec<_> = frames.iter().map(|f| f.translated(offset)).collect();
        let graph = build_topology();
        let a = logits_for(&frames, &params, &graph);
        let b = logits_for(&moved, &params, &graph);
        prop_assert!(close(a, b, 1e-9), "{:?} vs {:?}", a, b);
    }
}
