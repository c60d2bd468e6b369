use proptest::prelude::*;
use pushpull::skeleton::{joint, IntentionClass};
use pushpull::synth::posture::handle_point;
use pushpull::synth::{
    build_dataset, generate_sequence, label_frames, random_script, ActionKind, ActionSegmentSpec, DatasetSpec, SynthConfig,
    TimelineBuilder, V_DEAD,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn script(seed: u64, n: usize) -> Vec<ActionSegmentSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_script(&mut rng, SynthConfig::default().target_label_mix, n)
}

fn config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        ..SynthConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn box_velocity_matches_position(seed in any::<u64>(), n in 1usize..4) {
        let seq = generate_sequence(&config(seed), &script(seed, n)).unwrap();
        let dt = 1.0 / SynthConfig::default().frame_rate;
        let (x, v) = (&seq.box_positions, &seq.box_velocities);
        for i in 1..x.len() - 1 {
            let central = (x[i + 1] - x[i - 1]) / (2.0 * dt);
            prop_assert!((central - v[i]).abs() < 5e-3, "frame {}: {} vs {}", i, central, v[i]);
        }
        let integrated: f64 = v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
        prop_assert!((integrated - (x[x.len() - 1] - x[0])).abs() < 1e-3);
    }

    #[test]
    fn labels_follow_box_velocity(seed in any::<u64>(), n in 1usize..4) {
        let seq = generate_sequence(&config(seed), &script(seed, n)).unwrap();
        prop_assert_eq!(&seq.labels, &label_frames(&seq.box_velocities, V_DEAD));
        for (l, v) in seq.labels.iter().zip(&seq.box_velocities) {
            match l {
                IntentionClass::Push => prop_assert!(*v < -V_DEAD),
                IntentionClass::Pull => prop_assert!(*v > V_DEAD),
                IntentionClass::Idle => prop_assert!(v.abs() <= V_DEAD),
            }
        }
    }

    #[test]
    fn same_seed_same_sequence(seed in any::<u64>(), n in 1usize..3) {
        let s = script(seed, n);
        let a = generate_sequence(&config(seed), &s).unwrap();
        let b = generate_sequence(&config(seed), &s).unwrap();
        prop_assert_eq!(&a, &b);
        let c = generate_sequence(&config(seed.wrapping_add(1)), &s).unwrap();
        prop_assert_ne!(&a.frames, &c.frames);
    }

    #[test]
    fn wrists_stay_on_the_handle_while_moving(seed in any::<u64>(), n in 1usize..4) {
        let s = script(seed, n);
        let quiet = SynthConfig { noise_std: 0.0, ..config(seed) };
        let clean = generate_sequence(&quiet, &s).unwrap();
        let noisy_cfg = config(seed);
        let noisy = generate_sequence(&noisy_cfg, &s).unwrap();
        let bound = 3.0 * noisy_cfg.noise_std;
        let (mut checked, mut outside) = (0usize, 0usize);
        for i in 0..clean.len() {
            if clean.labels[i] == IntentionClass::Idle {
                continue;
            }
            for (wrist, side) in [(joint::L_WRIST, 1.0), (joint::R_WRIST, -1.0)] {
                let h = handle_point(clean.box_positions[i], side);
                let (w, wn) = (clean.frames[i].joints[wrist], noisy.frames[i].joints[wrist]);
                for k in 0..3 {
                    prop_assert!((w[k] - h[k]).abs() <= 1e-12, "frame {} axis {}: {} vs {}", i, k, w[k], h[k]);
                    checked += 1;
                    outside += usize::from((wn[k] - h[k]).abs() > bound);
                }
            }
        }
        prop_assert!(checked > 0);
        // a Gaussian leaves 3 sigma 0.27 % of the time
        prop_assert!((outside as f64) < 0.01 * checked as f64, "{} of {} outside 3 sigma", outside, checked);
    }

    #[test]
    fn equal_configs_give_identical_manifests(seed in any::<u64>()) {
        let spec = DatasetSpec { n_train: 1, n_val: 1, actions_per_recording: 2 };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = build_dataset(&config(seed), spec, a.path()).unwrap();
        let mb = build_dataset(&config(seed), spec, b.path()).unwrap();
        prop_assert_eq!(ma.hash(), mb.hash());
        prop_assert_eq!(
            std::fs::read(a.path().join("manifest.json")).unwrap(),
            std::fs::read(b.path().join("manifest.json")).unwrap()
        );
    }

    #[test]
    fn posture_moves_before_the_box(seed in any::<u64>(), push in any::<bool>(), duration in 3.0f64..8.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = if push { ActionKind::Push } else { ActionKind::Pull };
        let mut builder = TimelineBuilder::new(&mut rng, 1.0, 0.35, 1.0);
        builder.idle(ActionKind::IdleStand, 1.0, 1.0, 1.0);
        builder.segment(&ActionSegmentSpec::new(kind, duration)).unwrap();
        let timeline = builder.finish();
        let action = timeline.actions()[0];
        let lead = action.onset - action.lean_half;
        prop_assert!((0.3 - 1e-12..=0.6 + 1e-12).contains(&lead), "lead {}", lead);
        // half the lean is in place 0.3 s before the box first exceeds the dead band
        let fast = (0..20_000)
            .map(|k| action.segment_start + k as f64 * 1e-3)
            .find(|&t| timeline.planned_box(t).1.abs() > V_DEAD)
            .unwrap();
        let probe = fast - 0.3;
        prop_assert!(timeline.planned_box(probe).1 == 0.0);
        let lean = timeline.posture(probe).lean;
        prop_assert!(lean * action.lean_peak > 0.0);
        prop_assert!(lean.abs() >= 0.5 * action.lean_peak.abs());
        // lean direction tells the two kinds apart
        prop_assert_eq!(action.lean_peak > 0.0, push);
    }
}
