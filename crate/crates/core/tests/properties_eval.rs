use proptest::prelude::*;
use pushpull::eval::{
    classification_metrics, segment_actions, trim_norms, Condition, TrialLog, TrialMeta, TrialSample,
};
use pushpull::skeleton::IntentionClass;
use pushpull::synth::V_DEAD;
use pushpull::physics::{human_force, FrictionModel, HumanForcePolicy, SimConfig, SimState, Simulator};
use pushpull::synth::TrapezoidProfile;

fn log_from_velocities(v: &[f64]) -> TrialLog {
    let mut log = TrialLog::new(TrialMeta {
        condition: Condition::Dry,
        scenario_id: "synthetic".into(),
        seed: 0,
        f_com: None,
    });
    let mut x = 0.0;
    for (i, &vel) in v.iter().enumerate() {
        x += vel * 0.01;
        log.samples.push(TrialSample {
            t: i as f64 * 0.01,
            box_x: x,
            box_v: vel,
            f_h: [20.0 + vel * 10.0, 0.0, 0.0],
            f_r: [0.0; 3],
            f_d_x: 0.0,
            u_x: 0.0,
            intent_raw: IntentionClass::Idle,
            intent_filtered: IntentionClass::Idle,
            label: IntentionClass::Idle,
        });
    }
    log
}

/// Velocity traces made of rests and bursts in either direction.
fn velocity_trace() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-1i8..=1, 1usize..60, 0.001f64..0.3), 1..20).prop_map(|parts| {
        parts
            .into_iter()
            .flat_map(|(dir, len, speed)| std::iter::repeat_n(dir as f64 * speed, len))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn higher_threshold_keeps_fewer_samples(norms in prop::collection::vec(0.0f64..100.0, 0..200), a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let kept = |t| trim_norms(&norms, t).iter().flatten().count();
        prop_assert!(kept(hi) <= kept(lo));
    }

    #[test]
    fn every_moving_sample_is_in_one_action(v in velocity_trace()) {
        let log = log_from_velocities(&v);
        let records = segment_actions(&log, V_DEAD);
        for s in &log.samples {
            if s.box_v.abs() <= V_DEAD {
                continue;
            }
            let owners: Vec<_> = records.iter().filter(|r| r.start <= s.t && s.t <= r.end).collect();
            prop_assert_eq!(owners.len(), 1, "sample at {} owned by {:?}", s.t, owners);
            let want = if s.box_v < 0.0 { IntentionClass::Push } else { IntentionClass::Pull };
            prop_assert_eq!(owners[0].kind, want);
        }
    }

    #[test]
    fn balanced_equals_plain_accuracy_on_balanced_labels(per_class in 1usize..40, preds in prop::collection::vec(0usize..3, 120)) {
        let labels: Vec<IntentionClass> = IntentionClass::ALL
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c, per_class))
            .collect();
        let predictions: Vec<IntentionClass> = preds.iter().take(labels.len()).map(|&i| IntentionClass::from_index(i)).collect();
        let labels = &labels[..predictions.len()];
        prop_assume!(predictions.len() == 3 * per_class);
        let m = classification_metrics(&predictions, labels).unwrap();
        prop_assert!((m.balanced_accuracy - m.accuracy).abs() < 1e-12);
    }
}

/// Dry trial with one pull and one mirrored push, both starting on the
/// simulation grid, sampled at 100 Hz like the trial runner.
fn mirrored_trial(mass: f64, mu: f64, duration: f64) -> TrialLog {
    let duration = (duration * 100.0).round() / 100.0;
    let cfg = SimConfig { robot_attached: false, ..SimConfig::default() };
    let mut sim = Simulator::new(cfg, FrictionModel::new(mass, mu).unwrap(), SimState::at_rest(0.0)).unwrap();
    let profile = TrapezoidProfile::new(0.3, duration);
    let dt = sim.config.dt;
    let step_of = |t: f64| (t / dt).round() as usize;
    // integer step indices keep both actions on the same grid phase
    let actions = [(step_of(2.0), 1.0), (step_of(duration + 6.0), -1.0)];
    let engaged = step_of(duration + 0.3);
    let steps = step_of(2.0 * duration + 10.0);
    let mut log = log_from_velocities(&[]);
    let mut anchor = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let mut f_h = 0.0;
        for &(on, sign) in &actions {
            if k == on {
                anchor = sim.state.box_x;
            }
            if (on..on + engaged).contains(&k) {
                let (x, v, _) = profile.sample((k - on) as f64 * dt);
                let policy = HumanForcePolicy::new(|_: f64| Some((anchor + sign * x, sign * v)));
                f_h = human_force(&policy, &sim.state, t);
            }
        }
        let r = sim.step(f_h, 0.0).unwrap();
        if (k + 1) % 10 == 0 {
            log.samples.push(TrialSample {
                t: t + sim.config.dt,
                box_x: r.box_x,
                box_v: r.box_v,
                f_h: r.f_h,
                ..log_from_velocities(&[0.0]).samples[0]
            });
        }
    }
    log
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mirrored_dry_trial_has_symmetric_effort(mass in 20.0f64..45.0, mu in 0.15f64..0.3, duration in 3.0f64..9.0) {
        let log = mirrored_trial(mass, mu, duration);
        let records = segment_actions(&log, V_DEAD);
        prop_assert_eq!(records.len(), 2, "{:?}", records);
        prop_assert_eq!(records[0].kind, IntentionClass::Pull);
        prop_assert_eq!(records[1].kind, IntentionClass::Push);
        let (pull, push) = (records[0].mean_force, records[1].mean_force);
        prop_assert!(pull > 0.0);
        prop_assert!((pull - push).abs() < 1e-9, "pull {} push {}", pull, push);
    }
}

