use proptest::prelude::*;
use pushpull::controller::{assist_target, control_tick, AssistConfig, ControllerState, IntentionFilter};
use pushpull::physics::{FrictionModel, SimConfig, SimState, Simulator};
use pushpull::skeleton::IntentionClass;

fn class() -> impl Strategy<Value = IntentionClass> {
    (0usize..3).prop_map(IntentionClass::from_index)
}

fn schedule() -> impl Strategy<Value = Vec<(IntentionClass, usize)>> {
    prop::collection::vec((class(), 1usize..250), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn force_target_is_bounded_and_rate_limited(f_com in 10.0f64..150.0, plan in schedule()) {
        let cfg = AssistConfig::recommended(f_com);
        let tick = cfg.tick();
        let mut ctrl = ControllerState::new(0.0);
        let mut last = 0.0;
        let mut prev_span = 0.0f64;
        let mut k = 0usize;
        for (intent, hold) in plan {
            for _ in 0..hold {
                let t = k as f64 * tick;
                ctrl = assist_target(&ctrl, intent, t, &cfg);
                let f = ctrl.f_d[0];
                prop_assert!(f.abs() <= f_com + 1e-12);
                // the switching tick still moves along the previous ramp
                let span = (ctrl.target(&cfg) - ctrl.ramp_from).abs().max(prev_span);
                prev_span = (ctrl.target(&cfg) - ctrl.ramp_from).abs();
                prop_assert!((f - last).abs() <= span * tick / cfg.transition_s + 1e-9);
                prop_assert!((f - last).abs() <= 2.0 * f_com * tick / cfg.transition_s + 1e-9);
                // ramps that start or end at idle stay within the single-span slope
                if span <= f_com + 1e-9 {
                    prop_assert!((f - last).abs() <= f_com * tick / cfg.transition_s + 1e-9);
                }
                last = f;
                k += 1;
            }
        }
    }

    #[test]
    fn settled_target_follows_intention(f_com in 10.0f64..150.0, plan in schedule()) {
        let cfg = AssistConfig::recommended(f_com);
        let tick = cfg.tick();
        let mut ctrl = ControllerState::new(0.0);
        let mut k = 0usize;
        for (intent, hold) in plan {
            for _ in 0..hold {
                let t = k as f64 * tick;
                ctrl = assist_target(&ctrl, intent, t, &cfg);
                let f = ctrl.f_d[0];
                if ctrl.ramp_done(t, &cfg) {
                    match intent {
                        IntentionClass::Idle => prop_assert_eq!(f, 0.0),
                        _ => prop_assert_eq!(f, intent.motion_sign() * f_com),
                    }
                } else if ctrl.ramp_from == 0.0 && intent != IntentionClass::Idle && t > ctrl.ramp_start_time {
                    prop_assert!(f * intent.motion_sign() > 0.0);
                }
                k += 1;
            }
        }
    }

    #[test]
    fn filter_is_deterministic(stream in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..200), cap in 1usize..30) {
        let mut a = IntentionFilter::new(cap).unwrap();
        let mut b = IntentionFilter::new(cap).unwrap();
        for logits in &stream {
            prop_assert_eq!(a.push(*logits), b.push(*logits));
        }
    }

    #[test]
    fn stuck_loop_error_never_grows(f_com in 10.0f64..120.0, intent in class()) {
        let cfg = AssistConfig::recommended(f_com);
        let sim_cfg = SimConfig { spring_c: 0.0, ..SimConfig::default() };
        // heavy enough that the target never breaks the box loose
        let friction = FrictionModel::new(40.0, 0.6).unwrap();
        let mut sim = Simulator::new(sim_cfg, friction, SimState::at_rest(0.0)).unwrap();
        let substeps = (cfg.tick() / sim.config.dt).round() as usize;
        let mut ctrl = ControllerState::new(0.0);
        ctrl = assist_target(&ctrl, intent, -10.0, &cfg);
        ctrl = assist_target(&ctrl, intent, 0.0, &cfg);
        let f_d = ctrl.f_d[0];
        let mut f_r = sim.sensor_now();
        let mut err = (f_r - f_d).abs();
        for _ in 0..300 {
            control_tick(&mut ctrl, f_r, &cfg);
            f_r = sim.advance(substeps, 0.0, ctrl.robot_cmd_x).unwrap().f_r[0];
            prop_assert_eq!(sim.state.box_v, 0.0);
            let e = (f_r - f_d).abs();
            prop_assert!(e <= err + 1e-12, "{} -> {}", err, e);
            err = e;
        }
        prop_assert!(err < 1e-3);
    }
}
