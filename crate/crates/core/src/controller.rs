//! Assistive layer: intention filtering, ramped force targets, position-based
//! force control, sensor-bias handling and object exploration.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::dgnn::select_class;
use crate::error::{Error, Result};
use crate::physics::{zero_sensor_bias, SimConfig, SimState, Simulator};
use crate::skeleton::{IntentionClass, Vec3};

pub const DEFAULT_FILTER_LEN: usize = 15;
/// Intentions older than this are not acted on.
pub const STALE_LIMIT_S: f64 = 0.05;

/// Moving average over the most recent network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentionFilter {
    capacity: usize,
    buffer: VecDeque<[f64; 3]>,
    current: IntentionClass,
}

impl IntentionFilter {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Precondition("filter length must be positive".into()));
        }
        Ok(IntentionFilter {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
            current: IntentionClass::Idle,
        })
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn current(&self) -> IntentionClass {
        self.current
    }

    /// Pushes one logit vector and returns the class of the buffered mean.
    /// Non-finite vectors are dropped and the previous class is held.
    pub fn push(&mut self, logits: [f64; 3]) -> IntentionClass {
        if !logits.iter().all(|x| x.is_finite()) {
            return self.current;
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(logits);
        let n = self.buffer.len() as f64;
        let mut mean = [0.0; 3];
        for l in &self.buffer {
            for (m, x) in mean.iter_mut().zip(l) {
                *m += x;
            }
        }
        self.current = select_class(&mean.map(|m| m / n));
        self.current
    }
}

/// Controller settings; every field is required in the JSON form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssistConfig {
    /// Friction-compensation force, N.
    pub f_com: f64,
    /// Force-to-position gain, m/N.
    #[serde(rename = "K_f")]
    pub k_f: f64,
    pub transition_s: f64,
    pub control_hz: f64,
    /// Largest position correction per control tick, m.
    pub u_max: f64,
    pub filter_len: usize,
}

impl AssistConfig {
    /// Recommended gains for a given compensation force.
    pub fn recommended(f_com: f64) -> Self {
        AssistConfig {
            f_com,
            k_f: 5e-5,
            transition_s: 1.0,
            control_hz: 100.0,
            u_max: 0.002,
            filter_len: DEFAULT_FILTER_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.f_com >= 0.0
            && self.f_com.is_finite()
            && self.k_f > 0.0
            && self.k_f.is_finite()
            && self.transition_s > 0.0
            && self.control_hz > 0.0
            && self.u_max > 0.0
            && self.filter_len > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid assist config {self:?}")))
        }
    }

    pub fn tick(&self) -> f64 {
        1.0 / self.control_hz
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: AssistConfig = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub intent: IntentionClass,
    /// Desired robot-side force; y and z stay 0.
    pub f_d: Vec3,
    pub ramp_start_time: f64,
    pub ramp_from: f64,
    pub robot_cmd_x: f64,
    /// Set by [`on_idle_stop`]; the position command is held while set.
    pub frozen: bool,
}

impl ControllerState {
    pub fn new(robot_cmd_x: f64) -> Self {
        ControllerState {
            intent: IntentionClass::Idle,
            f_d: [0.0; 3],
            ramp_start_time: f64::NEG_INFINITY,
            ramp_from: 0.0,
            robot_cmd_x,
            frozen: false,
        }
    }

    /// Force target of the active intention.
    pub fn target(&self, cfg: &AssistConfig) -> f64 {
        match self.intent {
            IntentionClass::Idle => 0.0,
            other => other.motion_sign() * cfg.f_com,
        }
    }

    /// Ramp value at time `t`.
    pub fn f_d_at(&self, t: f64, cfg: &AssistConfig) -> f64 {
        let frac = ((t - self.ramp_start_time) / cfg.transition_s).clamp(0.0, 1.0);
        if frac == 1.0 {
            // exact once settled; the blend below can miss by an ulp
            return self.target(cfg);
        }
        self.ramp_from + (self.target(cfg) - self.ramp_from) * frac
    }

    pub fn ramp_done(&self, t: f64, cfg: &AssistConfig) -> bool {
        t - self.ramp_start_time >= cfg.transition_s
    }
}

/// Updates the force target for time `t`. A new intention starts a linear
/// ramp from the instantaneous target to the new one lasting
/// `cfg.transition_s`.
pub fn assist_target(ctrl: &ControllerState, new_intent: IntentionClass, t: f64, cfg: &AssistConfig) -> ControllerState {
    let mut next = *ctrl;
    if new_intent != ctrl.intent {
        next.ramp_from = ctrl.f_d_at(t, cfg);
        next.ramp_start_time = t;
        next.intent = new_intent;
        next.frozen = false;
    }
    next.f_d = [next.f_d_at(t, cfg), 0.0, 0.0];
    next
}

/// Position correction `k_f * (f_d - f_r)`, unclamped.
pub fn force_control(f_d: f64, f_r: f64, k_f: f64) -> f64 {
    k_f * (f_d - f_r)
}

pub fn clamp_correction(u: f64, u_max: f64) -> f64 {
    u.clamp(-u_max, u_max)
}

/// When the robot has come to rest on an idle intention: re-zero the force
/// sensor and hold the position command. Does nothing otherwise.
pub fn on_idle_stop(
    ctrl: &ControllerState,
    sim: &SimState,
    sim_cfg: &SimConfig,
    t: f64,
    cfg: &AssistConfig,
) -> (ControllerState, SimState) {
    if ctrl.intent != IntentionClass::Idle || !ctrl.ramp_done(t, cfg) || ctrl.frozen {
        return (*ctrl, *sim);
    }
    let state = zero_sensor_bias(sim, sim_cfg);
    let next = ControllerState {
        frozen: true,
        robot_cmd_x: sim.robot_cmd_x,
        ..*ctrl
    };
    (next, state)
}

/// One control tick of the force loop. Returns the applied correction.
pub fn control_tick(ctrl: &mut ControllerState, f_r: f64, cfg: &AssistConfig) -> f64 {
    if ctrl.frozen {
        return 0.0;
    }
    let u = clamp_correction(force_control(ctrl.f_d[0], f_r, cfg.k_f), cfg.u_max);
    ctrl.robot_cmd_x += u;
    u
}

/// Object exploration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub step_n: f64,
    pub dwell_s: f64,
    /// Displacement during a dwell at or above this counts as moving.
    pub tolerance_m: f64,
    pub cap_n: f64,
    /// Push direction of the probe: -1 pushes, +1 pulls.
    pub direction: f64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            step_n: 2.0,
            dwell_s: 1.0,
            tolerance_m: 0.002,
            cap_n: 200.0,
            direction: -1.0,
        }
    }
}

/// Steps the robot's force target up until the box starts to slide and
/// returns the largest magnitude that kept it in place. The human is absent.
pub fn explore_object(sim: &mut Simulator, assist: &AssistConfig, explore: &ExploreConfig) -> Result<f64> {
    assist.validate()?;
    if !sim.config.robot_attached {
        return Err(Error::Scenario("exploration needs the robot attached".into()));
    }
    let substeps = ((assist.tick() / sim.config.dt).round() as usize).max(1);
    let ticks = (explore.dwell_s * assist.control_hz).round() as usize;
    let n_steps = (explore.cap_n / explore.step_n).floor() as usize;
    let mut f_r = sim.sensor_now();
    let mut cmd = sim.state.robot_cmd_x;
    let mut held = None;
    for k in 1..=n_steps {
        let target = explore.direction * explore.step_n * k as f64;
        let x0 = sim.state.box_x;
        let mut moved = false;
        for _ in 0..ticks {
            cmd += clamp_correction(force_control(target, f_r, assist.k_f), assist.u_max);
            f_r = sim.advance(substeps, 0.0, cmd)?.f_r[0];
            if (sim.state.box_x - x0).abs() >= explore.tolerance_m {
                moved = true;
                break;
            }
        }
        if moved {
            return held.ok_or_else(|| {
                Error::Scenario(format!("object moved at the first {} N step; too light to explore", explore.step_n))
            });
        }
        held = Some(target.abs());
    }
    Err(Error::Scenario(format!("no breakaway up to {} N", explore.cap_n)))
}

/// Logits stamped with the time they were produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamped {
    pub logits: [f64; 3],
    pub time: f64,
}

/// Single-producer side of the latest-value handoff from the predictor.
#[derive(Debug)]
pub struct IntentPublisher {
    slot: Arc<Mutex<Option<Stamped>>>,
}

/// Single-consumer side; reads the newest published value.
#[derive(Debug)]
pub struct IntentReceiver {
    slot: Arc<Mutex<Option<Stamped>>>,
}

pub fn intent_handoff() -> (IntentPublisher, IntentReceiver) {
    let slot = Arc::new(Mutex::new(None));
    (IntentPublisher { slot: slot.clone() }, IntentReceiver { slot })
}

impl IntentPublisher {
    pub fn publish(&self, logits: [f64; 3], time: f64) {
        // a poisoned slot only means the consumer panicked; keep publishing
        let mut guard = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        *guard = Some(Stamped { logits, time });
    }
}

impl IntentReceiver {
    pub fn latest(&self) -> Option<Stamped> {
        *self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Tracks how long the controller has run on stale intentions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaleWatchdog {
    pub limit_s: f64,
    /// Continuous stale time after which the loop gives up.
    pub trip_s: f64,
    stale_since: Option<f64>,
}

impl StaleWatchdog {
    pub fn new(limit_s: f64, trip_s: f64) -> Self {
        StaleWatchdog {
            limit_s,
            trip_s,
            stale_since: None,
        }
    }

    /// `Ok(true)` if the intention stamped `stamp` may be used at `now`,
    /// `Ok(false)` if the last command must be held, and an error once the
    /// intention has been stale for longer than `trip_s`.
    pub fn check(&mut self, now: f64, stamp: Option<f64>) -> Result<bool> {
        let fresh = stamp.is_some_and(|s| now - s <= self.limit_s + 1e-9);
        if fresh {
            self.stale_since = None;
            return Ok(true);
        }
        let since = *self.stale_since.get_or_insert(now);
        if now - since > self.trip_s {
            let age_ms = stamp.map_or(f64::INFINITY, |s| (now - s) * 1e3);
            return Err(Error::StaleIntention { age_ms });
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::FrictionModel;

    const IDLE: [f64; 3] = [0.0, 1.0, 0.0];
    const PUSH: [f64; 3] = [0.0, 0.0, 1.0];

    #[test]
    fn filter_step_flips_on_eighth_sample() {
        let mut f = IntentionFilter::new(15).unwrap();
        for _ in 0..15 {
            assert_eq!(f.push(IDLE), IntentionClass::Idle);
        }
        for k in 1..=15 {
            let c = f.push(PUSH);
            assert_eq!(c == IntentionClass::Push, k >= 8, "sample {k}");
        }
    }

    #[test]
    fn filter_does_not_chatter() {
        // one-hot alternation over an odd window flips with the majority,
        // so the margins here are asymmetric
        let mut f = IntentionFilter::new(15).unwrap();
        let mut held = Vec::new();
        for k in 0..60 {
            let c = f.push(if k % 2 == 0 { [0.0, 1.0, 0.0] } else { [0.0, 0.2, 0.9] });
            if k >= 15 {
                held.push(c);
            }
        }
        assert!(held.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn ramp_examples() {
        let cfg = AssistConfig::recommended(65.0);
        let mut c = assist_target(&ControllerState::new(0.0), IntentionClass::Push, 0.0, &cfg);
        assert_eq!(c.f_d[0], 0.0);
        for (t, want) in [(0.25, -16.25), (0.5, -32.5), (1.0, -65.0), (3.0, -65.0)] {
            c = assist_target(&c, IntentionClass::Push, t, &cfg);
            assert!((c.f_d[0] - want).abs() < 1e-12, "t={t}");
        }
        let mut c = assist_target(&ControllerState::new(0.0), IntentionClass::Push, 0.0, &cfg);
        c = assist_target(&c, IntentionClass::Pull, 0.5, &cfg);
        assert!((c.f_d[0] + 32.5).abs() < 1e-12);
        c = assist_target(&c, IntentionClass::Pull, 1.0, &cfg);
        assert!((c.f_d[0] - 16.25).abs() < 1e-12);
        c = assist_target(&c, IntentionClass::Pull, 1.5, &cfg);
        assert!((c.f_d[0] - 65.0).abs() < 1e-12);
    }

    #[test]
    fn force_control_examples() {
        assert_eq!(force_control(12.0, 12.0, 5e-5), 0.0);
        let u = force_control(-65.0, 0.0, 5e-5);
        assert!((u + 3.25e-3).abs() < 1e-15);
        assert_eq!(clamp_correction(u, 0.002), -0.002);
        assert_eq!(clamp_correction(force_control(1000.0, 0.0, 5e-5), 0.002), 0.002);
    }

    #[test]
    fn idle_stop_zeroes_stored_spring_force() {
        let cfg = AssistConfig::recommended(65.0);
        let sim_cfg = SimConfig::default();
        let mut sim = SimState::at_rest(0.0);
        sim.robot_cmd_x = -0.01;
        sim.spring_deflection = -0.01;
        let ctrl = ControllerState::new(-0.01);
        let (c, s) = on_idle_stop(&ctrl, &sim, &sim_cfg, 5.0, &cfg);
        assert!(c.frozen);
        assert_eq!(s.spring_force(&sim_cfg) - s.sensor_bias, 0.0);

        let push = assist_target(&ctrl, IntentionClass::Push, 5.0, &cfg);
        let (c, s) = on_idle_stop(&push, &sim, &sim_cfg, 7.0, &cfg);
        assert_eq!((c, s), (push, sim));
    }

    #[test]
    fn config_requires_every_field() {
        let full = r#"{"f_com":65,"K_f":5e-5,"transition_s":1,"control_hz":100,"u_max":0.002,"filter_len":15}"#;
        let cfg: AssistConfig = serde_json::from_str(full).unwrap();
        assert_eq!(cfg, AssistConfig::recommended(65.0));
        let missing = r#"{"f_com":65,"K_f":5e-5,"transition_s":1,"control_hz":100,"u_max":0.002}"#;
        assert!(serde_json::from_str::<AssistConfig>(missing).is_err());
    }

    fn explore(mass: f64, mu: f64) -> Result<f64> {
        let friction = FrictionModel::new(mass, mu)?;
        let mut sim = Simulator::new(SimConfig::default(), friction, SimState::at_rest(0.0))?;
        explore_object(&mut sim, &AssistConfig::recommended(0.0), &ExploreConfig::default())
    }

    #[test]
    fn exploration_finds_breakaway() {
        let f = explore(36.0, 0.2265).unwrap();
        assert!((f - 80.0).abs() <= 2.0, "{f}");
        let f = explore(27.7, 0.239).unwrap();
        assert!((64.0..=66.0).contains(&f), "{f}");
        assert!(matches!(explore(36.0, 0.0), Err(Error::Scenario(_))));
        assert!(matches!(explore(200.0, 0.9), Err(Error::Scenario(_))));
    }

    #[test]
    fn handoff_and_watchdog() {
        let (tx, rx) = intent_handoff();
        assert!(rx.latest().is_none());
        tx.publish(PUSH, 1.0);
        tx.publish(IDLE, 1.01);
        assert_eq!(rx.latest().unwrap().logits, IDLE);
        let mut w = StaleWatchdog::new(0.05, 0.5);
        assert!(w.check(1.05, Some(1.0)).unwrap());
        assert!(!w.check(1.06, Some(1.0)).unwrap());
        assert!(!w.check(1.5, Some(1.0)).unwrap());
        assert!(w.check(1.6, Some(1.0)).is_err());
        assert!(w.check(1.6, Some(1.59)).unwrap());
    }
}
