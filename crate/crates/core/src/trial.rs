//! Closed-loop trials: a scripted human moves the box with or without the
//! assisting robot while the predictor watches the skeleton.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controller::{
    assist_target, control_tick, explore_object, intent_handoff, on_idle_stop, AssistConfig, ControllerState,
    ExploreConfig, IntentionFilter, StaleWatchdog, STALE_LIMIT_S,
};
use crate::dgnn::{model_forward, select_class, Checkpoint, ModelParams, Mode};
use crate::error::{Error, Result};
use crate::eval::{Condition, TrialLog, TrialMeta, TrialSample};
use crate::physics::{human_force, FrictionModel, HumanForcePolicy, SimConfig, SimState, Simulator};
use crate::skeleton::{incidence_matrices, joint, make_window, DirectedSkeletonGraph, IncidencePair, IntentionClass, SkeletonFrame};
use crate::synth::{derive_seed, label_frames, ActionKind, Timeline, TimelineBuilder, MEAN_ACTION_OVERHEAD, V_DEAD};

/// Physics substeps per control tick.
pub const SUBSTEPS: usize = 10;
/// The human keeps tracking the final position this long after the plan stops.
pub const RELEASE_S: f64 = 0.3;
/// Continuous stale-intention time that aborts a trial.
pub const STALE_TRIP_S: f64 = 1.0;

const LEAD_IN_S: f64 = 2.5;

fn default_distance() -> f64 {
    0.30
}
fn default_scale() -> f64 {
    1.0
}
fn default_repetitions() -> usize {
    5
}
fn default_idle() -> f64 {
    2.0
}
fn default_sensor_noise() -> f64 {
    0.5
}
fn default_skeleton_noise() -> f64 {
    0.005
}

/// One experimental condition on one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub mass: f64,
    pub mu_static: f64,
    /// Compensation force; explored when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_com: Option<f64>,
    /// Duration of each push or pull including preparation, s.
    pub task_time: f64,
    #[serde(default = "default_distance")]
    pub distance: f64,
    #[serde(default = "default_scale")]
    pub participant_scale: f64,
    pub condition: Condition,
    /// Pulls and pushes each, alternating.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_idle")]
    pub idle_s: f64,
    #[serde(default = "default_sensor_noise")]
    pub sensor_noise_std: f64,
    #[serde(default = "default_skeleton_noise")]
    pub skeleton_noise_std: f64,
}

impl ScenarioSpec {
    pub fn motion_duration(&self) -> f64 {
        self.task_time - MEAN_ACTION_OVERHEAD
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Scenario(format!("{}: {m}", self.id)));
        if !(self.distance > 0.0) {
            return bad("distance must be positive");
        }
        if self.repetitions == 0 {
            return bad("at least one repetition");
        }
        if !(self.mass > 0.0 && self.mu_static >= 0.0) {
            return bad("mass must be positive and friction non-negative");
        }
        if !(self.motion_duration() >= 0.5) {
            return bad("task time too short");
        }
        if !(self.participant_scale > 0.0 && self.idle_s >= 0.0) {
            return bad("participant scale must be positive and idle time non-negative");
        }
        if !(self.sensor_noise_std >= 0.0 && self.skeleton_noise_std >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if self.f_com.is_some_and(|f| !(f >= 0.0)) {
            return bad("f_com must be non-negative");
        }
        Ok(())
    }

    pub fn friction(&self) -> Result<FrictionModel> {
        FrictionModel::new(self.mass, self.mu_static)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| Error::json(context, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("scenario", e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// The four example scenarios: two loads, each at a fast and a slow pace.
pub fn bundled_scenarios() -> Vec<ScenarioSpec> {
    [
        include_str!("../scenarios/heavy_6s.json"),
        include_str!("../scenarios/heavy_10s.json"),
        include_str!("../scenarios/light_6s.json"),
        include_str!("../scenarios/light_10s.json"),
    ]
    .iter()
    .map(|t| ScenarioSpec::from_json(t, "bundled scenario").expect("bundled scenarios are valid"))
    .collect()
}

/// Runs exploration on a fresh simulator of the scenario's object.
pub fn explore_scenario(spec: &ScenarioSpec) -> Result<f64> {
    spec.validate()?;
    let config = SimConfig {
        sensor_noise_std: 0.0,
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(config, spec.friction()?, SimState::at_rest(0.0))?;
    explore_object(&mut sim, &AssistConfig::recommended(0.0), &ExploreConfig::default())
}

/// Trained network plus the graph it runs on.
#[derive(Debug, Clone)]
pub struct Predictor {
    params: ModelParams,
    graph: DirectedSkeletonGraph,
    inc: IncidencePair,
}

impl Predictor {
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        let graph = checkpoint.graph()?;
        let inc = incidence_matrices(&graph);
        Ok(Predictor {
            params: checkpoint.params.clone(),
            graph,
            inc,
        })
    }

    pub fn window_length(&self) -> usize {
        self.params.config.window_length
    }

    /// Logits for the window ending with the newest frame.
    pub fn predict(&self, frames: &VecDeque<SkeletonFrame>) -> Result<[f64; 3]> {
        let window = make_window(frames, &self.graph, self.window_length())?;
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(model_forward(&window, &self.params, &self.inc, Mode::Eval, &mut unused)?.0)
    }
}

/// Alternating pulls and pushes separated by standing still.
pub fn trial_timeline(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Result<Timeline> {
    spec.validate()?;
    let defaults = crate::synth::SynthConfig::default();
    let mut b = TimelineBuilder::new(rng, spec.participant_scale, defaults.lean_angle_max, defaults.arm_reach);
    b.idle(ActionKind::IdleStand, LEAD_IN_S, 1.0, 1.0);
    for _ in 0..spec.repetitions {
        for kind in [ActionKind::Pull, ActionKind::Push] {
            b.action(kind, spec.motion_duration(), spec.distance);
            b.idle(ActionKind::IdleStand, spec.idle_s, 1.0, 1.0);
        }
    }
    Ok(b.finish())
}

/// Engagement of the simulated human in one action: tracks the plan shifted
/// to where the box actually was when the action began.
#[derive(Debug, Clone, Copy)]
struct Engagement {
    onset: f64,
    until: f64,
    anchor: f64,
}

pub fn run_trial(
    spec: &ScenarioSpec,
    assist: Option<&AssistConfig>,
    predictor: Option<&Predictor>,
    seed: u64,
) -> Result<TrialLog> {
    spec.validate()?;
    let assisted = spec.condition == Condition::Assisted;
    let assist = match (assisted, assist) {
        (true, Some(a)) => {
            a.validate()?;
            Some(a)
        }
        (true, None) => return Err(Error::Precondition("assisted trial needs a controller config".into())),
        (false, _) => None,
    };
    if assisted && predictor.is_none() {
        return Err(Error::Precondition("assisted trial needs a checkpoint".into()));
    }
    let control_hz = assist.map_or(100.0, |a| a.control_hz);
    let tick = 1.0 / control_hz;

    let mut plan_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let timeline = trial_timeline(spec, &mut plan_rng)?;
    let actions = timeline.actions();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let skeleton_noise = Normal::new(0.0, spec.skeleton_noise_std).map_err(|e| Error::Precondition(e.to_string()))?;

    let sim_config = SimConfig {
        dt: tick / SUBSTEPS as f64,
        sensor_noise_std: spec.sensor_noise_std,
        seed: derive_seed(seed, 2),
        robot_attached: assisted,
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(sim_config, spec.friction()?, SimState::at_rest(0.0))?;
    let mut ctrl = ControllerState::new(0.0);
    let mut filter = IntentionFilter::new(assist.map_or(crate::controller::DEFAULT_FILTER_LEN, |a| a.filter_len))?;
    let (publisher, receiver) = intent_handoff();
    let mut watchdog = StaleWatchdog::new(STALE_LIMIT_S, STALE_TRIP_S);
    let window_len = predictor.map_or(0, |p| p.window_length());
    let mut frames: VecDeque<SkeletonFrame> = VecDeque::with_capacity(window_len + 1);

    let mut log = TrialLog::new(TrialMeta {
        condition: spec.condition,
        scenario_id: spec.id.clone(),
        seed,
        f_com: assist.map(|a| a.f_com),
    });
    let n_ticks = (timeline.duration() * control_hz).round() as usize;
    let mut engagement: Option<Engagement> = None;
    let mut next_action = 0;
    let mut f_r = 0.0;
    let mut intent_raw = IntentionClass::Idle;
    let mut last_stamp = None;
    for k in 0..n_ticks {
        let t = k as f64 * tick;

        if let Some(p) = predictor {
            let mut joints = timeline.joints(t, sim.state.box_x);
            for (j, q) in joints.iter_mut().enumerate() {
                if j != joint::PELVIS {
                    q.iter_mut().for_each(|c| *c += skeleton_noise.sample(&mut noise_rng));
                }
            }
            frames.push_back(SkeletonFrame { timestamp: t, joints });
            if frames.len() > window_len {
                frames.pop_front();
            }
            if frames.len() == window_len {
                let logits = p.predict(&frames)?;
                intent_raw = select_class(&logits);
                publisher.publish(logits, t);
            }
        }
        // consume the newest logits once each
        if let Some(stamped) = receiver.latest() {
            if watchdog.check(t, Some(stamped.time))? && last_stamp != Some(stamped.time) {
                filter.push(stamped.logits);
                last_stamp = Some(stamped.time);
            }
        }
        let intent_filtered = filter.current();

        let mut u = 0.0;
        if let Some(a) = assist {
            ctrl = assist_target(&ctrl, intent_filtered, t, a);
            let (c, s) = on_idle_stop(&ctrl, &sim.state, &sim.config, t, a);
            ctrl = c;
            sim.state = s;
            u = control_tick(&mut ctrl, f_r, a);
        }

        let cmd_from = sim.state.robot_cmd_x;
        let mut readings = None;
        for i in 1..=SUBSTEPS {
            let ts = sim.state.time;
            while next_action < actions.len() && ts >= actions[next_action].onset {
                let a = &actions[next_action];
                engagement = Some(Engagement {
                    onset: a.onset,
                    until: a.offset + RELEASE_S,
                    anchor: sim.state.box_x,
                });
                next_action += 1;
            }
            if engagement.is_some_and(|e| ts > e.until) {
                engagement = None;
            }
            let f_h = match engagement {
                Some(e) => {
                    let origin = timeline.planned_box(e.onset).0;
                    let trajectory = |tt: f64| {
                        let (x, v, _) = timeline.planned_box(tt);
                        Some((e.anchor + x - origin, v))
                    };
                    human_force(&HumanForcePolicy::new(trajectory), &sim.state, ts)
                }
                None => 0.0,
            };
            let cmd = if assisted {
                cmd_from + (ctrl.robot_cmd_x - cmd_from) * i as f64 / SUBSTEPS as f64
            } else {
                sim.state.box_x
            };
            readings = Some(sim.step(f_h, cmd)?);
        }
        let r = readings.expect("at least one substep");
        f_r = r.f_r[0];
        let t_end = sim.state.time;
        let planned_v = timeline.planned_box(t_end).1;
        log.samples.push(TrialSample {
            t: t_end,
            box_x: r.box_x,
            box_v: r.box_v,
            f_h: r.f_h,
            f_r: r.f_r,
            f_d_x: ctrl.f_d[0],
            u_x: u,
            intent_raw,
            intent_filtered,
            label: label_frames(&[planned_v], V_DEAD)[0],
        });
    }
    Ok(log)
}

/// Runs `n` trials of a scenario with seeds derived from `seed`.
pub fn run_trials(
    spec: &ScenarioSpec,
    assist: Option<&AssistConfig>,
    predictor: Option<&Predictor>,
    seed: u64,
    n: usize,
) -> Result<Vec<TrialLog>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| run_trial(spec, assist, predictor, rng.random())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::segment_actions;

    fn quiet(mut spec: ScenarioSpec) -> ScenarioSpec {
        spec.sensor_noise_std = 0.0;
        spec.skeleton_noise_std = 0.0;
        spec
    }

    #[test]
    fn bundled_scenarios_parse() {
        let s = bundled_scenarios();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|x| x.condition == Condition::Dry && x.repetitions == 5));
    }

    #[test]
    fn dry_trial_logs_ten_alternating_actions() {
        let spec = quiet(bundled_scenarios()[3].clone());
        let log = run_trial(&spec, None, None, 3).unwrap();
        let recs = segment_actions(&log, V_DEAD);
        assert_eq!(recs.len(), 10, "{recs:?}");
        for (i, r) in recs.iter().enumerate() {
            let want = if i % 2 == 0 { IntentionClass::Pull } else { IntentionClass::Push };
            assert_eq!(r.kind, want);
        }
        assert!(log.samples.iter().all(|s| s.f_d_x == 0.0 && s.f_r[0] == 0.0));
    }

    #[test]
    fn assisted_requires_inputs() {
        let mut spec = bundled_scenarios()[0].clone();
        spec.condition = Condition::Assisted;
        assert!(run_trial(&spec, None, None, 0).is_err());
        assert!(run_trial(&spec, Some(&AssistConfig::recommended(78.0)), None, 0).is_err());
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut spec = bundled_scenarios()[0].clone();
        spec.distance = 0.0;
        assert!(spec.validate().is_err());
        spec.distance = 0.3;
        spec.repetitions = 0;
        assert!(spec.validate().is_err());
    }
}
