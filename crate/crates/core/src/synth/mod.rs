//! Procedural generator of labelled skeleton sequences.
//!
//! Recordings are built from scripts of action segments. During a push or
//! pull the performer's pelvis and the box translate together along x with a
//! trapezoidal velocity profile while both wrists hold the handle; torso lean,
//! reach and stance are adopted 0.3 to 0.6 s before the box starts to move,
//! which is the cue that makes prediction ahead of force possible. Idle
//! segments (standing, waving, exercising) act as distractors.
//!
//! Labels come from the box velocity alone: see [`label_frames`].

pub mod posture;

use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::skeleton::{read_records, write_records, FrameRecord, IntentionClass, SkeletonFrame, Vec3};
pub use posture::Posture;

/// Velocity dead band used to label frames, m/s.
pub const V_DEAD: f64 = 0.005;
/// Box travel of one push or pull at unit amplitude, metres.
pub const ACTION_DISTANCE: f64 = 0.30;
/// Motion duration of an action at unit speed scale, seconds.
pub const BASE_ACTION_DURATION: f64 = 4.0;
/// Limb-length scales of the two synthetic participants.
pub const PARTICIPANT_SCALES: [f64; 2] = [0.90, 1.10];

const PREP_LEAD_RANGE: (f64, f64) = (0.3, 0.6);
/// Time from segment start to the half-way point of the lean ramp.
const PREP_MARGIN: f64 = 0.2;
const LEAN_RAMP: f64 = 0.3;
/// Time after the box stops during which the hands leave the handle.
const SETTLE: f64 = 0.3;
const MIN_MOTION: f64 = 0.5;

/// Mean time a scripted push or pull segment spends outside box motion.
pub const MEAN_ACTION_OVERHEAD: f64 = PREP_MARGIN + 0.5 * (PREP_LEAD_RANGE.0 + PREP_LEAD_RANGE.1) + SETTLE;
const MAX_SCRIPT_ATTEMPTS: usize = 20;
const MIX_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Push,
    Pull,
    IdleStand,
    IdleWave,
    IdleExercise,
}

impl ActionKind {
    pub fn is_motion(self) -> bool {
        matches!(self, ActionKind::Push | ActionKind::Pull)
    }

    /// Direction of box travel along x.
    pub fn motion_sign(self) -> f64 {
        match self {
            ActionKind::Push => -1.0,
            ActionKind::Pull => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSegmentSpec {
    pub kind: ActionKind,
    pub duration: f64,
    pub speed_scale: f64,
    pub amplitude_scale: f64,
}

impl ActionSegmentSpec {
    pub fn new(kind: ActionKind, duration: f64) -> Self {
        ActionSegmentSpec {
            kind,
            duration,
            speed_scale: 1.0,
            amplitude_scale: 1.0,
        }
    }

    /// Shortest segment that still leaves room for preparation, a minimal
    /// motion and the settle phase.
    pub fn min_action_duration() -> f64 {
        PREP_MARGIN + PREP_LEAD_RANGE.1 + MIN_MOTION + SETTLE
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Precondition(format!(
                "segment duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.speed_scale > 0.0 && self.amplitude_scale > 0.0) {
            return Err(Error::Precondition("segment scales must be positive".into()));
        }
        if self.kind.is_motion() && self.duration < Self::min_action_duration() {
            return Err(Error::Precondition(format!(
                "{:?} segment of {} s is shorter than {} s",
                self.kind,
                self.duration,
                Self::min_action_duration()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Standard deviation of per-joint Gaussian position noise, metres.
    pub noise_std: f64,
    pub frame_rate: f64,
    /// Peak torso lean during pushes and pulls, radians.
    pub lean_angle_max: f64,
    /// Reach blend applied when the hands hold the handle (1 = full reach).
    pub arm_reach: f64,
    /// Target label fractions `(idle, pull, push)`.
    pub target_label_mix: [f64; 3],
    /// Limb-length scale of the performer.
    pub limb_scale: f64,
    /// Box mass and kinetic friction used for the recorded human force.
    pub box_mass: f64,
    pub mu_kinetic: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 2025,
            noise_std: 0.005,
            frame_rate: 100.0,
            lean_angle_max: 0.35,
            arm_reach: 1.0,
            target_label_mix: [0.645, 0.180, 0.175],
            limb_scale: 1.0,
            box_mass: 36.0,
            mu_kinetic: 0.9 * 0.2265,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.target_label_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.target_label_mix.iter().any(|f| *f < 0.0) {
            return Err(Error::Precondition(format!(
                "label mix {:?} does not sum to 1",
                self.target_label_mix
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Precondition("noise_std must be >= 0".into()));
        }
        if !(self.frame_rate > 0.0 && self.limb_scale > 0.0 && self.box_mass > 0.0) {
            return Err(Error::Precondition("frame rate, limb scale and mass must be positive".into()));
        }
        Ok(())
    }
}

/// Trapezoidal velocity profile covering `distance` in `duration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidProfile {
    pub distance: f64,
    pub duration: f64,
    pub accel_time: f64,
}

impl TrapezoidProfile {
    pub fn new(distance: f64, duration: f64) -> Self {
        TrapezoidProfile {
            distance,
            duration,
            accel_time: (0.25 * duration).min(1.0),
        }
    }

    fn peak_velocity(&self) -> f64 {
        self.distance / (self.duration - self.accel_time)
    }

    fn accel(&self) -> f64 {
        self.peak_velocity() / self.accel_time
    }

    /// `(position, velocity, acceleration)` at time `tau` after motion onset.
    pub fn sample(&self, tau: f64) -> (f64, f64, f64) {
        let (d, ta) = (self.duration, self.accel_time);
        let (vp, a) = (self.peak_velocity(), self.accel());
        if tau <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if tau < ta {
            (0.5 * a * tau * tau, a * tau, a)
        } else if tau <= d - ta {
            (0.5 * a * ta * ta + vp * (tau - ta), vp, 0.0)
        } else if tau < d {
            let r = d - tau;
            (self.distance - 0.5 * a * r * r, a * r, -a)
        } else {
            (self.distance, 0.0, 0.0)
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

#[derive(Debug, Clone, PartialEq)]
struct MotionPlan {
    sign: f64,
    profile: TrapezoidProfile,
    onset: f64,
    lean_half: f64,
    lean_peak: f64,
}

impl MotionPlan {
    fn offset(&self) -> f64 {
        self.onset + self.profile.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
struct IdlePlan {
    hands_on: bool,
    phase: f64,
    speed: f64,
    amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct PlannedSegment {
    kind: ActionKind,
    start: f64,
    end: f64,
    box_start: f64,
    motion: Option<MotionPlan>,
    idle: IdlePlan,
}

/// Ground-truth timing of one push or pull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedAction {
    pub kind: ActionKind,
    pub segment_start: f64,
    /// Time the lean ramp reaches half of its peak.
    pub lean_half: f64,
    pub lean_peak: f64,
    pub onset: f64,
    pub offset: f64,
}

/// A randomised, fully determined performance of a script.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    segments: Vec<PlannedSegment>,
    limb_scale: f64,
    arm_reach: f64,
}

/// Incrementally assembles a [`Timeline`].
pub struct TimelineBuilder<'a, R: Rng> {
    rng: &'a mut R,
    lean_angle_max: f64,
    timeline: Timeline,
    box_x: f64,
}

impl<'a, R: Rng> TimelineBuilder<'a, R> {
    pub fn new(rng: &'a mut R, limb_scale: f64, lean_angle_max: f64, arm_reach: f64) -> Self {
        TimelineBuilder {
            rng,
            lean_angle_max,
            timeline: Timeline {
                segments: Vec::new(),
                limb_scale,
                arm_reach,
            },
            box_x: 0.0,
        }
    }

    fn cursor(&self) -> f64 {
        self.timeline.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn idle(&mut self, kind: ActionKind, duration: f64, speed: f64, amplitude: f64) -> &mut Self {
        let start = self.cursor();
        let idle = IdlePlan {
            hands_on: kind == ActionKind::IdleStand && self.rng.random_bool(0.5),
            phase: self.rng.random_range(0.0..2.0 * PI),
            speed,
            amplitude,
        };
        self.timeline.segments.push(PlannedSegment {
            kind,
            start,
            end: start + duration,
            box_start: self.box_x,
            motion: None,
            idle,
        });
        self
    }

    /// Adds a push or pull whose box motion lasts exactly `motion_duration`.
    pub fn action(&mut self, kind: ActionKind, motion_duration: f64, distance: f64) -> &mut Self {
        let lead = self.rng.random_range(PREP_LEAD_RANGE.0..=PREP_LEAD_RANGE.1);
        self.action_with_lead(kind, motion_duration, distance, lead)
    }

    fn action_with_lead(&mut self, kind: ActionKind, motion_duration: f64, distance: f64, lead: f64) -> &mut Self {
        let start = self.cursor();
        let lean_half = start + PREP_MARGIN;
        let onset = lean_half + lead;
        let sign = kind.motion_sign();
        let peak_scale = self.rng.random_range(0.6..=1.0);
        // leaning back while pulling is less pronounced than leaning into a push
        let lean_peak = if sign < 0.0 { 1.0 } else { -0.8 } * self.lean_angle_max * peak_scale;
        let plan = MotionPlan {
            sign,
            profile: TrapezoidProfile::new(distance, motion_duration),
            onset,
            lean_half,
            lean_peak,
        };
        let end = plan.offset() + SETTLE;
        self.timeline.segments.push(PlannedSegment {
            kind,
            start,
            end,
            box_start: self.box_x,
            motion: Some(plan),
            idle: IdlePlan {
                hands_on: true,
                phase: 0.0,
                speed: 1.0,
                amplitude: 1.0,
            },
        });
        self.box_x += sign * distance;
        self
    }

    /// Appends a script segment, deriving the motion duration from the
    /// segment duration and a randomly drawn preparation lead.
    pub fn segment(&mut self, spec: &ActionSegmentSpec) -> Result<&mut Self> {
        spec.validate()?;
        if spec.kind.is_motion() {
            let lead = self.rng.random_range(PREP_LEAD_RANGE.0..=PREP_LEAD_RANGE.1);
            let motion = spec.duration - PREP_MARGIN - lead - SETTLE;
            // the segment keeps its scripted length; motion absorbs the lead
            Ok(self.action_with_lead(spec.kind, motion, ACTION_DISTANCE * spec.amplitude_scale, lead))
        } else {
            Ok(self.idle(spec.kind, spec.duration, spec.speed_scale, spec.amplitude_scale))
        }
    }

    pub fn finish(self) -> Timeline {
        self.timeline
    }
}

impl Timeline {
    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn limb_scale(&self) -> f64 {
        self.limb_scale
    }

    pub fn actions(&self) -> Vec<PlannedAction> {
        self.segments
            .iter()
            .filter_map(|s| {
                s.motion.as_ref().map(|m| PlannedAction {
                    kind: s.kind,
                    segment_start: s.start,
                    lean_half: m.lean_half,
                    lean_peak: m.lean_peak,
                    onset: m.onset,
                    offset: m.offset(),
                })
            })
            .collect()
    }

    fn segment_at(&self, t: f64) -> &PlannedSegment {
        let idx = self.segments.partition_point(|s| s.end <= t);
        &self.segments[idx.min(self.segments.len() - 1)]
    }

    /// Planned box `(position, velocity, acceleration)` at time `t`.
    pub fn planned_box(&self, t: f64) -> (f64, f64, f64) {
        let seg = self.segment_at(t);
        match &seg.motion {
            Some(m) => {
                let (x, v, a) = m.profile.sample(t - m.onset);
                (seg.box_start + m.sign * x, m.sign * v, m.sign * a)
            }
            None => (seg.box_start, 0.0, 0.0),
        }
    }

    /// Posture parameters at time `t`.
    pub fn posture(&self, t: f64) -> Posture {
        let seg = self.segment_at(t);
        let s = self.limb_scale;
        let mut p = Posture::default();
        if let Some(m) = &seg.motion {
            let ta = m.profile.accel_time;
            let offset = m.offset();
            let lean_up = smoothstep((t - (m.lean_half - 0.5 * LEAN_RAMP)) / LEAN_RAMP);
            let lean_down = smoothstep((t - (offset - ta)) / ta);
            p.lean = m.lean_peak * lean_up * (1.0 - lean_down);
            let reach_up = smoothstep((t - (m.lean_half - 0.5 * LEAN_RAMP - 0.05)) / LEAN_RAMP);
            let reach_down = smoothstep((t - (offset + 0.05)) / (SETTLE - 0.05));
            let reach = reach_up * (1.0 - reach_down);
            p.reach = reach * self.arm_reach;
            p.stance = reach * if m.sign < 0.0 { 1.0 } else { -0.8 };
            let (travelled, v, _) = m.profile.sample(t - m.onset);
            p.gait_amplitude = (1.2 * v).min(0.12) * s;
            p.gait_phase = 2.0 * PI * travelled / (0.5 * s);
            return p;
        }
        let tau = t - seg.start;
        let dur = seg.end - seg.start;
        let ramp = (0.3f64).min(0.5 * dur);
        let envelope = smoothstep(tau / ramp) * smoothstep((dur - tau) / ramp);
        let idle = &seg.idle;
        let amp = idle.amplitude;
        match seg.kind {
            ActionKind::IdleStand => {
                p.lean = 0.03 * amp * (2.0 * PI * 0.2 * tau + idle.phase).sin();
                p.side_bend = 0.02 * amp * (2.0 * PI * 0.15 * tau + 1.3 * idle.phase).sin();
                if idle.hands_on {
                    p.reach = envelope * self.arm_reach;
                }
            }
            ActionKind::IdleWave => {
                p.wave = envelope;
                p.wave_swing = (amp.min(1.5) / 1.5) * (2.0 * PI * 1.5 * idle.speed * tau + idle.phase).sin();
            }
            ActionKind::IdleExercise => {
                let cycle = 0.5 * (1.0 - (2.0 * PI * 0.5 * idle.speed * tau + idle.phase).cos());
                p.squat = envelope * cycle * amp.min(1.5) * 0.6;
                p.arms_forward = envelope * cycle;
                p.side_bend = envelope * 0.12 * amp * (2.0 * PI * 0.25 * idle.speed * tau).sin();
            }
            ActionKind::Push | ActionKind::Pull => unreachable!("motion segments handled above"),
        }
        p
    }

    /// Noise-free world-frame skeleton with the performer at the handle of a
    /// box located at `box_x`.
    pub fn joints(&self, t: f64, box_x: f64) -> Vec<Vec3> {
        posture::joints(&self.posture(t), box_x, self.limb_scale)
    }
}

/// Recording provenance: generator configuration and a hash of the script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: SynthConfig,
    pub script_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub frames: Vec<SkeletonFrame>,
    pub box_positions: Vec<f64>,
    pub box_velocities: Vec<f64>,
    pub human_forces: Vec<Vec3>,
    pub labels: Vec<IntentionClass>,
    pub provenance: Provenance,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Realised label fractions `(idle, pull, push)`.
    pub fn label_mix(&self) -> [f64; 3] {
        label_mix(&self.labels)
    }

    pub fn to_records(&self) -> Vec<FrameRecord> {
        (0..self.len())
            .map(|i| FrameRecord {
                t: self.frames[i].timestamp,
                joints: self.frames[i].joints.clone(),
                box_x: self.box_positions[i],
                box_v: self.box_velocities[i],
                f_h: self.human_forces[i],
                label: self.labels[i],
            })
            .collect()
    }

    /// Rebuilds a sequence from file records; provenance is left empty.
    pub fn from_records(records: Vec<FrameRecord>) -> Self {
        let mut seq = LabeledSequence {
            frames: Vec::with_capacity(records.len()),
            box_positions: Vec::with_capacity(records.len()),
            box_velocities: Vec::with_capacity(records.len()),
            human_forces: Vec::with_capacity(records.len()),
            labels: Vec::with_capacity(records.len()),
            provenance: Provenance {
                config: SynthConfig::default(),
                script_hash: String::new(),
            },
        };
        for r in records {
            seq.frames.push(SkeletonFrame {
                timestamp: r.t,
                joints: r.joints,
            });
            seq.box_positions.push(r.box_x);
            seq.box_velocities.push(r.box_v);
            seq.human_forces.push(r.f_h);
            seq.labels.push(r.label);
        }
        seq
    }
}

/// Fractions of `(idle, pull, push)` labels.
pub fn label_mix(labels: &[IntentionClass]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for l in labels {
        let slot = match l {
            IntentionClass::Idle => 0,
            IntentionClass::Pull => 1,
            IntentionClass::Push => 2,
        };
        counts[slot] += 1;
    }
    let n = labels.len().max(1) as f64;
    counts.map(|c| c as f64 / n)
}

/// Push for motion towards -x beyond the dead band, pull towards +x,
/// idle otherwise.
pub fn label_frames(box_velocities: &[f64], v_dead: f64) -> Vec<IntentionClass> {
    box_velocities
        .iter()
        .map(|&v| {
            if v < -v_dead {
                IntentionClass::Push
            } else if v > v_dead {
                IntentionClass::Pull
            } else {
                IntentionClass::Idle
            }
        })
        .collect()
}

pub fn script_hash(script: &[ActionSegmentSpec]) -> String {
    let bytes = serde_json::to_vec(script).expect("script serialises");
    hex::encode(Sha256::digest(&bytes))
}

/// Samples the noise-free timeline at the configured frame rate and adds
/// joint noise (the pelvis anchor stays exact).
pub fn render(timeline: &Timeline, config: &SynthConfig, rng: &mut impl Rng, script_hash: String) -> Result<LabeledSequence> {
    let n = (timeline.duration() * config.frame_rate).round() as usize;
    let noise = Normal::new(0.0, config.noise_std)
        .map_err(|e| Error::Precondition(format!("noise distribution: {e}")))?;
    let gravity = crate::physics::GRAVITY;
    let mut seq = LabeledSequence {
        frames: Vec::with_capacity(n),
        box_positions: Vec::with_capacity(n),
        box_velocities: Vec::with_capacity(n),
        human_forces: Vec::with_capacity(n),
        labels: Vec::new(),
        provenance: Provenance {
            config: config.clone(),
            script_hash,
        },
    };
    for i in 0..n {
        let t = i as f64 / config.frame_rate;
        let (x, v, a) = timeline.planned_box(t);
        let mut joints = timeline.joints(t, x);
        for (j, p) in joints.iter_mut().enumerate() {
            if j == crate::skeleton::joint::PELVIS {
                continue;
            }
            for c in p.iter_mut() {
                *c += noise.sample(rng);
            }
        }
        let friction = if v.abs() > 0.0 {
            v.signum() * config.mu_kinetic * config.box_mass * gravity
        } else {
            0.0
        };
        seq.frames.push(SkeletonFrame { timestamp: t, joints });
        seq.box_positions.push(x);
        seq.box_velocities.push(v);
        seq.human_forces.push([config.box_mass * a + friction, 0.0, 0.0]);
    }
    seq.labels = label_frames(&seq.box_velocities, V_DEAD);
    Ok(seq)
}

/// Generates one recording of `script`; deterministic given the config seed.
pub fn generate_sequence(config: &SynthConfig, script: &[ActionSegmentSpec]) -> Result<LabeledSequence> {
    config.validate()?;
    if script.is_empty() {
        return Err(Error::Precondition("empty script".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut builder = TimelineBuilder::new(&mut rng, config.limb_scale, config.lean_angle_max, config.arm_reach);
    for spec in script {
        builder.segment(spec)?;
    }
    let timeline = builder.finish();
    render(&timeline, config, &mut rng, script_hash(script))
}

/// Draws a script of `n_actions` pushes and pulls separated by idle
/// segments, sized so the expected label mix matches the target.
pub fn random_script(rng: &mut impl Rng, mix: [f64; 3], n_actions: usize) -> Vec<ActionSegmentSpec> {
    let n_pull = if rng.random_bool(0.5) { n_actions.div_ceil(2) } else { n_actions / 2 };
    let mut kinds: Vec<ActionKind> = (0..n_actions)
        .map(|i| if i < n_pull { ActionKind::Pull } else { ActionKind::Push })
        .collect();
    for i in (1..kinds.len()).rev() {
        let j = rng.random_range(0..=i);
        kinds.swap(i, j);
    }
    let mut motion: Vec<f64> = kinds
        .iter()
        .map(|_| BASE_ACTION_DURATION / rng.random_range(0.5..=2.0))
        .collect();
    let total_of = |k: ActionKind, m: &[f64]| -> f64 {
        kinds.iter().zip(m).filter(|(kk, _)| **kk == k).map(|(_, d)| d).sum()
    };
    let (pull_raw, push_raw) = (total_of(ActionKind::Pull, &motion), total_of(ActionKind::Push, &motion));
    let motion_share = mix[1] + mix[2];
    let all = pull_raw + push_raw;
    let pull_scale = if pull_raw > 0.0 { all * mix[1] / motion_share / pull_raw } else { 1.0 };
    let push_scale = if push_raw > 0.0 { all * mix[2] / motion_share / push_raw } else { 1.0 };
    for (k, d) in kinds.iter().zip(motion.iter_mut()) {
        let scale = if *k == ActionKind::Pull { pull_scale } else { push_scale };
        *d = (*d * scale).clamp(BASE_ACTION_DURATION / 2.0, BASE_ACTION_DURATION * 2.0);
    }
    let motion_total: f64 = motion.iter().sum();
    let mean_overhead = MEAN_ACTION_OVERHEAD;
    let total = motion_total / motion_share.max(1e-9);
    let idle_total = (total - motion_total - n_actions as f64 * mean_overhead).max(n_actions as f64 + 1.0);

    let weights: Vec<f64> = (0..=n_actions).map(|_| rng.random_range(0.5..1.5)).collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut script = Vec::new();
    let push_idle = |script: &mut Vec<ActionSegmentSpec>, rng: &mut dyn rand::RngCore, duration: f64| {
        let pieces = if duration > 6.0 { 2 } else { 1 };
        for _ in 0..pieces {
            let r: f64 = rng.random();
            let kind = if r < 0.6 {
                ActionKind::IdleStand
            } else if r < 0.8 {
                ActionKind::IdleWave
            } else {
                ActionKind::IdleExercise
            };
            script.push(ActionSegmentSpec {
                kind,
                duration: duration / pieces as f64,
                speed_scale: rng.random_range(0.5..=2.0),
                amplitude_scale: rng.random_range(0.6..=1.4),
            });
        }
    };
    for (i, kind) in kinds.iter().enumerate() {
        push_idle(&mut script, rng, (idle_total * weights[i] / weight_sum).max(0.8));
        let lead_room = PREP_MARGIN + PREP_LEAD_RANGE.1 + SETTLE;
        script.push(ActionSegmentSpec {
            kind: *kind,
            duration: motion[i] + lead_room - 0.5 * (PREP_LEAD_RANGE.1 - PREP_LEAD_RANGE.0),
            speed_scale: BASE_ACTION_DURATION / motion[i],
            amplitude_scale: 1.0,
        });
    }
    push_idle(&mut script, rng, (idle_total * weights[n_actions] / weight_sum).max(0.8));
    script
}

fn within_mix(realized: [f64; 3], target: [f64; 3]) -> bool {
    realized.iter().zip(target).all(|(r, t)| (r - t).abs() <= MIX_TOLERANCE)
}

/// Draws scripts until the realised mix of one recording lies within
/// three percentage points of the target on every class.
pub fn generate_recording(config: &SynthConfig, n_actions: usize) -> Result<(Vec<ActionSegmentSpec>, LabeledSequence)> {
    config.validate()?;
    let mut script_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_5C41_9700_0000);
    let mut realized = [0.0; 3];
    for _ in 0..MAX_SCRIPT_ATTEMPTS {
        let script = random_script(&mut script_rng, config.target_label_mix, n_actions);
        let seq = generate_sequence(config, &script)?;
        realized = seq.label_mix();
        if within_mix(realized, config.target_label_mix) {
            return Ok((script, seq));
        }
    }
    Err(Error::MixUnreachable {
        attempts: MAX_SCRIPT_ATTEMPTS,
        realized,
    })
}

/// Sizes of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub actions_per_recording: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_train: 22,
            n_val: 6,
            actions_per_recording: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub seed: u64,
    pub limb_scale: f64,
    pub n_actions: usize,
    pub sequence: LabeledSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Recording>,
    pub val: Vec<Recording>,
}

impl Dataset {
    pub fn action_count(&self) -> usize {
        self.train.iter().chain(&self.val).map(|r| r.n_actions).sum()
    }

    /// Label mix over every frame of both splits.
    pub fn realized_mix(&self) -> [f64; 3] {
        let labels: Vec<IntentionClass> = self
            .train
            .iter()
            .chain(&self.val)
            .flat_map(|r| r.sequence.labels.iter().copied())
            .collect();
        label_mix(&labels)
    }
}

/// splitmix64 step, used to derive independent recording seeds.
pub(crate) fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates all recordings in memory. Participants alternate between the
/// two limb scales; train and validation seeds are disjoint.
pub fn generate_dataset(config: &SynthConfig, spec: DatasetSpec) -> Result<Dataset> {
    if spec.n_train == 0 || spec.n_val == 0 {
        return Err(Error::Precondition("both splits need at least one recording".into()));
    }
    if spec.actions_per_recording == 0 {
        return Err(Error::Precondition("recordings need at least one action".into()));
    }
    config.validate()?;
    let make = |index: usize| -> Result<Recording> {
        let seed = derive_seed(config.seed, index as u64);
        let limb_scale = PARTICIPANT_SCALES[index % 2];
        let cfg = SynthConfig {
            seed,
            limb_scale,
            ..config.clone()
        };
        let (_, sequence) = generate_recording(&cfg, spec.actions_per_recording)?;
        Ok(Recording {
            seed,
            limb_scale,
            n_actions: spec.actions_per_recording,
            sequence,
        })
    };
    let train = (0..spec.n_train).map(make).collect::<Result<Vec<_>>>()?;
    let val = (spec.n_train..spec.n_train + spec.n_val)
        .map(make)
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { train, val })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub idle: f64,
    pub pull: f64,
    pub push: f64,
}

impl From<[f64; 3]> for ClassMix {
    fn from(m: [f64; 3]) -> Self {
        ClassMix {
            idle: m[0],
            pull: m[1],
            push: m[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub path: String,
    pub seed: u64,
    pub n_frames: usize,
    pub mix: ClassMix,
    pub n_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub recordings: Vec<RecordingEntry>,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: SynthConfig,
    pub realized_mix: ClassMix,
    pub n_actions: usize,
    pub train: SplitManifest,
    pub val: SplitManifest,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("manifest serialises")))
    }
}

pub fn write_sequence(path: &Path, seq: &LabeledSequence) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(BufWriter::new(file), &seq.to_records()).map_err(|e| Error::io(path, e))
}

pub fn read_sequence(path: &Path) -> Result<LabeledSequence> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(LabeledSequence::from_records(read_records(BufReader::new(file))?))
}

/// Writes every recording as a JSONL sequence plus `manifest.json` into
/// `out_dir` and returns the manifest.
pub fn write_dataset(dataset: &Dataset, config: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let split = |name: &str, recordings: &[Recording]| -> Result<SplitManifest> {
        let mut entries = Vec::new();
        for (i, rec) in recordings.iter().enumerate() {
            let file = format!("{name}_{i:02}.jsonl");
            write_sequence(&out_dir.join(&file), &rec.sequence)?;
            entries.push(RecordingEntry {
                path: file,
                seed: rec.seed,
                n_frames: rec.sequence.len(),
                mix: rec.sequence.label_mix().into(),
                n_actions: rec.n_actions,
            });
        }
        Ok(SplitManifest {
            recordings: entries,
            split: name.to_string(),
        })
    };
    let manifest = DatasetManifest {
        config: config.clone(),
        realized_mix: dataset.realized_mix().into(),
        n_actions: dataset.action_count(),
        train: split("train", &dataset.train)?,
        val: split("val", &dataset.val)?,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Generates and writes a dataset.
pub fn build_dataset(config: &SynthConfig, spec: DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let dataset = generate_dataset(config, spec)?;
    write_dataset(&dataset, config, out_dir)
}

/// Loads the sequences of one split, resolving paths against the manifest
/// directory.
pub fn load_split(manifest_dir: &Path, split: &SplitManifest) -> Result<Vec<LabeledSequence>> {
    split
        .recordings
        .iter()
        .map(|r| read_sequence(&resolve(manifest_dir, &r.path)))
        .collect()
}

fn resolve(dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}
