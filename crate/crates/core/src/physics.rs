//! One-degree-of-freedom box on a frictional floor, pushed by a simulated
//! human and coupled to a position-controlled robot through a spring-damper
//! (the compliant gripper).
//!
//! Sign conventions: +x is "pull" (towards the human), -x is "push". The
//! robot-side sensor reads the coupling force acting on the box.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::Vec3;

pub const GRAVITY: f64 = 9.81;
/// Kinetic friction as a fraction of static friction.
pub const KINETIC_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionModel {
    pub mu_static: f64,
    pub mu_kinetic: f64,
    pub mass: f64,
    pub gravity: f64,
}

impl FrictionModel {
    /// Coulomb model with `mu_kinetic = 0.9 * mu_static`.
    pub fn new(mass: f64, mu_static: f64) -> Result<Self> {
        let model = FrictionModel {
            mu_static,
            mu_kinetic: KINETIC_RATIO * mu_static,
            mass,
            gravity: GRAVITY,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Precondition(format!("mass must be positive, got {}", self.mass)));
        }
        // a frictionless floor is admitted so exploration can report it
        if !(self.mu_kinetic >= 0.0 && self.mu_kinetic <= self.mu_static && self.mu_static.is_finite()) {
            return Err(Error::Precondition(format!(
                "need 0 <= mu_kinetic ({}) <= mu_static ({})",
                self.mu_kinetic, self.mu_static
            )));
        }
        Ok(())
    }

    pub fn static_peak(&self) -> f64 {
        self.mu_static * self.mass * self.gravity
    }

    pub fn kinetic_level(&self) -> f64 {
        self.mu_kinetic * self.mass * self.gravity
    }
}

/// Friction acting on the box given its velocity and the net non-friction
/// force applied to it.
pub fn friction_force(box_v: f64, f_applied_net: f64, model: &FrictionModel, v_stick: f64) -> f64 {
    if box_v.abs() < v_stick {
        if f_applied_net.abs() <= model.static_peak() {
            -f_applied_net
        } else {
            -f_applied_net.signum() * model.kinetic_level()
        }
    } else {
        -box_v.signum() * model.kinetic_level()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub spring_k: f64,
    pub spring_c: f64,
    pub sensor_noise_std: f64,
    pub v_stick: f64,
    pub seed: u64,
    /// Whether the robot gripper holds the box. A detached robot exerts no
    /// force (the dry condition).
    pub robot_attached: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            spring_k: 2000.0,
            spring_c: 50.0,
            sensor_noise_std: 0.0,
            v_stick: 1e-4,
            seed: 0,
            robot_attached: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.spring_k > 0.0 && self.v_stick > 0.0) {
            return Err(Error::Precondition("dt, spring_k and v_stick must be positive".into()));
        }
        if !(self.spring_c >= 0.0 && self.sensor_noise_std >= 0.0) {
            return Err(Error::Precondition("spring_c and sensor noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub box_x: f64,
    pub box_v: f64,
    pub robot_cmd_x: f64,
    /// Robot command minus box position; the spring is relaxed at 0.
    pub spring_deflection: f64,
    pub sensor_bias: f64,
    pub time: f64,
}

impl SimState {
    /// Box at rest at `x` with the gripper relaxed.
    pub fn at_rest(x: f64) -> Self {
        SimState {
            box_x: x,
            box_v: 0.0,
            robot_cmd_x: x,
            spring_deflection: 0.0,
            sensor_bias: 0.0,
            time: 0.0,
        }
    }

    /// Static part of the coupling force on the box.
    pub fn spring_force(&self, config: &SimConfig) -> f64 {
        if config.robot_attached {
            config.spring_k * self.spring_deflection
        } else {
            0.0
        }
    }

    fn is_finite(&self) -> bool {
        [self.box_x, self.box_v, self.robot_cmd_x, self.spring_deflection, self.sensor_bias, self.time]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReadings {
    /// Robot-side force sensor, bias and noise included.
    pub f_r: Vec3,
    /// Human-side handle force, noise included.
    pub f_h: Vec3,
    /// Friction load carried by the floor: the negated friction acting on the box.
    pub f_f: f64,
    /// Noise-free coupling force on the box.
    pub f_s: f64,
    pub box_x: f64,
    pub box_v: f64,
}

/// Sets the bias to the current static coupling force so the sensor reads
/// zero until the load changes.
pub fn zero_sensor_bias(state: &SimState, config: &SimConfig) -> SimState {
    SimState {
        sensor_bias: state.spring_force(config),
        ..*state
    }
}

/// Advances the box by one `config.dt` with semi-implicit Euler. The robot
/// command moves linearly from `state.robot_cmd_x` to `robot_cmd_x` over the
/// step. `noise` supplies the sensor noise samples for `f_r` and `f_h`.
pub fn step(
    state: &SimState,
    f_h_x: f64,
    robot_cmd_x: f64,
    config: &SimConfig,
    friction: &FrictionModel,
    noise: [f64; 2],
) -> Result<(SimState, SensorReadings)> {
    let dt = config.dt;
    let cmd_v = (robot_cmd_x - state.robot_cmd_x) / dt;
    let f_s = if config.robot_attached {
        config.spring_k * (state.robot_cmd_x - state.box_x) + config.spring_c * (cmd_v - state.box_v)
    } else {
        0.0
    };
    let applied = f_h_x + f_s;
    let f_fric = friction_force(state.box_v, applied, friction, config.v_stick);
    let stuck = state.box_v.abs() < config.v_stick && applied.abs() <= friction.static_peak();
    let mut v = if stuck {
        0.0
    } else {
        state.box_v + (applied + f_fric) / friction.mass * dt
    };
    // kinetic friction cannot reverse the motion: capture at the zero crossing
    if state.box_v != 0.0 && v.signum() != state.box_v.signum() && applied.abs() <= friction.static_peak() {
        v = 0.0;
    }
    let box_x = state.box_x + v * dt;
    let next = SimState {
        box_x,
        box_v: v,
        robot_cmd_x,
        spring_deflection: robot_cmd_x - box_x,
        sensor_bias: state.sensor_bias,
        time: state.time + dt,
    };
    let readings = SensorReadings {
        f_r: [f_s - state.sensor_bias + noise[0], 0.0, 0.0],
        f_h: [f_h_x + noise[1], 0.0, 0.0],
        f_f: -f_fric,
        f_s,
        box_x,
        box_v: v,
    };
    if !next.is_finite() || !f_s.is_finite() {
        return Err(Error::SimulationDiverged { time: state.time });
    }
    Ok((next, readings))
}

/// Simulation instance owning its state and noise generator.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub config: SimConfig,
    pub friction: FrictionModel,
    pub state: SimState,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(config: SimConfig, friction: FrictionModel, state: SimState) -> Result<Self> {
        config.validate()?;
        friction.validate()?;
        let noise = if config.sensor_noise_std > 0.0 {
            Some(Normal::new(0.0, config.sensor_noise_std).map_err(|e| Error::Precondition(e.to_string()))?)
        } else {
            None
        };
        Ok(Simulator {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            friction,
            state,
            noise,
        })
    }

    pub fn step(&mut self, f_h_x: f64, robot_cmd_x: f64) -> Result<SensorReadings> {
        let noise = match &self.noise {
            Some(n) => [n.sample(&mut self.rng), n.sample(&mut self.rng)],
            None => [0.0; 2],
        };
        let (next, readings) = step(&self.state, f_h_x, robot_cmd_x, &self.config, &self.friction, noise)?;
        self.state = next;
        Ok(readings)
    }

    /// Runs `n` substeps with the robot command interpolated linearly to
    /// `robot_cmd_x` and a constant human force; returns the last readings.
    pub fn advance(&mut self, n: usize, f_h_x: f64, robot_cmd_x: f64) -> Result<SensorReadings> {
        let from = self.state.robot_cmd_x;
        let mut last = None;
        for i in 1..=n {
            let cmd = from + (robot_cmd_x - from) * i as f64 / n as f64;
            last = Some(self.step(f_h_x, cmd)?);
        }
        last.ok_or_else(|| Error::Precondition("advance needs at least one substep".into()))
    }

    pub fn zero_sensor_bias(&mut self) {
        self.state = zero_sensor_bias(&self.state, &self.config);
    }

    /// Noise-free reading of the current coupling force (static part).
    pub fn sensor_now(&self) -> f64 {
        self.state.spring_force(&self.config) - self.state.sensor_bias
    }
}

/// Desired box motion followed by the simulated human.
pub trait Trajectory {
    /// Desired `(position, velocity)` at `t`, or `None` when the human is
    /// not engaged.
    fn target(&self, t: f64) -> Option<(f64, f64)>;
}

impl<F: Fn(f64) -> Option<(f64, f64)>> Trajectory for F {
    fn target(&self, t: f64) -> Option<(f64, f64)> {
        self(t)
    }
}

/// PD tracking model of the participant, saturating at `f_max`.
#[derive(Debug, Clone)]
pub struct HumanForcePolicy<T> {
    pub target_trajectory: T,
    pub kp: f64,
    pub kd: f64,
    pub f_max: f64,
}

impl<T> HumanForcePolicy<T> {
    pub fn new(target_trajectory: T) -> Self {
        HumanForcePolicy {
            target_trajectory,
            kp: 2000.0,
            kd: 400.0,
            f_max: 120.0,
        }
    }
}

pub fn human_force<T: Trajectory>(policy: &HumanForcePolicy<T>, state: &SimState, t: f64) -> f64 {
    match policy.target_trajectory.target(t) {
        Some((x_des, v_des)) => {
            let f = policy.kp * (x_des - state.box_x) + policy.kd * (v_des - state.box_v);
            f.clamp(-policy.f_max, policy.f_max)
        }
        None => 0.0,
    }
}
