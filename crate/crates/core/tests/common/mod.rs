//! Independent reference models shared by the integration tests.

#![allow(dead_code)]

/// Brute-force Coulomb box driven by a scripted force, written without the
/// library's stepper. Returns the final position and the times at which the
/// box starts or stops sliding.
pub fn coulomb_reference(
    mass: f64,
    mu_static: f64,
    mu_kinetic: f64,
    force: impl Fn(f64) -> f64,
    duration: f64,
    dt: f64,
) -> (f64, Vec<f64>) {
    let g = 9.81;
    let (peak, level) = (mu_static * mass * g, mu_kinetic * mass * g);
    let (mut x, mut v) = (0.0f64, 0.0f64);
    let mut events = Vec::new();
    let steps = (duration / dt).round() as usize;
    for k in 0..steps {
        let t = k as f64 * dt;
        let f = force(t);
        if v == 0.0 {
            if f.abs() > peak {
                v = (f - f.signum() * level) / mass * dt;
                events.push(t);
            }
        } else {
            let nv = v + (f - v.signum() * level) / mass * dt;
            if nv.signum() != v.signum() && f.abs() <= peak {
                v = 0.0;
                events.push(t);
            } else {
                v = nv;
            }
        }
        x += v * dt;
    }
    (x, events)
}

/// Force script for the stick-slip comparison: a held load below breakaway,
/// a slide, braking to a stop, rest, then the same in reverse. Jumps sit on
/// whole milliseconds so both step sizes see them at the same instant.
pub fn stick_slip_script(t: f64) -> f64 {
    match t {
        t if t < 1.0 => 60.0,
        t if t < 3.0 => 100.0,
        t if t < 5.0 => 40.0,
        t if t < 6.0 => 0.0,
        t if t < 7.0 => -95.0,
        t if t < 8.5 => -30.0,
        _ => 0.0,
    }
}
