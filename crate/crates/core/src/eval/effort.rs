//! Per-action human effort from trial logs.

use serde::{Deserialize, Serialize};

use super::log::TrialLog;
use super::stats::{mean, std_dev};
use crate::error::{Error, Result};
use crate::skeleton::IntentionClass;

/// Samples with a human force norm below this are discarded (inclusive keep).
pub const TRIM_THRESHOLD_N: f64 = 15.0;
/// Motion bursts of one kind closer than this are one action.
pub const MERGE_GAP_S: f64 = 0.2;
/// Each action's statistics window extends this far past the motion.
pub const WINDOW_EXTENSION_S: f64 = 0.25;
const TIME_SLACK_S: f64 = 1e-6;
/// How far before force onset a matching intention is searched for.
pub const LEAD_SEARCH_S: f64 = 3.0;

/// Keeps norms `>= threshold`, masks the rest.
pub fn trim_norms(norms: &[f64], threshold: f64) -> Vec<Option<f64>> {
    norms.iter().map(|&n| (n >= threshold).then_some(n)).collect()
}

/// Human force norms of a log trimmed at [`TRIM_THRESHOLD_N`].
pub fn trim_forces(log: &TrialLog) -> Vec<Option<f64>> {
    let norms: Vec<f64> = log.samples.iter().map(|s| s.f_h_norm()).collect();
    trim_norms(&norms, TRIM_THRESHOLD_N)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub kind: IntentionClass,
    /// First and last sample time of the motion.
    pub start: f64,
    pub end: f64,
    /// Mean trimmed norm; 0 when no sample survives trimming.
    pub mean_force: f64,
    /// Trapezoidal integral of the trimmed norm (masked samples count as 0).
    pub cumulative_force: f64,
    pub peak_force: f64,
    pub retained_samples: usize,
}

/// `(mean, cumulative, peak, retained)` of a trimmed series.
pub fn trimmed_stats(times: &[f64], trimmed: &[Option<f64>]) -> (f64, f64, f64, usize) {
    let kept: Vec<f64> = trimmed.iter().flatten().copied().collect();
    let mean_force = if kept.is_empty() { 0.0 } else { mean(&kept) };
    let peak = kept.iter().copied().fold(0.0, f64::max);
    let cumulative = times
        .windows(2)
        .zip(trimmed.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0].unwrap_or(0.0) + f[1].unwrap_or(0.0)))
        .sum();
    (mean_force, cumulative, peak, kept.len())
}

/// Index ranges `(kind, first, last)` of motion with `|v| > v_dead`, with
/// same-kind bursts less than [`MERGE_GAP_S`] apart merged.
pub fn motion_runs(times: &[f64], velocities: &[f64], v_dead: f64) -> Vec<(IntentionClass, usize, usize)> {
    let mut runs: Vec<(IntentionClass, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < velocities.len() {
        let v = velocities[i];
        if v.abs() <= v_dead {
            i += 1;
            continue;
        }
        let kind = if v < 0.0 { IntentionClass::Push } else { IntentionClass::Pull };
        let first = i;
        while i + 1 < velocities.len() && velocities[i + 1].abs() > v_dead && (velocities[i + 1] < 0.0) == (v < 0.0) {
            i += 1;
        }
        match runs.last_mut() {
            Some(last) if last.0 == kind && times[first] - times[last.2] < MERGE_GAP_S => last.2 = i,
            _ => runs.push((kind, first, i)),
        }
        i += 1;
    }
    runs
}

/// Sample index windows around each run, extended by
/// [`WINDOW_EXTENSION_S`] but never past the midpoint to a neighbour.
fn stat_windows(times: &[f64], runs: &[(IntentionClass, usize, usize)]) -> Vec<(usize, usize)> {
    runs.iter()
        .enumerate()
        .map(|(k, &(_, first, last))| {
            // logged times carry rounding jitter; without the slack an
            // edge sample can fall on either side of the window
            let mut lo_t = times[first] - WINDOW_EXTENSION_S - TIME_SLACK_S;
            let mut hi_t = times[last] + WINDOW_EXTENSION_S + TIME_SLACK_S;
            if k > 0 {
                lo_t = lo_t.max(0.5 * (times[runs[k - 1].2] + times[first]));
            }
            if k + 1 < runs.len() {
                hi_t = hi_t.min(0.5 * (times[last] + times[runs[k + 1].1]));
            }
            let lo = times.partition_point(|&t| t < lo_t).min(first);
            let hi = times.partition_point(|&t| t <= hi_t).max(last + 1);
            (lo, hi)
        })
        .collect()
}

pub fn segment_actions(log: &TrialLog, v_dead: f64) -> Vec<ActionRecord> {
    let times: Vec<f64> = log.samples.iter().map(|s| s.t).collect();
    let velocities: Vec<f64> = log.samples.iter().map(|s| s.box_v).collect();
    let trimmed = trim_forces(log);
    let runs = motion_runs(&times, &velocities, v_dead);
    stat_windows(&times, &runs)
        .into_iter()
        .zip(&runs)
        .map(|((lo, hi), &(kind, first, last))| {
            let (mean_force, cumulative_force, peak_force, retained_samples) =
                trimmed_stats(&times[lo..hi], &trimmed[lo..hi]);
            ActionRecord {
                kind,
                start: times[first],
                end: times[last],
                mean_force,
                cumulative_force,
                peak_force,
                retained_samples,
            }
        })
        .collect()
}

/// Aggregates over action records (sample standard deviations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortStats {
    pub n: usize,
    pub mean_force: f64,
    pub mean_force_std: f64,
    pub cumulative_force: f64,
    pub cumulative_force_std: f64,
}

pub fn effort_stats(records: &[ActionRecord]) -> Result<EffortStats> {
    if records.is_empty() {
        return Err(Error::Stats("no action records".into()));
    }
    let means: Vec<f64> = records.iter().map(|r| r.mean_force).collect();
    let cumulative: Vec<f64> = records.iter().map(|r| r.cumulative_force).collect();
    Ok(EffortStats {
        n: records.len(),
        mean_force: mean(&means),
        mean_force_std: std_dev(&means),
        cumulative_force: mean(&cumulative),
        cumulative_force_std: std_dev(&cumulative),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimes {
    /// Seconds by which the filtered intention preceded the force onset.
    pub leads: Vec<f64>,
    /// Actions whose kind was never predicted near the force onset.
    pub skipped: usize,
}

impl LeadTimes {
    pub fn mean(&self) -> Option<f64> {
        (!self.leads.is_empty()).then(|| mean(&self.leads))
    }

    pub fn std(&self) -> f64 {
        std_dev(&self.leads)
    }
}

/// Per action: force onset is the first sample from the end of the previous
/// action onwards where the human force norm reaches `force_threshold` while
/// pointing in the direction of motion. The intention time is the onset of
/// the first matching filtered intention in the `LEAD_SEARCH_S` before the
/// force onset, or failing that the first match up to the end of the action.
pub fn lead_time(log: &TrialLog, force_threshold: f64, v_dead: f64) -> LeadTimes {
    let s = &log.samples;
    let times: Vec<f64> = s.iter().map(|x| x.t).collect();
    let velocities: Vec<f64> = s.iter().map(|x| x.box_v).collect();
    let runs = motion_runs(&times, &velocities, v_dead);
    let mut out = LeadTimes {
        leads: Vec::new(),
        skipped: 0,
    };
    let mut search_from = 0usize;
    for &(kind, first, last) in &runs {
        let sign = kind.motion_sign();
        let from = search_from.max(times.partition_point(|&t| t < times[first] - LEAD_SEARCH_S));
        let onset = (from..=last).find(|&i| s[i].f_h_norm() >= force_threshold && s[i].f_h[0] * sign > 0.0);
        search_from = last + 1;
        let Some(onset) = onset else {
            out.skipped += 1;
            continue;
        };
        let window_start = times.partition_point(|&t| t < times[onset] - LEAD_SEARCH_S);
        let Some(mut hit) = (window_start..=last).find(|&i| s[i].intent_filtered == kind) else {
            out.skipped += 1;
            continue;
        };
        // a run already under way at the window start began earlier
        while hit > 0 && s[hit - 1].intent_filtered == kind && times[onset] - times[hit - 1] <= LEAD_SEARCH_S {
            hit -= 1;
        }
        out.leads.push(times[onset] - times[hit]);
    }
    out
}
