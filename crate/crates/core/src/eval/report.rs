//! Aggregation of trial logs into a metrics report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use super::classification::{classification_metrics, ClassificationMetrics};
use super::effort::{effort_stats, lead_time, segment_actions, ActionRecord, EffortStats, TRIM_THRESHOLD_N};
use super::log::{Condition, TrialLog};
use super::stats::{welch_t_test, WelchResult};
use crate::error::{Error, Result};
use crate::skeleton::IntentionClass;

/// Control ticks between a prediction and the label it targets (0.25 s at 100 Hz).
pub const PREDICTION_OFFSET_TICKS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadSummary {
    pub leads: Vec<f64>,
    pub mean: Option<f64>,
    pub std: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub scenario_id: String,
    pub condition: Condition,
    pub logs: usize,
    pub actions: Vec<ActionRecord>,
    pub effort: Option<EffortStats>,
    /// Only computed for assisted logs.
    pub lead_time: Option<LeadSummary>,
}

/// Dry versus assisted on one scenario; `a` is dry, `b` assisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario_id: String,
    pub mean_force: Option<WelchResult>,
    pub cumulative_force: Option<WelchResult>,
    /// `1 - assisted / dry` of the mean-of-means trimmed force.
    pub mean_force_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trim_threshold: f64,
    pub conditions: Vec<ConditionSummary>,
    pub comparisons: Vec<Comparison>,
    /// Raw predictions of assisted logs against the label a quarter second later.
    pub classification: Option<ClassificationMetrics>,
    pub warnings: Vec<String>,
}

fn welch_or_warn(a: &[f64], b: &[f64], what: &str, warnings: &mut Vec<String>) -> Option<WelchResult> {
    match welch_t_test(a, b) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("{what}: {e}"));
            None
        }
    }
}

pub fn build_report(logs: &[TrialLog], v_dead: f64) -> Result<MetricsReport> {
    if logs.is_empty() {
        return Err(Error::Validation("no trial logs".into()));
    }
    let mut groups: BTreeMap<(String, Condition), Vec<&TrialLog>> = BTreeMap::new();
    for log in logs {
        if log.samples.is_empty() {
            return Err(Error::Validation(format!("empty trial log for scenario {}", log.meta.scenario_id)));
        }
        groups
            .entry((log.meta.scenario_id.clone(), log.condition()))
            .or_default()
            .push(log);
    }

    let mut warnings = Vec::new();
    let mut conditions = Vec::new();
    let (mut preds, mut labels) = (Vec::new(), Vec::new());
    for ((scenario_id, condition), group) in &groups {
        let actions: Vec<ActionRecord> = group.iter().flat_map(|l| segment_actions(l, v_dead)).collect();
        if actions.is_empty() {
            warnings.push(format!("{scenario_id}/{}: no actions found", condition.name()));
        }
        let lead = (*condition == Condition::Assisted).then(|| {
            let mut all = Vec::new();
            let mut skipped = 0;
            for log in group {
                let l = lead_time(log, TRIM_THRESHOLD_N, v_dead);
                all.extend(l.leads);
                skipped += l.skipped;
            }
            let summary = super::effort::LeadTimes { leads: all, skipped };
            LeadSummary {
                mean: summary.mean(),
                std: summary.std(),
                leads: summary.leads,
                skipped,
            }
        });
        if *condition == Condition::Assisted {
            for log in group {
                let s = &log.samples;
                for i in 0..s.len().saturating_sub(PREDICTION_OFFSET_TICKS) {
                    preds.push(s[i].intent_raw);
                    labels.push(s[i + PREDICTION_OFFSET_TICKS].label);
                }
            }
        }
        conditions.push(ConditionSummary {
            scenario_id: scenario_id.clone(),
            condition: *condition,
            logs: group.len(),
            effort: effort_stats(&actions).ok(),
            actions,
            lead_time: lead,
        });
    }

    let has = |c: Condition| groups.keys().any(|(_, k)| *k == c);
    let mut comparisons = Vec::new();
    if has(Condition::Dry) && has(Condition::Assisted) {
        let scenarios: Vec<&String> = groups.keys().map(|(s, _)| s).collect();
        for id in scenarios.iter().copied().collect::<std::collections::BTreeSet<_>>() {
            let find = |c: Condition| conditions.iter().find(|s| &s.scenario_id == id && s.condition == c);
            let (Some(dry), Some(assisted)) = (find(Condition::Dry), find(Condition::Assisted)) else {
                return Err(Error::Pairing(format!("scenario {id} lacks a dry/assisted counterpart")));
            };
            let means = |s: &ConditionSummary| s.actions.iter().map(|a| a.mean_force).collect::<Vec<_>>();
            let cums = |s: &ConditionSummary| s.actions.iter().map(|a| a.cumulative_force).collect::<Vec<_>>();
            let mean_force = welch_or_warn(&means(dry), &means(assisted), &format!("{id} mean force"), &mut warnings);
            let cumulative_force =
                welch_or_warn(&cums(dry), &cums(assisted), &format!("{id} cumulative force"), &mut warnings);
            let mean_force_reduction = match (&dry.effort, &assisted.effort) {
                (Some(d), Some(a)) if d.mean_force > 0.0 => Some(1.0 - a.mean_force / d.mean_force),
                _ => None,
            };
            comparisons.push(Comparison {
                scenario_id: id.clone(),
                mean_force,
                cumulative_force,
                mean_force_reduction,
            });
        }
    } else {
        warnings.push("only one condition present; no significance test".into());
    }

    let classification = if preds.is_empty() { None } else { Some(classification_metrics(&preds, &labels)?) };
    for w in &warnings {
        warn!("{w}");
    }
    Ok(MetricsReport {
        trim_threshold: TRIM_THRESHOLD_N,
        conditions,
        comparisons,
        classification,
        warnings,
    })
}

pub const ACTION_CSV_HEADER: &str = "condition,kind,mean_N,cumulative_Ns";

/// One row per action across all conditions.
pub fn action_table_csv(report: &MetricsReport) -> String {
    let mut out = String::from(ACTION_CSV_HEADER);
    out.push('\n');
    for c in &report.conditions {
        for a in &c.actions {
            let kind = match a.kind {
                IntentionClass::Push => "push",
                IntentionClass::Pull => "pull",
                IntentionClass::Idle => "idle",
            };
            let _ = writeln!(out, "{},{},{},{}", c.condition.name(), kind, a.mean_force, a.cumulative_force);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::log::{TrialMeta, TrialSample};

    fn log(scenario: &str, condition: Condition, force: f64) -> TrialLog {
        let mut samples = Vec::new();
        for i in 0..600 {
            let t = i as f64 * 0.01;
            // two pulls with a slightly different effort each
            let moving = (50..150).contains(&i) || (300..400).contains(&i);
            let f = if moving { force + if i < 200 { 0.0 } else { 5.0 } } else { 0.0 };
            samples.push(TrialSample {
                t,
                box_x: 0.0,
                box_v: if moving { 0.1 } else { 0.0 },
                f_h: [f, 0.0, 0.0],
                f_r: [0.0; 3],
                f_d_x: 0.0,
                u_x: 0.0,
                intent_raw: IntentionClass::Idle,
                intent_filtered: IntentionClass::Idle,
                label: IntentionClass::Idle,
            });
        }
        TrialLog {
            meta: TrialMeta {
                condition,
                scenario_id: scenario.into(),
                seed: 0,
                f_com: None,
            },
            samples,
        }
    }

    #[test]
    fn paired_report_has_t_test() {
        let logs = vec![log("a", Condition::Dry, 60.0), log("a", Condition::Assisted, 30.0)];
        let r = build_report(&logs, 0.005).unwrap();
        assert_eq!(r.comparisons.len(), 1);
        let w = r.comparisons[0].mean_force.unwrap();
        assert!(w.t > 0.0 && (0.0..=1.0).contains(&w.p));
        assert!(r.classification.is_some());
        let csv = action_table_csv(&r);
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn single_condition_warns() {
        let r = build_report(&[log("a", Condition::Dry, 60.0)], 0.005).unwrap();
        assert!(r.comparisons.is_empty());
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn mismatched_scenarios_fail() {
        let logs = vec![log("a", Condition::Dry, 60.0), log("b", Condition::Assisted, 30.0)];
        assert!(matches!(build_report(&logs, 0.005), Err(Error::Pairing(_))));
    }

    #[test]
    fn empty_log_fails() {
        let mut l = log("a", Condition::Dry, 60.0);
        l.samples.clear();
        assert!(build_report(&[l], 0.005).is_err());
        assert!(build_report(&[], 0.005).is_err());
    }
}
