//! Trial time series and their CSV form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{IntentionClass, Vec3};

pub const TRIAL_CSV_HEADER: &str = "t,box_x,box_v,f_h_x,f_h_norm,f_r_x,f_d_x,u_x,intent_raw,intent_filtered,label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Dry,
    Assisted,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Dry => "dry",
            Condition::Assisted => "assisted",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dry" => Ok(Condition::Dry),
            "assisted" => Ok(Condition::Assisted),
            other => Err(Error::Validation(format!("unknown condition {other:?}"))),
        }
    }
}

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub t: f64,
    pub box_x: f64,
    pub box_v: f64,
    pub f_h: Vec3,
    pub f_r: Vec3,
    pub f_d_x: f64,
    pub u_x: f64,
    pub intent_raw: IntentionClass,
    pub intent_filtered: IntentionClass,
    /// Ground-truth intention at `t` from the scripted human.
    pub label: IntentionClass,
}

impl TrialSample {
    pub fn f_h_norm(&self) -> f64 {
        let [x, y, z] = self.f_h;
        (x * x + y * y + z * z).sqrt()
    }
}

/// Description stored next to each trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub condition: Condition,
    pub scenario_id: String,
    pub seed: u64,
    pub f_com: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub meta: TrialMeta,
    pub samples: Vec<TrialSample>,
}

impl TrialLog {
    pub fn new(meta: TrialMeta) -> Self {
        TrialLog {
            meta,
            samples: Vec::new(),
        }
    }

    pub fn condition(&self) -> Condition {
        self.meta.condition
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(80 * (self.samples.len() + 1));
        out.push_str(TRIAL_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.t,
                s.box_x,
                s.box_v,
                s.f_h[0],
                s.f_h_norm(),
                s.f_r[0],
                s.f_d_x,
                s.u_x,
                s.intent_raw.code(),
                s.intent_filtered.code(),
                s.label.code()
            );
        }
        out
    }

    /// Parses CSV rows; only x components of the forces are recorded, so
    /// y and z come back as zero.
    pub fn from_csv(text: &str, meta: TrialMeta) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRIAL_CSV_HEADER => {}
            Some(h) => return Err(Error::Validation(format!("unexpected trial header {h:?}"))),
            None => return Err(Error::Validation("empty trial log".into())),
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(Error::Validation(format!("row {}: expected 11 fields", i + 2)));
            }
            let num = |k: usize| -> Result<f64> {
                fields[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Validation(format!("row {} field {}: {e}", i + 2, k + 1)))
            };
            let class = |k: usize| -> Result<IntentionClass> {
                fields[k]
                    .trim()
                    .parse::<i64>()
                    .ok()
                    .and_then(IntentionClass::from_code)
                    .ok_or_else(|| Error::Validation(format!("row {} field {}: bad intention", i + 2, k + 1)))
            };
            samples.push(TrialSample {
                t: num(0)?,
                box_x: num(1)?,
                box_v: num(2)?,
                f_h: [num(3)?, 0.0, 0.0],
                f_r: [num(5)?, 0.0, 0.0],
                f_d_x: num(6)?,
                u_x: num(7)?,
                intent_raw: class(8)?,
                intent_filtered: class(9)?,
                label: class(10)?,
            });
        }
        Ok(TrialLog { meta, samples })
    }

    pub fn meta_path(csv_path: &Path) -> PathBuf {
        let mut name = csv_path.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    /// Writes the CSV and its `.meta.json` sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        let meta_path = Self::meta_path(csv_path);
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::json("trial meta", e))?;
        fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let meta_path = Self::meta_path(csv_path);
        let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: TrialMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::json(meta_path.display().to_string(), e))?;
        let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        Self::from_csv(&text, meta)
    }
}
