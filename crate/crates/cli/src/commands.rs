use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use pushpull::controller::AssistConfig;
use pushpull::dgnn::{grad_check, load_checkpoint, save_checkpoint, train as train_model, TrainConfig};
use pushpull::eval::{action_table_csv, build_report, Condition, TrialLog};
use pushpull::synth::{build_dataset, DatasetSpec, SynthConfig, V_DEAD};
use pushpull::trial::{explore_scenario, run_trial, Predictor, ScenarioSpec};
use serde::de::DeserializeOwned;

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] pushpull::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Input files that do not exist are usage errors rather than domain errors.
fn existing(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    existing(path, what)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{what} {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        CliError::Domain(pushpull::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

pub fn synth(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: &Path,
    n_train: Option<usize>,
    n_val: Option<usize>,
    actions: Option<usize>,
) -> Result<()> {
    let mut cfg: SynthConfig = match config {
        Some(p) => read_json(&p, "synth config")?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let defaults = DatasetSpec::default();
    let spec = DatasetSpec {
        n_train: n_train.unwrap_or(defaults.n_train),
        n_val: n_val.unwrap_or(defaults.n_val),
        actions_per_recording: actions.unwrap_or(defaults.actions_per_recording),
    };
    let manifest = build_dataset(&cfg, spec, out)?;
    let mix = &manifest.realized_mix;
    println!(
        "wrote {} recordings to {}",
        manifest.train.recordings.len() + manifest.val.recordings.len(),
        out.display()
    );
    println!("label mix: idle {:.3} pull {:.3} push {:.3}", mix.idle, mix.pull, mix.push);
    println!("manifest {} hash {}", out.join("manifest.json").display(), manifest.hash());
    Ok(())
}

pub fn train(manifest: &Path, config: Option<PathBuf>, seed: Option<u64>, epochs: Option<usize>, out: &Path) -> Result<()> {
    existing(manifest, "manifest")?;
    let mut cfg: TrainConfig = match config {
        Some(p) => read_json(&p, "train config")?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let checkpoint = train_model(manifest, &cfg, &mut |m| {
        println!(
            "epoch {:>3}  loss {:.4}  val acc {:.4}  balanced {:.4}",
            m.epoch, m.train_loss, m.val_accuracy, m.val_balanced_accuracy
        );
    })?;
    save_checkpoint(&checkpoint, out)?;
    let best = &checkpoint.history[checkpoint.best_epoch];
    println!(
        "best epoch {} (balanced accuracy {:.4}); checkpoint {}",
        checkpoint.best_epoch,
        best.val_balanced_accuracy,
        out.display()
    );
    Ok(())
}

pub fn gradcheck(seed: u64, epsilon: f64, seeds: u64) -> Result<()> {
    let mut worst: f64 = 0.0;
    for s in seed..seed + seeds {
        let err = grad_check(s, epsilon)?;
        println!("seed {s}: max relative error {err:.3e}");
        worst = worst.max(err);
    }
    if worst < GRAD_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Domain(pushpull::Error::Numerical { layer: usize::MAX }))
    }
}

pub fn explore(scenario: &Path, out: Option<&Path>) -> Result<()> {
    existing(scenario, "scenario")?;
    let mut spec = ScenarioSpec::load(scenario)?;
    let f_com = explore_scenario(&spec)?;
    println!("{}: f_com = {f_com} N", spec.id);
    spec.f_com = Some(f_com);
    spec.save(out.unwrap_or(scenario))?;
    Ok(())
}

pub fn trial(
    scenario: &Path,
    checkpoint: Option<&Path>,
    condition: Option<&str>,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    existing(scenario, "scenario")?;
    let mut spec = ScenarioSpec::load(scenario)?;
    if let Some(c) = condition {
        spec.condition = c.parse::<Condition>()?;
    }
    let (assist, predictor) = match spec.condition {
        Condition::Dry => {
            if checkpoint.is_some() {
                info!("dry trial: checkpoint ignored");
            }
            (None, None)
        }
        Condition::Assisted => {
            let Some(path) = checkpoint else {
                return Err(CliError::Usage("assisted trials need --checkpoint".into()));
            };
            existing(path, "checkpoint")?;
            let predictor = Predictor::from_checkpoint(&load_checkpoint(path)?)?;
            let assist = match config {
                Some(p) => {
                    existing(p, "controller config")?;
                    AssistConfig::load(p)?
                }
                None => {
                    let f_com = match spec.f_com {
                        Some(f) => f,
                        None => {
                            warn!("scenario has no f_com; exploring the object first");
                            explore_scenario(&spec)?
                        }
                    };
                    AssistConfig::recommended(f_com)
                }
            };
            (Some(assist), Some(predictor))
        }
    };
    let log = run_trial(&spec, assist.as_ref(), predictor.as_ref(), seed)?;
    log.save(out)?;
    println!("{} samples ({}) written to {}", log.samples.len(), spec.condition.name(), out.display());
    Ok(())
}

pub fn metrics(logs: &[PathBuf], out: &Path) -> Result<()> {
    let mut loaded = Vec::new();
    for p in logs {
        existing(p, "trial log")?;
        loaded.push(TrialLog::load(p)?);
    }
    let report = build_report(&loaded, V_DEAD)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Domain(pushpull::Error::Json {
        context: "report".into(),
        source: e,
    }))?;
    write_file(out, &(json + "\n"))?;
    let csv_path = out.with_extension("actions.csv");
    write_file(&csv_path, &action_table_csv(&report))?;
    for c in &report.comparisons {
        if let Some(w) = c.mean_force {
            println!("{}: mean force t = {:.3}, dof = {:.1}, p = {:.3e}", c.scenario_id, w.t, w.dof, w.p);
        }
    }
    println!("report {} actions {}", out.display(), csv_path.display());
    Ok(())
}
