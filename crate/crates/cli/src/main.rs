use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "pushpull", version, about = "Intention-aware push/pull assistance on a simulated object")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled synthetic skeleton dataset.
    Synth {
        /// Synthesis settings (JSON); omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for recordings and manifest.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train_recordings: Option<usize>,
        #[arg(long)]
        val_recordings: Option<usize>,
        #[arg(long)]
        actions: Option<usize>,
    },
    /// Train the intention network on a dataset manifest.
    Train {
        /// Dataset manifest written by `synth`.
        #[arg(long, required_unless_present = "grad_check")]
        manifest: Option<PathBuf>,
        /// Training settings (JSON); omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint path.
        #[arg(long, required_unless_present = "grad_check")]
        out: Option<PathBuf>,
        /// Only verify gradients by finite differences and exit.
        #[arg(long)]
        grad_check: bool,
    },
    /// Finite-difference gradient check on a micro model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
    },
    /// Find the friction-compensation force of a scenario's object.
    Explore {
        #[arg(long)]
        scenario: PathBuf,
        /// Where to write the updated scenario; defaults to updating in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one closed-loop trial and write its CSV log.
    Trial {
        #[arg(long)]
        scenario: PathBuf,
        /// Required for assisted trials.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides the scenario's condition.
        #[arg(long, value_parser = ["dry", "assisted"])]
        condition: Option<String>,
        /// Controller settings (JSON, every field required).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Effort, lead time, classification and significance over trial logs.
    Metrics {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Report JSON; the per-action CSV is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            config,
            seed,
            out,
            train_recordings,
            val_recordings,
            actions,
        } => commands::synth(config, seed, &out, train_recordings, val_recordings, actions),
        Command::Train {
            manifest,
            config,
            seed,
            epochs,
            out,
            grad_check,
        } => {
            if grad_check {
                commands::gradcheck(seed.unwrap_or(0), 1e-6, 3)
            } else {
                // clap enforces both when the flag is absent
                let (Some(manifest), Some(out)) = (manifest, out) else {
                    return Err(CliError::Usage("--manifest and --out are required".into()));
                };
                commands::train(&manifest, config, seed, epochs, &out)
            }
        }
        Command::Gradcheck { seed, epsilon } => commands::gradcheck(seed, epsilon, 1),
        Command::Explore { scenario, out } => commands::explore(&scenario, out.as_deref()),
        Command::Trial {
            scenario,
            checkpoint,
            condition,
            config,
            seed,
            out,
        } => commands::trial(&scenario, checkpoint.as_deref(), condition.as_deref(), config.as_deref(), seed, &out),
        Command::Metrics { logs, out } => commands::metrics(&logs, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
