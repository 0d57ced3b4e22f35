use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tod_cli::commands::{
    cmd_control, cmd_loocv, cmd_pca, cmd_predict, cmd_segment, cmd_synth, ControlArgs, Globals,
};
use tod_cli::config::RunConfig;
use tod_core::Result;

/// Traffic flow prediction and predictive time-of-day signal control.
#[derive(Parser)]
#[command(name = "todctl", version)]
struct Cli {
    /// Flow CSV (`date,movement,interval_index,flow_vph`).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the generator seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with its ground truth.
    Synth,
    /// Principal components, explained variance and per-day weights.
    Pca {
        /// Number of components (default `pca_components`).
        #[arg(long)]
        components: Option<usize>,
    },
    /// Predict the rest of a day from its early measurements.
    Predict {
        /// Held-out day of the dataset.
        #[arg(long, conflicts_with = "sample")]
        date: Option<String>,
        /// CSV holding one extra day, predicted with the full dataset.
        #[arg(long)]
        sample: Option<PathBuf>,
        /// PLS components (default `pls_components`).
        #[arg(long)]
        components: Option<usize>,
    },
    /// Optimal time-of-day segmentation of the mean day (or of one date).
    Segment {
        /// Number of periods (default `n_periods`).
        #[arg(long)]
        periods: Option<usize>,
        /// Under-provision penalty C >= 1 (default `fit.overflow_penalty`).
        #[arg(long)]
        penalty: Option<f64>,
        /// Segment this day instead of the mean day.
        #[arg(long)]
        date: Option<String>,
    },
    /// Predictive control and delay report for one held-out date or all days.
    Control {
        /// A date to hold out of training, or `all` for every day in-sample.
        #[arg(long, default_value = "all")]
        date: String,
        /// Nominal plan JSON; derived from the data when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Switch window half-width in intervals (default `controller.window_halfwidth`).
        #[arg(long)]
        halfwidth: Option<usize>,
        /// PLS components (default `pls_components`).
        #[arg(long)]
        components: Option<usize>,
    },
    /// Leave-one-out prediction errors.
    Loocv {
        /// PLS components (default `pls_components`).
        #[arg(long)]
        components: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
    }
    let g = Globals {
        input: cli.input,
        out_dir: cli.out_dir,
        config,
    };
    let artifacts = match &cli.command {
        Command::Synth => cmd_synth(&g)?,
        Command::Pca { components } => cmd_pca(&g, *components)?,
        Command::Predict {
            date,
            sample,
            components,
        } => cmd_predict(&g, date.as_deref(), sample.as_deref(), *components)?,
        Command::Segment {
            periods,
            penalty,
            date,
        } => cmd_segment(&g, *periods, *penalty, date.as_deref())?,
        Command::Control {
            date,
            plan,
            halfwidth,
            components,
        } => cmd_control(
            &g,
            &ControlArgs {
                date,
                plan: plan.as_deref(),
                halfwidth: *halfwidth,
                components: *components,
            },
        )?,
        Command::Loocv { components } => cmd_loocv(&g, *components)?,
    };
    for a in artifacts {
        println!("{}", g.out_dir.join(&a.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
