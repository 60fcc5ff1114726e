use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ptca_sense::app::{self, Context, FitTarget, RunConfig};

#[derive(Parser)]
#[command(
    version,
    about = "Inductance self-sensing for pneumatic coiled actuators"
)]
struct Cli {
    /// JSON run config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent scenarios.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Low-pass cutoff in Hz.
    #[arg(long, global = true)]
    fc: Option<f64>,
    /// Sensor sampling rate in Hz (filter and plant).
    #[arg(long, global = true)]
    fs: Option<f64>,
    /// Low-pass filter order.
    #[arg(long, global = true)]
    order: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Dynamic,
    Inductance,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Identify the force model and/or inductance map from a CSV.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        model: Option<Model>,
    },
    /// Estimate force and length from a t,P,L CSV.
    Estimate {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run open-loop plant scenarios.
    Simulate,
    /// Compare open-loop, sensor and self-sensing feedback.
    Track,
    /// Hold length under random step loads.
    Perturb,
    /// Run everything and write report.json.
    Report,
}

fn run(cli: Cli) -> ptca_sense::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(fc) = cli.fc {
        cfg.filter.cutoff_hz = fc;
    }
    if let Some(fs) = cli.fs {
        cfg.filter.sample_rate_hz = fs;
        cfg.plant.sensor_rate_hz = fs;
    }
    if let Some(n) = cli.order {
        cfg.filter.order = n;
    }
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let ctx = Context::new(cfg, cli.out, jobs)?;

    let summary = match cli.command {
        Command::Fit { data, model } => {
            let model = model.map(|m| match m {
                Model::Dynamic => FitTarget::Dynamic,
                Model::Inductance => FitTarget::Inductance,
                Model::Both => FitTarget::Both,
            });
            let mut fit = app::cmd_fit(&ctx, data.as_deref(), model)?;
            if let Some(r) = &mut fit.inductance {
                r.log.clear();
            }
            serde_json::to_value(fit)?
        }
        Command::Estimate { data } => {
            serde_json::to_value(app::cmd_estimate(&ctx, data.as_deref())?)?
        }
        Command::Simulate => serde_json::to_value(app::cmd_simulate(&ctx)?)?,
        Command::Track => {
            app::cmd_track(&ctx)?;
            let table = std::fs::read_to_string(ctx.out.join("track/table.txt"))?;
            print!("{table}");
            return Ok(());
        }
        Command::Perturb => serde_json::to_value(app::cmd_perturb(&ctx)?)?,
        Command::Report => serde_json::to_value(app::cmd_report(&ctx)?.provenance)?,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
