use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use enaam::config::{FileConfig, TraceSource};
use enaam::{
    cmd_forecast_train, cmd_gen_traces, cmd_simulate, cmd_sweep_alpha, ExperimentSpec,
    GenTracesParams,
};

#[derive(Parser)]
#[command(
    version,
    about = "Energy-aware control of a harvesting base station with edge servers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config value, e.g. `--set site.epsilon=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `experiment.output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut fc = FileConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(s) = self.seed {
            fc.experiment.seeds = Some(vec![s]);
            fc.experiment.seed = None;
        }
        if let Some(o) = &self.out {
            fc.experiment.output_dir = o.clone();
        }
        Ok(ExperimentSpec::from_file_config(fc)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured (policy, alpha, seed) and write results.
    Simulate(Common),
    /// Sweep the cost weight for the lookahead controller.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        /// Comma-separated weights in [0, 1].
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
        alphas: Vec<f64>,
    },
    /// Write synthetic load and harvest traces.
    GenTraces {
        #[arg(long, default_value_t = 30)]
        days: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "traces")]
        out: PathBuf,
    },
    /// Train a forecaster on one CSV series.
    ForecastTrain {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, default_value = "value")]
        column: String,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(common) => {
            let spec = common.spec()?;
            let summary = cmd_simulate(&spec)?;
            println!("policy,alpha,seeds,mean_savings,mean_utilization");
            for row in &summary.aggregate {
                println!(
                    "{},{},{},{:.4},{:.4}",
                    row.policy, row.alpha, row.seeds, row.mean_savings, row.mean_utilization
                );
            }
            eprintln!("wrote {}", spec.output_dir.display());
        }
        Command::SweepAlpha { common, alphas } => {
            let spec = common.spec()?;
            let summary = cmd_sweep_alpha(&spec, &alphas)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("alpha,mean_savings,mean_utilization");
            for row in &summary.rows {
                println!(
                    "{},{:.4},{:.4}",
                    row.alpha, row.mean_savings, row.mean_utilization
                );
            }
            println!("kendall_tau,{:.3}", summary.kendall_tau);
        }
        Command::GenTraces {
            days,
            seed,
            config,
            overrides,
            out,
        } => {
            let mut fc = FileConfig::load(config.as_deref(), &overrides)?;
            fc.traces.days = days.max(1);
            let spec = ExperimentSpec::from_file_config(fc)?;
            let (l_max_mb, noise_sd_mb) = match spec.traces {
                TraceSource::Synthetic {
                    l_max_mb,
                    noise_sd_mb,
                    ..
                } => (l_max_mb, noise_sd_mb),
                TraceSource::Csv { .. } => (spec.site.l_max, 0.75),
            };
            let (load, harvest) = cmd_gen_traces(&GenTracesParams {
                days,
                seed,
                l_max_mb,
                noise_sd_mb,
                beta_max: spec.site.beta_max,
                output_dir: out,
            })?;
            eprintln!("wrote {} and {}", load.display(), harvest.display());
        }
        Command::ForecastTrain {
            series,
            column,
            epochs,
            seed,
            out,
        } => {
            let report = cmd_forecast_train(&series, &column, epochs, seed, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
