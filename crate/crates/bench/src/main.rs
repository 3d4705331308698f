use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use oranguide_bench::{report, BenchError, ExperimentConfig, OutputDir, Profile, ReportOptions, Runner, VariantId};

#[derive(Parser, Debug)]
#[command(name = "oranguide", version, about = "Train and compare O-RAN slicing agents; emit figure data as CSV")]
struct Cli {
    /// Root of runs/, sweep/ and report/.
    #[arg(long, global = true, env = "ORANGUIDE_OUT_DIR", default_value = "oranguide-out")]
    out_dir: PathBuf,
    /// Suppress per-run progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML experiment config; keys override the selected profile.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Base profile when no config file is given.
    #[arg(long, value_enum, conflicts_with = "config")]
    profile: Option<Profile>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, BenchError> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => Ok(ExperimentConfig::for_profile(self.profile.unwrap_or_default())),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one variant on one seed.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        variant: VariantId,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train ORAN_GUIDE for each learnable-prompt count on every configured seed.
    SweepTokens {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated counts; defaults to experiment.token_counts.
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
    },
    /// Train every variant on every configured seed and write the ablation table.
    Ablation {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Aggregate stored run records into figure and table CSVs.
    Report {
        /// Select records produced with this config and use its RPI horizon.
        #[arg(long, short)]
        config: Option<PathBuf>,
        /// Select records by config-hash prefix.
        #[arg(long, conflicts_with = "config")]
        config_hash: Option<String>,
    },
    /// Parse and validate a config file, printing its hash.
    ValidateConfig {
        path: PathBuf,
        /// Also print the fully resolved config.
        #[arg(long)]
        print: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            let code = e.downcast_ref::<BenchError>().map_or(2, BenchError::exit_code);
            ExitCode::from(code)
        }
    }
}

fn warn_if_large(cfg: &ExperimentConfig) {
    if cfg.is_paper_scale() {
        eprintln!(
            "warning: paper-scale configuration ({} DUs, {} UEs, {} RBs per DU); each run may take many hours",
            cfg.env.n_du, cfg.env.n_ue, cfg.env.rbs_per_du
        );
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let runner = Runner {
        out: OutputDir::new(&cli.out_dir),
        verbose: !cli.quiet,
    };
    match cli.command {
        Command::Run { config, variant, seed } => {
            let cfg = config.load()?;
            warn_if_large(&cfg);
            let seed = seed.unwrap_or(cfg.experiment.seeds[0]);
            let record = runner
                .run(&cfg, variant, seed)
                .with_context(|| format!("run {} seed {}", variant, seed))?;
            println!(
                "{} seed {}: {} iterations, converged_at {}, accumulated reward {}, eval reward {}, config {}",
                record.variant,
                record.seed,
                record.iterations,
                record.converged_at.map_or("-".to_string(), |c| c.to_string()),
                record.accumulated_reward,
                record.eval.mean_reward,
                &record.config_hash[..12]
            );
        }
        Command::SweepTokens { config, counts } => {
            let cfg = config.load()?;
            warn_if_large(&cfg);
            let counts = if counts.is_empty() {
                cfg.experiment.token_counts.clone()
            } else {
                counts
            };
            let rows = runner.token_sweep(&cfg, &counts).context("token sweep")?;
            print!("{}", report::sweep_csv(&rows));
        }
        Command::Ablation { config } => {
            let cfg = config.load()?;
            warn_if_large(&cfg);
            let rows = runner.ablation(&cfg).context("ablation")?;
            print!("{}", report::ablation_csv(&rows));
        }
        Command::Report { config, config_hash } => {
            let mut options = ReportOptions {
                config_hash,
                ..ReportOptions::default()
            };
            if let Some(path) = config {
                let cfg = ExperimentConfig::load(&path)?;
                options.config_hash = Some(cfg.hash());
                options.rpi_horizon = cfg.experiment.rpi_horizon;
                options.moving_average = cfg.experiment.moving_average;
            }
            let summary = report(&runner.out, &options).context("report")?;
            for note in &summary.notes {
                eprintln!("note: {}", note);
            }
            for file in &summary.files {
                println!("{}", file.display());
            }
        }
        Command::ValidateConfig { path, print } => {
            let cfg = ExperimentConfig::load(&path)?;
            warn_if_large(&cfg);
            println!("ok {} {}", path.display(), cfg.hash());
            if print {
                print!("{}", cfg.to_toml_string()?);
            }
        }
    }
    Ok(())
}
