//! Training runs, the token sweep and the ablation grid, with on-disk reuse.

use std::path::{Path, PathBuf};
use std::time::Instant;

use oranguide_core::sac::{SacError, Trainer, TrainerOptions};

use crate::analysis::{ablation_rows, sweep_table, AblationRow, SweepRow};
use crate::config::ExperimentConfig;
use crate::error::BenchError;
use crate::record::{load_records, run_dir, write_atomic, EvalSummary, RunRecord, UeRate, CHECKPOINT_FILE, METRICS_FILE, RECORD_FILE};
use crate::report;
use crate::variant::VariantId;

const EVAL_SEED_SALT: u64 = 0x5EED_E7A1;

/// Evaluation environment seed for a run seed.
pub fn eval_seed(seed: u64) -> u64 {
    seed ^ EVAL_SEED_SALT
}

/// Output tree: `runs/`, `sweep/<config hash>/` and `report/`.
#[derive(Clone, Debug)]
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn sweeps(&self) -> PathBuf {
        self.root.join("sweep")
    }

    pub fn sweep(&self, config_hash: &str) -> PathBuf {
        self.sweeps().join(&config_hash[..config_hash.len().min(12)])
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Trains one (variant, seed) under `cfg` and persists the record, metrics
/// and final checkpoint below `root`. A record already on disk for the same
/// key is returned as is.
pub fn run_experiment(cfg: &ExperimentConfig, variant: VariantId, seed: u64, root: &Path) -> Result<RunRecord, BenchError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let dir = run_dir(root, variant, seed, &hash);
    let record_path = dir.join(RECORD_FILE);
    if record_path.is_file() {
        let existing = RunRecord::load(&record_path)?;
        if existing.variant == variant && existing.seed == seed && existing.config_hash == hash {
            return Ok(existing);
        }
        return Err(BenchError::Analysis(format!(
            "{} holds a record for a different run",
            record_path.display()
        )));
    }

    let start = Instant::now();
    let options = TrainerOptions {
        checkpoint_dir: (cfg.sac.checkpoint_every > 0).then(|| dir.clone()),
        ..TrainerOptions::default()
    };
    let mut trainer = Trainer::new(cfg.train_config(variant, seed), options)?;
    let outcome = trainer.train()?;
    let eval_seed = eval_seed(seed);
    let eval = trainer.evaluate(cfg.experiment.eval_epochs, eval_seed)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    write_atomic(&dir.join(METRICS_FILE), trainer.metrics_csv().as_bytes())?;
    trainer
        .checkpoint()?
        .save(dir.join(CHECKPOINT_FILE))
        .map_err(SacError::from)?;

    let rewards: Vec<f64> = trainer.metrics().iter().map(|m| m.team_reward).collect();
    let record = RunRecord {
        variant,
        seed,
        config_hash: hash,
        n_learnable: cfg.srm.n_learnable,
        iterations: outcome.iterations,
        converged_at: outcome.converged_at,
        accumulated_reward: rewards.iter().sum(),
        rewards,
        final_qos: trainer.metrics().last().map(|m| m.qos).unwrap_or_default(),
        eval: EvalSummary {
            epochs: cfg.experiment.eval_epochs,
            seed: eval_seed,
            mean_reward: eval.mean_reward(),
            satisfaction: eval.satisfaction,
            mean_qos: eval.mean_qos,
        },
        ue_rates: eval
            .ue_rates
            .iter()
            .map(|(slice, rate_bps)| UeRate {
                slice: *slice,
                rate_bps: *rate_bps,
            })
            .collect(),
        wall_time_s,
    };
    record.save(&record_path)?;
    Ok(record)
}

/// Drives grids of runs and reports progress on stderr when `verbose`.
#[derive(Clone, Debug)]
pub struct Runner {
    pub out: OutputDir,
    pub verbose: bool,
}

impl Runner {
    pub fn new(out: OutputDir) -> Self {
        Self { out, verbose: false }
    }

    pub fn run(&self, cfg: &ExperimentConfig, variant: VariantId, seed: u64) -> Result<RunRecord, BenchError> {
        self.run_in(cfg, variant, seed, &self.out.runs())
    }

    fn run_in(&self, cfg: &ExperimentConfig, variant: VariantId, seed: u64, root: &Path) -> Result<RunRecord, BenchError> {
        if self.verbose {
            eprintln!("[{} seed {}] n_learnable={} starting", variant, seed, cfg.srm.n_learnable);
        }
        let record = run_experiment(cfg, variant, seed, root)?;
        if self.verbose {
            eprintln!(
                "[{} seed {}] {} iterations, accumulated reward {:.4}, eval reward {:.4}, {:.1}s",
                variant, seed, record.iterations, record.accumulated_reward, record.eval.mean_reward, record.wall_time_s
            );
        }
        Ok(record)
    }

    /// ORAN_GUIDE once per (count, seed); rows aggregate over seeds.
    pub fn token_sweep(&self, cfg: &ExperimentConfig, counts: &[usize]) -> Result<Vec<SweepRow>, BenchError> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(BenchError::Config("token counts must be a nonempty list of positive integers".into()));
        }
        cfg.validate()?;
        let root = self.out.sweep(&cfg.hash());
        let mut records = Vec::new();
        for &count in counts {
            let mut c = cfg.clone();
            c.srm.n_learnable = count;
            for &seed in &cfg.experiment.seeds {
                records.push(self.run_in(&c, VariantId::OranGuide, seed, &root)?);
            }
        }
        Ok(sweep_table(&records, cfg.experiment.moving_average))
    }

    /// Every variant on every configured seed, then the table and its metadata.
    pub fn ablation(&self, cfg: &ExperimentConfig) -> Result<Vec<AblationRow>, BenchError> {
        cfg.validate()?;
        let mut records = Vec::new();
        for variant in VariantId::ALL {
            for &seed in &cfg.experiment.seeds {
                records.push(self.run(cfg, variant, seed)?);
            }
        }
        let rows = ablation_rows(&records, Some(cfg.experiment.rpi_horizon))?;
        report::write_ablation(&self.out.report(), &rows, cfg.experiment.rpi_horizon)?;
        Ok(rows)
    }

    pub fn records(&self) -> Result<Vec<RunRecord>, BenchError> {
        load_records(&self.out.runs())
    }
}
