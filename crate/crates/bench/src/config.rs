//! Experiment configuration: a TOML file layered over a named profile.

use std::path::Path;

use oranguide_core::codec::ConstraintParams;
use oranguide_core::env::EnvConfig;
use oranguide_core::reward::RewardParams;
use oranguide_core::sac::{SacConfig, TrainConfig};
use oranguide_core::srm::SrmConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::BenchError;
use crate::variant::VariantId;

/// Base parameter set a config file is layered over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 2 DUs, 20 UEs, 12 RBs per DU, 64-wide networks.
    #[default]
    Desk,
    /// 6 DUs, 200 UEs, 100 RBs per DU, 600/700/700 networks.
    Paper,
    /// 1 DU, 2 RBs, 2 UEs.
    Toy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub seeds: Vec<u64>,
    /// Deterministic-policy evaluation epochs after training (`N_e`).
    pub eval_epochs: usize,
    /// Training steps covered by RPI.
    pub rpi_horizon: usize,
    /// Learnable-prompt counts for the token sweep.
    pub token_counts: Vec<usize>,
    /// Window of the moving-average reward.
    pub moving_average: usize,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            eval_epochs: 100,
            rpi_horizon: 1000,
            token_counts: vec![2, 4, 8, 16],
            moving_average: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub env: EnvConfig,
    pub reward: RewardParams,
    pub constraints: ConstraintParams,
    pub srm: SrmConfig,
    pub sac: SacConfig,
    pub experiment: ExperimentBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut cfg = Self {
            profile,
            env: EnvConfig::default(),
            reward: RewardParams::default(),
            constraints: ConstraintParams::default(),
            srm: SrmConfig::default(),
            sac: SacConfig::default(),
            experiment: ExperimentBlock::default(),
        };
        match profile {
            Profile::Desk => {}
            Profile::Paper => {
                cfg.env = EnvConfig::paper_scale();
                cfg.sac.actor_hidden = vec![600, 700, 700];
                cfg.sac.critic_hidden = vec![600, 700, 700];
            }
            Profile::Toy => {
                cfg.env = EnvConfig::toy();
                let thr = [4e6, 2e6, 0.035];
                cfg.reward.thr = thr;
                cfg.constraints.q_min = thr;
                cfg.constraints.q_target = thr;
                cfg.constraints.delta_slack = thr.map(|t| t * 0.1);
                cfg.experiment.seeds = vec![0, 1, 2, 3, 4];
            }
        }
        cfg
    }

    /// Parses TOML; the optional top-level `profile` key picks the base that
    /// every other key overrides.
    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        let user: toml::Table = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        let profile = match user.get("profile") {
            Some(v) => v
                .clone()
                .try_into::<Profile>()
                .map_err(|e| BenchError::Config(format!("profile: {}", e)))?,
            None => Profile::Desk,
        };
        let mut merged = match toml::Value::try_from(Self::for_profile(profile)) {
            Ok(toml::Value::Table(t)) => t,
            Ok(_) => return Err(BenchError::Config("profile did not serialize to a table".into())),
            Err(e) => return Err(BenchError::Config(e.to_string())),
        };
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {}", path.display(), e)))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            BenchError::Config(msg) => BenchError::Config(format!("{}: {}", path.display(), msg)),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String, BenchError> {
        toml::to_string(self).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let exp = &self.experiment;
        if exp.seeds.is_empty() {
            return Err(BenchError::Config("experiment.seeds must not be empty".into()));
        }
        if exp.eval_epochs == 0 || exp.rpi_horizon == 0 || exp.moving_average == 0 {
            return Err(BenchError::Config(
                "experiment.eval_epochs, rpi_horizon and moving_average must be positive".into(),
            ));
        }
        if exp.token_counts.iter().any(|c| *c == 0) {
            return Err(BenchError::Config("experiment.token_counts entries must be positive".into()));
        }
        self.train_config(VariantId::OranGuide, 0)
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON encoding, lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes to JSON");
        Sha256::digest(&json).iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn train_config(&self, variant: VariantId, seed: u64) -> TrainConfig {
        TrainConfig {
            env: self.env.clone(),
            reward: self.reward.clone(),
            constraints: self.constraints.clone(),
            srm: self.srm.clone(),
            sac: self.sac.clone(),
            wiring: variant.wiring(),
            seed,
        }
    }

    /// True for configurations large enough to take hours per run.
    pub fn is_paper_scale(&self) -> bool {
        self.env.n_du * self.env.n_ue * self.env.rbs_per_du > 20_000
            || self.sac.actor_hidden.iter().chain(&self.sac.critic_hidden).any(|w| *w > 256)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
