//! Run configuration: a TOML file with `[env]`, `[env.params]`, `[train]`,
//! `[eval]` and `[run]` tables. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use msacl_core::env::reference::TrackingRef;
use msacl_core::env::{Env, EnvId};
use msacl_core::eval::{EvalOptions, Norm, DEFAULT_EPISODES, DEFAULT_INIT_SEED};
use msacl_core::learner::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub id: EnvId,
    /// Tracking reference; defaults to the training path of the task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl EnvSection {
    pub fn build(&self) -> Result<Env> {
        let mut env = Env::new(self.id).with_params(&self.params)?.with_noise(self.noise_sigma)?;
        if let Some(r) = &self.reference {
            env = env.with_reference(r.parse::<TrackingRef>()?)?;
        }
        Ok(env)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Environment steps between periodic evaluations.
    pub interval: u64,
    pub episodes: usize,
    pub init_seed: u64,
    pub deterministic: bool,
    pub norm: Norm,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            interval: 10_000,
            episodes: DEFAULT_EPISODES,
            init_seed: DEFAULT_INIT_SEED,
            deterministic: true,
            norm: Norm::L2,
        }
    }
}

impl EvalSection {
    pub fn options(&self, train: &TrainConfig) -> EvalOptions {
        EvalOptions {
            episodes: self.episodes,
            init_seed: self.init_seed,
            deterministic: self.deterministic,
            norm: self.norm,
            alpha: (train.alpha1, train.alpha2, train.alpha3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    /// Output root; `MSACL_RUNS` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub run: RunSection,
}

pub const RUNS_ENV_VAR: &str = "MSACL_RUNS";

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|source| LabError::Toml {
            path: origin.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.run.seeds.is_empty() {
            return Err(LabError::Config("run.seeds must not be empty".into()));
        }
        if self.eval.interval == 0 || self.eval.episodes == 0 {
            return Err(LabError::Config("eval.interval and eval.episodes must be positive".into()));
        }
        let warm_steps = (self.train.warm_sequences + self.train.horizon).saturating_sub(1) as u64;
        if self.train.total_env_steps <= warm_steps {
            return Err(LabError::Config(format!(
                "train.total_env_steps = {} never gets past warm-up ({} steps)",
                self.train.total_env_steps, warm_steps
            )));
        }
        self.env.build()?;
        Ok(())
    }

    /// The configuration of the single run for `seed`.
    pub fn for_seed(&self, seed: u64) -> RunConfig {
        let mut c = self.clone();
        c.train.seed = seed;
        c.run.seeds = vec![seed];
        c.run.output = None;
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// First eight hex digits of the SHA-256 of the resolved TOML.
    pub fn hash8(&self) -> Result<String> {
        let digest = Sha256::digest(self.for_seed(self.train.seed).to_toml()?.as_bytes());
        Ok(digest.iter().take(4).map(|b| format!("{b:02x}")).collect())
    }

    pub fn output_root(&self) -> PathBuf {
        std::env::var_os(RUNS_ENV_VAR)
            .map(PathBuf::from)
            .or_else(|| self.run.output.clone())
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// `<root>/<env>-<hash8>-s<seed>`.
    pub fn run_dir(&self, seed: u64) -> Result<PathBuf> {
        let single = self.for_seed(seed);
        Ok(self
            .output_root()
            .join(format!("{}-{}-s{}", self.env.id, single.hash8()?, seed)))
    }
}
