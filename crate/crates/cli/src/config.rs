use std::path::{Path, PathBuf};

use anyhow::Context;
use evcast::data::FitScope;
use evcast::eval::MetricScale;
use evcast::models::{Hyperparams, ModelKind, HORIZONS};
use evcast::train::{Grid, TrainConfig, TrainingMode};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Training options that are not already carried by [`Hyperparams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub pretrain_epochs: usize,
    pub patience: Option<usize>,
    pub clip_norm: f64,
    pub mode: TrainingMode,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainOptions {
            pretrain_epochs: d.pretrain_epochs,
            patience: d.patience,
            clip_norm: d.clip_norm,
            mode: d.mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub horizons: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    pub jobs: usize,
    pub scale: MetricScale,
    pub fit_scope: FitScope,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub hyperparams: Hyperparams,
    pub train: TrainOptions,
    pub grid: Grid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Bdt,
            horizons: HORIZONS.to_vec(),
            runs: 5,
            seed: 0,
            jobs: 1,
            scale: MetricScale::Normalized,
            fit_scope: FitScope::AllData,
            data: None,
            out: PathBuf::from("out"),
            hyperparams: Hyperparams::default(),
            train: TrainOptions::default(),
            grid: Grid::standard(),
        }
    }
}

/// Command-line values that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub horizon: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub scale: Option<MetricScale>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        if let Some(v) = o.data {
            self.data = Some(v);
        }
        if let Some(v) = o.out {
            self.out = v;
        }
        if let Some(v) = o.model {
            self.model = v;
        }
        if let Some(v) = o.horizon {
            self.horizons = vec![v];
        }
        if let Some(v) = o.runs {
            self.runs = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = o.scale {
            self.scale = v;
        }
        self
    }

    /// Hyperparameters of one run.
    pub fn hyperparams_for(&self, horizon: usize, seed: u64) -> Hyperparams {
        Hyperparams {
            horizon,
            seed,
            ..self.hyperparams.clone()
        }
    }

    pub fn train_config(&self, hp: &Hyperparams) -> TrainConfig {
        TrainConfig {
            pretrain_epochs: self.train.pretrain_epochs,
            patience: self.train.patience,
            clip_norm: self.train.clip_norm,
            mode: self.train.mode,
            ..TrainConfig::from_hyperparams(hp)
        }
    }

    pub fn data_path(&self) -> anyhow::Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| UsageError("no data file: pass --data or set `data` in the config".into()).into())
    }

    /// Check everything that does not need the data file.
    pub fn validate(&self) -> anyhow::Result<()> {
        let usage = |msg: String| anyhow::Error::from(UsageError(msg));
        if self.runs == 0 {
            return Err(usage("runs must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(usage("jobs must be at least 1".into()));
        }
        if self.horizons.is_empty() {
            return Err(usage("at least one horizon is required".into()));
        }
        for &h in &self.horizons {
            let hp = self.hyperparams_for(h, self.seed);
            hp.validate(self.model)
                .map_err(|e| usage(format!("horizon {h}: {e}")))?;
            self.train_config(&hp)
                .validate()
                .map_err(|e| usage(e.to_string()))?;
        }
        Ok(())
    }

    /// Write the resolved configuration as `name` under the output directory.
    pub fn echo(&self, name: &str) -> anyhow::Result<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let text = toml::to_string_pretty(self).context("serializing resolved config")?;
        let path = self.out.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
