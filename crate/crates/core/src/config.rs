//! Run configuration file (TOML).
//!
//! Every key is optional; missing keys take the defaults shown below.
//!
//! ```toml
//! level = 3            # signature truncation L
//! samples = 16         # sampled series per input K
//! c = 4.0              # normalization shape C (>= 1)
//! a = 1.0              # normalization tail exponent a (> 0)
//! band = 10            # band width alpha of V; omit for the full triangle
//! strategy = "midpoints"   # or "extended"
//! before = 0           # extended strategy: stamps before the first time
//! after = 0            # extended strategy: stamps after the last time
//! margin = 0.02        # extended strategy: omit for the mean time gap
//! augment = true       # false gives the plain signature classifier
//! rescale_time = true
//! v_init_scale = 0.01
//! learning_rate = 0.01
//! batch_size = 16
//! epochs = 30
//! folds = 5
//! seed = 0
//! freeze_samples = false
//!
//! [task]               # synthetic task parameters, see TaskConfig
//! n_points = 50
//! train_per_class = 200
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::TimeStrategy;
use crate::datasets::TaskConfig;
use crate::error::{Error, Result};
use crate::model::{Hyper, TrainConfig};
use crate::normalization::NormConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Midpoints,
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub level: usize,
    pub samples: usize,
    pub c: f64,
    pub a: f64,
    pub band: Option<usize>,
    pub strategy: StrategyName,
    pub before: usize,
    pub after: usize,
    pub margin: Option<f64>,
    pub augment: bool,
    pub rescale_time: bool,
    pub v_init_scale: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    pub freeze_samples: bool,
    pub task: TaskConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = Hyper::default();
        let t = TrainConfig::default();
        Self {
            level: h.level,
            samples: h.samples,
            c: h.norm.c,
            a: h.norm.a,
            band: h.band,
            strategy: StrategyName::Midpoints,
            before: 0,
            after: 0,
            margin: None,
            augment: h.augment,
            rescale_time: h.rescale_time,
            v_init_scale: h.v_init_scale,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            folds: 5,
            seed: 0,
            freeze_samples: t.freeze_samples,
            task: TaskConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            msg: e.message().to_string(),
        })?;
        cfg.hyper()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn hyper(&self) -> Result<Hyper> {
        let strategy = match self.strategy {
            StrategyName::Midpoints => TimeStrategy::Midpoints,
            StrategyName::Extended => TimeStrategy::Extended {
                before: self.before,
                after: self.after,
                margin: self.margin,
            },
        };
        if let Some(m) = self.margin {
            if !(m > 0.0) {
                return Err(Error::invalid(format!("margin must be positive, got {m}")));
            }
        }
        let h = Hyper {
            level: self.level,
            samples: self.samples,
            strategy,
            norm: NormConfig {
                c: self.c,
                a: self.a,
                ..NormConfig::default()
            },
            band: self.band,
            augment: self.augment,
            rescale_time: self.rescale_time,
            v_init_scale: self.v_init_scale,
            seed: self.seed,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            freeze_samples: self.freeze_samples,
        }
    }
}
