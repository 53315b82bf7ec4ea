//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skelcon_core::augment::AugmentationPipeline;
use skelcon_core::contrastive::Paradigm;
use skelcon_core::evaluation::{EvalConfig, RepresentationKind};
use skelcon_core::synthetic::SyntheticSpec;
use skelcon_core::trainer::PretrainConfig;

use crate::error::{CliError, Result, WithPath};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into `pretrain.seed` and `synth.seed`.
    pub seed: u64,
    /// Training (pretraining) split.
    pub data: Option<PathBuf>,
    /// Held-out split for evaluation.
    pub test_data: Option<PathBuf>,
    /// Parent directory of run directories.
    pub out: PathBuf,
    /// Thread cap; all cores when unset.
    pub workers: Option<usize>,
    /// Subsample sequences longer than the file header allows.
    pub truncate: bool,
    pub synth: SyntheticSpec,
    pub pretrain: PretrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            test_data: None,
            out: PathBuf::from("runs"),
            workers: None,
            truncate: false,
            synth: SyntheticSpec::default(),
            pretrain: PretrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub strategy: Option<String>,
    pub paradigm: Option<String>,
    pub representation: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_toml(&fs::read_to_string(p).at(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Internal(format!("config serialization: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.data {
            self.data = Some(d.clone());
        }
        if let Some(d) = &o.test_data {
            self.test_data = Some(d.clone());
        }
        if let Some(d) = &o.out {
            self.out = d.clone();
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if let Some(s) = &o.strategy {
            self.pretrain.pipeline = s.parse::<AugmentationPipeline>()?;
        }
        if let Some(p) = &o.paradigm {
            self.pretrain.contrastive.paradigm = p.parse::<Paradigm>()?;
        }
        if let Some(r) = &o.representation {
            self.eval.representation = r.parse::<RepresentationKind>()?;
        }
        self.pretrain.seed = self.seed;
        self.synth.seed = self.seed;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(CliError::Validation("workers must be >= 1".into()));
        }
        self.pretrain.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = Self::load(path)?;
        cfg.apply(o)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| {
            CliError::Validation("no dataset given (--data or `data` in the config)".into())
        })
    }

    pub fn test_path(&self) -> Result<&Path> {
        self.test_data.as_deref().ok_or_else(|| {
            CliError::Validation(
                "no test split given (--test-data or `test_data` in the config)".into(),
            )
        })
    }

    /// Hex SHA-256 over everything that changes results: the config minus
    /// seed, output location and thread cap, plus the training data bytes.
    pub fn content_hash(&self, data_bytes: &[u8]) -> Result<String> {
        let mut keyed = self.clone();
        keyed.seed = 0;
        keyed.pretrain.seed = 0;
        keyed.synth.seed = 0;
        keyed.out = PathBuf::new();
        keyed.workers = None;
        let mut h = Sha256::new();
        h.update(keyed.to_toml()?.as_bytes());
        h.update(Sha256::digest(data_bytes));
        Ok(hex::encode(h.finalize()))
    }

    pub fn run_dir(&self, data_bytes: &[u8]) -> Result<PathBuf> {
        let hash = self.content_hash(data_bytes)?;
        Ok(self.out.join(format!("{}-seed{}", &hash[..12], self.seed)))
    }
}

pub fn install_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        // a second install in the same process is harmless to ignore
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.pretrain.contrastive.momentum, 0.999);
        assert_eq!(cfg.pretrain.contrastive.temperature, 0.06);
        assert_eq!(cfg.pretrain.contrastive.batch_size, 32);
        assert_eq!((cfg.pretrain.hidden, cfg.pretrain.layers), (256, 2));
    }

    #[test]
    fn flags_beat_file() {
        let text =
            "seed = 4\n[pretrain]\nepochs = 3\n[pretrain.contrastive]\nparadigm = \"end_to_end\"\n";
        let mut cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.pretrain.epochs, 3);
        cfg.apply(&Overrides {
            seed: Some(9),
            paradigm: Some("memory-bank".into()),
            strategy: Some("rotation,shear".into()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!((cfg.seed, cfg.pretrain.seed, cfg.synth.seed), (9, 9, 9));
        assert_eq!(cfg.pretrain.contrastive.paradigm, Paradigm::MemoryBank);
        assert_eq!(cfg.pretrain.pipeline.to_string(), "rotation,shear");
        assert_eq!(cfg.pretrain.epochs, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml("sede = 1"),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn hash_ignores_seed_and_location() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 7,
            out: "elsewhere".into(),
            workers: Some(2),
            ..a.clone()
        };
        assert_eq!(a.content_hash(b"x").unwrap(), b.content_hash(b"x").unwrap());
        assert_ne!(a.content_hash(b"x").unwrap(), a.content_hash(b"y").unwrap());
        let mut c = a.clone();
        c.pretrain.lr = 0.02;
        assert_ne!(a.content_hash(b"x").unwrap(), c.content_hash(b"x").unwrap());
        assert_ne!(a.run_dir(b"x").unwrap(), b.run_dir(b"x").unwrap());
    }
}
