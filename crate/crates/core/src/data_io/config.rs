use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::scoring::{Method, ScoringConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub class_text: PathBuf,
    #[serde(default)]
    pub dictionary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub scores: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<PathBuf>,
}

fn default_lambda() -> f64 {
    ScoringConfig::default().lambda
}
fn default_k() -> usize {
    ScoringConfig::default().k
}
fn default_epsilon() -> f64 {
    ScoringConfig::default().epsilon
}
fn default_k_nn() -> usize {
    ScoringConfig::default().k_nn
}

/// One experiment as stored on disk. Paths are resolved against the
/// current working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: DataPaths,
    /// Normal classes; empty means every class in the class-text file.
    #[serde(default)]
    pub normal_classes: Vec<String>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_k_nn")]
    pub k_nn: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// Dictionary entries to drop before scoring (case-insensitive).
    #[serde(default)]
    pub blocked_entries: Vec<String>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn new(paths: DataPaths) -> Self {
        let s = ScoringConfig::default();
        Self {
            paths,
            normal_classes: Vec::new(),
            lambda: s.lambda,
            k: s.k,
            epsilon: s.epsilon,
            k_nn: s.k_nn,
            method: Method::default(),
            seed: 0,
            blocked_entries: Vec::new(),
            output: OutputPaths::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(&read_file(path)?)?;
        cfg.scoring().validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        write_file(path, json)?;
        Ok(())
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            lambda: self.lambda,
            k: self.k,
            epsilon: self.epsilon,
            k_nn: self.k_nn,
        }
    }

    pub fn check_files(&self) -> Result<()> {
        let p = &self.paths;
        for path in [Some(&p.train), Some(&p.test), Some(&p.class_text), p.dictionary.as_ref()]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{} does not exist", path.display()),
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let json = r#"{"paths": {"train": "a", "test": "b", "class_text": "c"}}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!((cfg.lambda, cfg.k, cfg.k_nn), (0.5, 10, 5));
        assert_eq!(cfg.method, Method::Bliss);
        assert!(cfg.paths.dictionary.is_none());
        assert_eq!(cfg, ExperimentConfig::new(cfg.paths.clone()));
    }

    #[test]
    fn unknown_fields_rejected() {
        let json = r#"{"paths": {"train": "a", "test": "b", "class_text": "c"}, "lamda": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn missing_files_are_io_errors() {
        let cfg = ExperimentConfig::new(DataPaths {
            train: "/nonexistent/a".into(),
            test: "b".into(),
            class_text: "c".into(),
            dictionary: None,
        });
        assert!(cfg.check_files().unwrap_err().is_io());
    }
}
