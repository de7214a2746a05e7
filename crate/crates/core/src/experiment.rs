//! Loads the files named by an [`ExperimentConfig`] and runs scoring,
//! evaluation and sweeps for a chosen set of normal classes.

use std::collections::HashSet;

use serde::Serialize;

use crate::bank::{attach_dictionary, build_bank, exclude_entries, Dictionary, NormalMemoryBank};
use crate::data_io::{read_embeddings, ExperimentConfig, SplitPlan};
use crate::error::{Error, Result};
use crate::eval::{evaluate, lambda_sweep, EvalReport, LabeledScores, SweepRow};
use crate::math::{moments, EmbeddingMatrix};
use crate::scoring::{score_batch, Method, ScoreRecord, ScoringConfig};

#[derive(Debug, Clone)]
pub struct Experiment {
    pub train: EmbeddingMatrix,
    pub train_labels: Vec<String>,
    pub test: EmbeddingMatrix,
    /// Class name of every test sample, when known.
    pub test_labels: Option<Vec<String>>,
    /// Label embeddings; row ids are the class names.
    pub class_text: EmbeddingMatrix,
    pub dictionary: Option<Dictionary>,
    /// Non-fatal notes produced while loading (e.g. rows normalized on load).
    pub warnings: Vec<String>,
}

impl Experiment {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.check_files()?;
        let mut warnings = Vec::new();
        let mut load = |path: &std::path::Path| {
            let loaded = read_embeddings(path)?;
            if loaded.renormalized {
                warnings.push(format!("{}: rows were not unit norm and were normalized on load", path.display()));
            }
            Ok::<_, Error>(loaded)
        };
        let train = load(&cfg.paths.train)?;
        let test = load(&cfg.paths.test)?;
        let class_text = load(&cfg.paths.class_text)?;
        let dictionary = match &cfg.paths.dictionary {
            Some(p) => {
                let d = load(p)?;
                // entry strings come from the labels when present, else the ids
                let entries = d.manifest.labels.clone().unwrap_or_else(|| d.matrix.ids().to_vec());
                let dict = Dictionary::new(entries, d.matrix)?;
                Some(if cfg.blocked_entries.is_empty() {
                    dict
                } else {
                    exclude_entries(&dict, &cfg.blocked_entries)?
                })
            }
            None => None,
        };
        let train_labels = train.manifest.labels.clone().ok_or_else(|| {
            Error::InvalidConfig(format!("{} has no labels in its manifest", cfg.paths.train.display()))
        })?;
        Self::from_parts(
            train.matrix,
            train_labels,
            test.matrix,
            test.manifest.labels,
            class_text.matrix,
            dictionary,
        )
        .map(|mut e| {
            e.warnings = warnings;
            e
        })
    }

    pub fn from_parts(
        train: EmbeddingMatrix,
        train_labels: Vec<String>,
        test: EmbeddingMatrix,
        test_labels: Option<Vec<String>>,
        class_text: EmbeddingMatrix,
        dictionary: Option<Dictionary>,
    ) -> Result<Self> {
        let dim = class_text.dim();
        for d in [train.dim(), test.dim()]
            .into_iter()
            .chain(dictionary.as_ref().map(Dictionary::dim))
        {
            if d != dim {
                return Err(Error::DimMismatch { expected: dim, got: d });
            }
        }
        if train_labels.len() != train.len() {
            return Err(Error::LengthMismatch { left: train.len(), right: train_labels.len() });
        }
        if let Some(l) = &test_labels {
            if l.len() != test.len() {
                return Err(Error::LengthMismatch { left: test.len(), right: l.len() });
            }
        }
        Ok(Self {
            train,
            train_labels,
            test,
            test_labels,
            class_text,
            dictionary,
            warnings: Vec::new(),
        })
    }

    /// `normal` itself, or every class of the class-text file when empty.
    pub fn resolve_normal(&self, normal: &[String]) -> Vec<String> {
        if normal.is_empty() {
            self.class_text.ids().to_vec()
        } else {
            normal.to_vec()
        }
    }

    /// Bank over the training rows of the normal classes, with the
    /// dictionary attached when there is one.
    pub fn bank(&self, normal: &[String]) -> Result<NormalMemoryBank> {
        let normal = self.resolve_normal(normal);
        let mut class_rows = Vec::with_capacity(normal.len());
        for c in &normal {
            class_rows.push(
                self.class_text
                    .position(c)
                    .ok_or_else(|| Error::UnknownClass(c.clone()))?,
            );
        }
        let known: HashSet<&str> = self.class_text.ids().iter().map(String::as_str).collect();
        let wanted: HashSet<&str> = normal.iter().map(String::as_str).collect();
        let mut rows = Vec::new();
        for (i, label) in self.train_labels.iter().enumerate() {
            if !known.contains(label.as_str()) {
                return Err(Error::UnknownLabel(label.clone()));
            }
            if wanted.contains(label.as_str()) {
                rows.push(i);
            }
        }
        let train = self.train.select(&rows)?;
        let labels: Vec<&str> = rows.iter().map(|&i| self.train_labels[i].as_str()).collect();
        let class_text = self.class_text.select(&class_rows)?;
        let bank = build_bank(&train, &labels, &class_text, &normal)?;
        match &self.dictionary {
            Some(d) => attach_dictionary(bank, d),
            None => Ok(bank),
        }
    }

    /// `true` for test samples whose class is not normal.
    pub fn anomaly_flags(&self, normal: &[String]) -> Result<Vec<bool>> {
        let normal = self.resolve_normal(normal);
        let labels = self
            .test_labels
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("test embeddings carry no labels".into()))?;
        let normal: HashSet<&str> = normal.iter().map(String::as_str).collect();
        Ok(labels.iter().map(|l| !normal.contains(l.as_str())).collect())
    }

    pub fn score(&self, normal: &[String], cfg: &ScoringConfig, method: Method) -> Result<Vec<ScoreRecord>> {
        let bank = self.bank(normal)?;
        score_batch(&self.test, &bank, self.dictionary.as_ref(), cfg, method)
    }

    pub fn evaluate(&self, normal: &[String], cfg: &ScoringConfig, method: Method) -> Result<EvalReport> {
        let records = self.score(normal, cfg, method)?;
        let scores = records.iter().map(|r| r.score).collect();
        evaluate(&LabeledScores::new(scores, self.anomaly_flags(normal)?)?)
    }

    pub fn sweep(&self, normal: &[String], cfg: &ScoringConfig, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
        let dict = self.dictionary.as_ref().ok_or(Error::MissingDictStats)?;
        let bank = self.bank(normal)?;
        lambda_sweep(&self.test, &self.anomaly_flags(normal)?, &bank, dict, cfg, lambdas)
    }

    /// Runs the sweep once per trial of `plan` and averages over trials.
    pub fn sweep_plan(&self, plan: &SplitPlan, cfg: &ScoringConfig, lambdas: &[f64]) -> Result<Vec<AggregateRow>> {
        if plan.trials.is_empty() {
            return Err(Error::InvalidSplit("plan has no trials".into()));
        }
        let per_trial = plan
            .trials
            .iter()
            .map(|t| self.sweep(&t.normal_classes, cfg, lambdas))
            .collect::<Result<Vec<_>>>()?;
        lambdas
            .iter()
            .enumerate()
            .map(|(i, &lambda)| {
                let reports: Vec<EvalReport> = per_trial.iter().map(|rows| rows[i].report).collect();
                AggregateRow::from_reports(lambda, &reports)
            })
            .collect()
    }
}

/// Mean and spread of metrics over the trials of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateRow {
    pub lambda: f64,
    pub auroc: f64,
    pub fpr95: f64,
    /// Population standard deviation of AUROC across trials.
    pub auroc_std: f64,
    pub n_trials: usize,
}

impl AggregateRow {
    pub fn from_reports(lambda: f64, reports: &[EvalReport]) -> Result<Self> {
        let auroc = moments(&reports.iter().map(|r| r.auroc).collect::<Vec<_>>())?;
        let fpr = moments(&reports.iter().map(|r| r.fpr95).collect::<Vec<_>>())?;
        Ok(Self {
            lambda,
            auroc: auroc.mean,
            fpr95: fpr.mean,
            auroc_std: auroc.std,
            n_trials: reports.len(),
        })
    }
}
