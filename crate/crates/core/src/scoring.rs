//! Anomaly scores: the internal class score, the external text score, their
//! combination, and the two baselines (internal score alone, and k-NN
//! cosine distance to the memory bank).
//!
//! All scores follow the same convention: lower means more normal.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{DictStats, Dictionary, NormalMemoryBank};
use crate::error::{Error, Result};
use crate::math::{check_dim, sim, sims_to_rows, topk_indices, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    /// Weight of the external text score.
    pub lambda: f64,
    /// Number of dictionary matches averaged by the external text score.
    pub k: usize,
    /// Added to every standard deviation before dividing.
    pub epsilon: f64,
    /// Neighbour count for the k-NN baseline.
    pub k_nn: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            k: 10,
            epsilon: 1e-8,
            k_nn: 5,
        }
    }
}

impl ScoringConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.k_nn == 0 {
            return Err(Error::InvalidConfig("k_nn must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-2) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 1e-2], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Bliss,
    Biased,
    Knn,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bliss" => Ok(Method::Bliss),
            "biased" => Ok(Method::Biased),
            "knn" => Ok(Method::Knn),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Bliss => "bliss",
            Method::Biased => "biased",
            Method::Knn => "knn",
        })
    }
}

/// Per-sample scoring output with its per-class decomposition.
///
/// For the internal-score baseline `et_per_class` is empty and
/// `combined_per_class` equals `ic_per_class`. For the k-NN baseline only
/// `score` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub ic_per_class: IndexMap<String, f64>,
    pub et_per_class: IndexMap<String, f64>,
    pub combined_per_class: IndexMap<String, f64>,
    pub score: f64,
    pub argmin_class: String,
    pub topk_dict_ids: Vec<String>,
}

impl ScoreRecord {
    /// Smallest internal class score over all classes.
    pub fn ic_min(&self) -> Option<f64> {
        self.ic_per_class.values().copied().reduce(f64::min)
    }

    pub fn et_at_argmin(&self) -> Option<f64> {
        self.et_per_class.get(&self.argmin_class).copied()
    }
}

/// Class-wise score components of one sample, independent of `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreComponents {
    pub ic: Vec<f64>,
    pub et: Vec<f64>,
    /// Dictionary rows of the sample's top-K matches, best first.
    pub topk: Vec<usize>,
}

impl ScoreComponents {
    /// Combined score per class, `ic + lambda * et`.
    pub fn combined(&self, lambda: f64) -> Vec<f64> {
        self.ic.iter().zip(&self.et).map(|(ic, et)| ic + lambda * et).collect()
    }

    /// Final score and the index of the minimizing class (first on ties).
    pub fn combine(&self, lambda: f64) -> (f64, usize) {
        argmin(&self.combined(lambda))
    }
}

fn argmin(values: &[f64]) -> (f64, usize) {
    let mut best = (values[0], 0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.0 {
            best = (v, i);
        }
    }
    best
}

#[inline]
fn standardize(x: f64, mean: f64, std: f64, eps: f64) -> f64 {
    (x - mean) / (std + eps)
}

fn ic_for(z: &[f32], bank: &NormalMemoryBank, class: usize, eps: f64) -> f64 {
    let s = bank.class_stats(class);
    -standardize(sim(z, bank.class_text_embs().row(class)), s.mean, s.std, eps)
}

fn et_for(dict_sims: &[f64], topk: &[usize], stats: &DictStats, class: usize, eps: f64) -> f64 {
    let row = stats.class_row(class);
    let mut acc = 0.0;
    for &j in topk {
        acc += standardize(dict_sims[j], row[j].mean, row[j].std, eps);
    }
    acc / topk.len() as f64
}

/// Standardized negative similarity of `z` to the label of `class`:
/// `-(sim(z, C) - mean) / (std + epsilon)`.
pub fn internal_class_score(
    z: &[f32],
    bank: &NormalMemoryBank,
    class: &str,
    cfg: &ScoringConfig,
) -> Result<f64> {
    cfg.validate()?;
    let c = bank.class_index(class)?;
    check_dim(bank.dim(), z.len())?;
    Ok(ic_for(z, bank, c, cfg.epsilon))
}

/// Mean standardized similarity of `z` to its top-K dictionary matches,
/// using the statistics of `class`. Also returns the ids of the matches.
pub fn external_text_score(
    z: &[f32],
    bank: &NormalMemoryBank,
    class: &str,
    dict: &Dictionary,
    cfg: &ScoringConfig,
) -> Result<(f64, Vec<String>)> {
    cfg.validate()?;
    let c = bank.class_index(class)?;
    let stats = bank.dict_stats_for(dict)?;
    check_dim(bank.dim(), z.len())?;
    let dict_sims = sims_to_rows(z, dict.embeddings());
    let topk = topk_indices(&dict_sims, cfg.k)?;
    let et = et_for(&dict_sims, &topk, stats, c, cfg.epsilon);
    Ok((et, topk.iter().map(|&j| dict.ids()[j].clone()).collect()))
}

/// Internal and external scores of `z` for every class of the bank.
pub fn score_components(
    z: &[f32],
    bank: &NormalMemoryBank,
    dict: &Dictionary,
    cfg: &ScoringConfig,
) -> Result<ScoreComponents> {
    cfg.validate()?;
    let stats = bank.dict_stats_for(dict)?;
    check_dim(bank.dim(), z.len())?;
    Ok(components_unchecked(z, bank, dict, stats, cfg))
}

fn components_unchecked(
    z: &[f32],
    bank: &NormalMemoryBank,
    dict: &Dictionary,
    stats: &DictStats,
    cfg: &ScoringConfig,
) -> ScoreComponents {
    let dict_sims = sims_to_rows(z, dict.embeddings());
    // k <= t is checked by the callers
    let topk = topk_indices(&dict_sims, cfg.k).expect("k checked against dictionary size");
    let n = bank.n_classes();
    let ic = (0..n).map(|c| ic_for(z, bank, c, cfg.epsilon)).collect();
    let et = (0..n)
        .map(|c| et_for(&dict_sims, &topk, stats, c, cfg.epsilon))
        .collect();
    ScoreComponents { ic, et, topk }
}

fn check_k(cfg: &ScoringConfig, dict: &Dictionary) -> Result<()> {
    if cfg.k > dict.len() {
        return Err(Error::KTooLarge { k: cfg.k, len: dict.len() });
    }
    Ok(())
}

/// Builds the full record for one sample from its components.
pub fn record_from_components(
    sample_id: &str,
    comps: &ScoreComponents,
    bank: &NormalMemoryBank,
    dict: &Dictionary,
    lambda: f64,
) -> ScoreRecord {
    let names = bank.class_names();
    let combined = comps.combined(lambda);
    let (score, best) = argmin(&combined);
    let zip = |v: &[f64]| names.iter().cloned().zip(v.iter().copied()).collect::<IndexMap<_, _>>();
    ScoreRecord {
        sample_id: sample_id.to_owned(),
        ic_per_class: zip(&comps.ic),
        et_per_class: zip(&comps.et),
        combined_per_class: zip(&combined),
        score,
        argmin_class: names[best].clone(),
        topk_dict_ids: comps.topk.iter().map(|&j| dict.ids()[j].clone()).collect(),
    }
}

/// Combined score `min_i (IC_i + lambda * ET_i)` with its decomposition.
pub fn bliss_score(
    z: &[f32],
    bank: &NormalMemoryBank,
    dict: &Dictionary,
    cfg: &ScoringConfig,
) -> Result<ScoreRecord> {
    check_k(cfg, dict)?;
    let comps = score_components(z, bank, dict, cfg)?;
    Ok(record_from_components("", &comps, bank, dict, cfg.lambda))
}

fn biased_record(sample_id: &str, z: &[f32], bank: &NormalMemoryBank, eps: f64) -> ScoreRecord {
    let ic: Vec<f64> = (0..bank.n_classes()).map(|c| ic_for(z, bank, c, eps)).collect();
    let (score, best) = argmin(&ic);
    let map: IndexMap<String, f64> = bank.class_names().iter().cloned().zip(ic).collect();
    ScoreRecord {
        sample_id: sample_id.to_owned(),
        combined_per_class: map.clone(),
        ic_per_class: map,
        et_per_class: IndexMap::new(),
        score,
        argmin_class: bank.class_names()[best].clone(),
        topk_dict_ids: Vec::new(),
    }
}

/// Minimum internal class score over all classes.
pub fn biased_score(z: &[f32], bank: &NormalMemoryBank, cfg: &ScoringConfig) -> Result<f64> {
    cfg.validate()?;
    check_dim(bank.dim(), z.len())?;
    Ok(biased_record("", z, bank, cfg.epsilon).score)
}

fn knn_unchecked(z: &[f32], bank: &NormalMemoryBank, k_nn: usize) -> f64 {
    let sims: Vec<f64> = bank.all_train_rows().map(|r| sim(z, r)).collect();
    let nearest = topk_indices(&sims, k_nn).expect("k_nn checked against bank size");
    let mut acc = 0.0;
    for &i in &nearest {
        acc += 1.0 - sims[i];
    }
    acc / k_nn as f64
}

fn check_knn(bank: &NormalMemoryBank, k_nn: usize) -> Result<()> {
    if k_nn == 0 {
        return Err(Error::InvalidConfig("k_nn must be at least 1".into()));
    }
    if k_nn > bank.train_count() {
        return Err(Error::KTooLarge { k: k_nn, len: bank.train_count() });
    }
    Ok(())
}

/// Mean cosine distance from `z` to its `k_nn` nearest training embeddings,
/// pooled over all classes.
pub fn knn_score(z: &[f32], bank: &NormalMemoryBank, k_nn: usize) -> Result<f64> {
    check_knn(bank, k_nn)?;
    check_dim(bank.dim(), z.len())?;
    Ok(knn_unchecked(z, bank, k_nn))
}

/// Scores every row of `test` in order. `dict` is required for
/// [`Method::Bliss`] and ignored otherwise.
pub fn score_batch(
    test: &EmbeddingMatrix,
    bank: &NormalMemoryBank,
    dict: Option<&Dictionary>,
    cfg: &ScoringConfig,
    method: Method,
) -> Result<Vec<ScoreRecord>> {
    cfg.validate()?;
    check_dim(bank.dim(), test.dim())?;
    let ids = test.ids();
    let records = match method {
        Method::Bliss => {
            let dict = dict.ok_or(Error::MissingDictStats)?;
            check_k(cfg, dict)?;
            let stats = bank.dict_stats_for(dict)?;
            (0..test.len())
                .into_par_iter()
                .map(|i| {
                    let comps = components_unchecked(test.row(i), bank, dict, stats, cfg);
                    record_from_components(&ids[i], &comps, bank, dict, cfg.lambda)
                })
                .collect()
        }
        Method::Biased => (0..test.len())
            .into_par_iter()
            .map(|i| biased_record(&ids[i], test.row(i), bank, cfg.epsilon))
            .collect(),
        Method::Knn => {
            check_knn(bank, cfg.k_nn)?;
            (0..test.len())
                .into_par_iter()
                .map(|i| ScoreRecord {
                    sample_id: ids[i].clone(),
                    ic_per_class: IndexMap::new(),
                    et_per_class: IndexMap::new(),
                    combined_per_class: IndexMap::new(),
                    score: knn_unchecked(test.row(i), bank, cfg.k_nn),
                    argmin_class: String::new(),
                    topk_dict_ids: Vec::new(),
                })
                .collect()
        }
    };
    Ok(records)
}

/// `lambda`-independent components for every row of `test`, for callers
/// that evaluate several weightings of the same samples.
pub fn components_batch(
    test: &EmbeddingMatrix,
    bank: &NormalMemoryBank,
    dict: &Dictionary,
    cfg: &ScoringConfig,
) -> Result<Vec<ScoreComponents>> {
    cfg.validate()?;
    check_dim(bank.dim(), test.dim())?;
    check_k(cfg, dict)?;
    let stats = bank.dict_stats_for(dict)?;
    Ok((0..test.len())
        .into_par_iter()
        .map(|i| components_unchecked(test.row(i), bank, dict, stats, cfg))
        .collect())
}
