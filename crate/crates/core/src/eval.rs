//! Threshold-free metrics, the similarity-bias diagnostics and the
//! `lambda` sweep.

use std::cmp::Ordering;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bank::{Dictionary, NormalMemoryBank};
use crate::error::{Error, Result};
use crate::math::{check_dim, sim, sims_to_rows, EmbeddingMatrix};
use crate::scoring::{components_batch, ScoringConfig};

/// Scores paired with ground truth; `true` marks an anomaly.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: scores.len(),
                right: labels.len(),
            });
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_anomaly(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_normal(&self) -> usize {
        self.len() - self.n_anomaly()
    }

    fn both_classes(&self) -> Result<(usize, usize)> {
        let (n_anom, n_norm) = (self.n_anomaly(), self.n_normal());
        if n_anom == 0 || n_norm == 0 {
            return Err(Error::OneClassOnly);
        }
        Ok((n_anom, n_norm))
    }

    /// Sample indices grouped by equal score, highest score first.
    fn tie_groups_desc(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| self.scores[j].total_cmp(&self.scores[i]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if self.scores[g[0]] == self.scores[i] => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        groups
    }
}

/// Probability that a random anomaly outscores a random normal sample,
/// ties counting one half.
///
/// Computed from the Mann-Whitney rank sum with midranks. Everything stays
/// in integers (twice the rank sum) until the final division.
pub fn auroc(ls: &LabeledScores) -> Result<f64> {
    let (n_anom, n_norm) = ls.both_classes()?;
    let mut groups = ls.tie_groups_desc();
    groups.reverse();
    let mut twice_rank_sum: u128 = 0;
    let mut seen: u128 = 0;
    for g in &groups {
        let size = g.len() as u128;
        // twice the midrank of ranks seen+1 ..= seen+size
        let twice_mid = 2 * seen + size + 1;
        let anoms = g.iter().filter(|&&i| ls.labels[i]).count() as u128;
        twice_rank_sum += anoms * twice_mid;
        seen += size;
    }
    let n1 = n_anom as u128;
    let twice_u = twice_rank_sum - n1 * (n1 + 1);
    Ok(twice_u as f64 / (2 * n1 * n_norm as u128) as f64)
}

/// Smallest false positive rate over thresholds `tau` (taken from the
/// distinct scores) whose recall `P(score >= tau | anomaly)` reaches `tpr_target`.
pub fn fpr_at_tpr(ls: &LabeledScores, tpr_target: f64) -> Result<f64> {
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target recall must lie in (0, 1], got {tpr_target}"
        )));
    }
    let (n_anom, n_norm) = ls.both_classes()?;
    let (mut tp, mut fp) = (0usize, 0usize);
    for g in ls.tie_groups_desc() {
        for &i in &g {
            if ls.labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if tp as f64 / n_anom as f64 >= tpr_target {
            return Ok(fp as f64 / n_norm as f64);
        }
    }
    unreachable!("the lowest threshold flags every anomaly")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub fpr95: f64,
    pub n_normal: usize,
    pub n_anomaly: usize,
}

pub fn evaluate(ls: &LabeledScores) -> Result<EvalReport> {
    Ok(EvalReport {
        auroc: auroc(ls)?,
        fpr95: fpr_at_tpr(ls, 0.95)?,
        n_normal: ls.n_normal(),
        n_anomaly: ls.n_anomaly(),
    })
}

/// Mean similarity of `z` to every dictionary entry.
pub fn avg_dict_similarity(z: &[f32], dict: &Dictionary) -> Result<f64> {
    check_dim(dict.dim(), z.len())?;
    let sims = sims_to_rows(z, dict.embeddings());
    Ok(sims.iter().sum::<f64>() / sims.len() as f64)
}

/// [`avg_dict_similarity`] for every row of `m`.
pub fn avg_dict_similarities(m: &EmbeddingMatrix, dict: &Dictionary) -> Result<Vec<f64>> {
    check_dim(dict.dim(), m.dim())?;
    m.rows().map(|z| avg_dict_similarity(z, dict)).collect()
}

/// How binary predictions are derived from scores for the error profile.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    /// Flag exactly as many samples as there are true anomalies, highest
    /// scores first (ties to the lower index).
    #[default]
    Prevalence,
    /// Flag every sample with `score >= tau`.
    Fixed(f64),
}

impl FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "prevalence" {
            return Ok(ThresholdRule::Prevalence);
        }
        if let Some(tau) = s.strip_prefix("fixed:") {
            let tau: f64 = tau
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad fixed threshold {tau:?}")))?;
            return Ok(ThresholdRule::Fixed(tau));
        }
        Err(Error::InvalidConfig(format!("unknown threshold rule {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileErrorProfile {
    pub n_quantiles: usize,
    pub fn_proportion: Vec<f64>,
    pub fp_proportion: Vec<f64>,
    pub threshold: f64,
    pub bucket_sizes: Vec<usize>,
    pub fn_counts: Vec<usize>,
    pub fp_counts: Vec<usize>,
    /// Smallest and largest dictionary similarity in each bucket.
    pub bucket_ranges: Vec<(f64, f64)>,
}

/// Splits samples into equal-count buckets by ascending dictionary
/// similarity and reports the share of false negatives and false positives
/// in each. The first `n % n_quantiles` buckets hold one extra sample.
pub fn error_quantile_profile(
    ls: &LabeledScores,
    dict_sims: &[f64],
    n_quantiles: usize,
    rule: ThresholdRule,
) -> Result<QuantileErrorProfile> {
    let n = ls.len();
    if dict_sims.len() != n {
        return Err(Error::LengthMismatch { left: n, right: dict_sims.len() });
    }
    if n_quantiles < 2 {
        return Err(Error::InvalidConfig("need at least 2 quantiles".into()));
    }
    if n_quantiles > n {
        return Err(Error::DegenerateBucket { samples: n, buckets: n_quantiles });
    }

    let (predicted, threshold) = predict(ls, rule);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dict_sims[i].total_cmp(&dict_sims[j]).then(i.cmp(&j)));

    let (base, extra) = (n / n_quantiles, n % n_quantiles);
    let mut profile = QuantileErrorProfile {
        n_quantiles,
        fn_proportion: Vec::with_capacity(n_quantiles),
        fp_proportion: Vec::with_capacity(n_quantiles),
        threshold,
        bucket_sizes: Vec::with_capacity(n_quantiles),
        fn_counts: Vec::with_capacity(n_quantiles),
        fp_counts: Vec::with_capacity(n_quantiles),
        bucket_ranges: Vec::with_capacity(n_quantiles),
    };
    let mut start = 0;
    for q in 0..n_quantiles {
        let size = base + usize::from(q < extra);
        let bucket = &order[start..start + size];
        start += size;
        let fn_count = bucket.iter().filter(|&&i| ls.labels[i] && !predicted[i]).count();
        let fp_count = bucket.iter().filter(|&&i| !ls.labels[i] && predicted[i]).count();
        profile.fn_proportion.push(fn_count as f64 / size as f64);
        profile.fp_proportion.push(fp_count as f64 / size as f64);
        profile.bucket_sizes.push(size);
        profile.fn_counts.push(fn_count);
        profile.fp_counts.push(fp_count);
        profile.bucket_ranges.push((dict_sims[bucket[0]], dict_sims[bucket[size - 1]]));
    }
    Ok(profile)
}

fn predict(ls: &LabeledScores, rule: ThresholdRule) -> (Vec<bool>, f64) {
    match rule {
        ThresholdRule::Fixed(tau) => (ls.scores.iter().map(|&s| s >= tau).collect(), tau),
        ThresholdRule::Prevalence => {
            let k = ls.n_anomaly();
            let mut order: Vec<usize> = (0..ls.len()).collect();
            order.sort_by(|&i, &j| ls.scores[j].total_cmp(&ls.scores[i]).then(i.cmp(&j)));
            let mut flagged = vec![false; ls.len()];
            for &i in &order[..k] {
                flagged[i] = true;
            }
            let threshold = if k == 0 { f64::INFINITY } else { ls.scores[order[k - 1]] };
            (flagged, threshold)
        }
    }
}

/// Mean, population standard deviation and quartiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    /// Quartiles use linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Result<Self> {
        let m = crate::math::moments(values)?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (sorted.len() - 1) as f64;
            let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        };
        Ok(Self {
            n: values.len(),
            mean: m.mean,
            std: m.std,
            min: sorted[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Data behind the text clustering diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringReport {
    /// `(image id, similarity to its own class label)`.
    pub image_label_sims: Vec<(String, f64)>,
    /// `(class name, mean similarity of the label to the dictionary)`.
    pub label_dict_means: Vec<(String, f64)>,
    pub image_label_summary: Summary,
    pub label_dict_summary: Summary,
}

impl ClusteringReport {
    /// Long-format rows `(distribution, id, value)`.
    pub fn rows(&self) -> impl Iterator<Item = (&'static str, &str, f64)> + '_ {
        let a = self.image_label_sims.iter().map(|(id, v)| ("image_label", id.as_str(), *v));
        let b = self.label_dict_means.iter().map(|(id, v)| ("label_dictionary", id.as_str(), *v));
        a.chain(b)
    }
}

/// Compares how close images sit to their own label against how close the
/// labels sit to generic dictionary text. Row ids of `class_text_embs` are
/// the class names referenced by `image_labels`.
pub fn text_clustering_report(
    class_text_embs: &EmbeddingMatrix,
    image_embs: &EmbeddingMatrix,
    image_labels: &[impl AsRef<str>],
    dict: &Dictionary,
) -> Result<ClusteringReport> {
    check_dim(class_text_embs.dim(), image_embs.dim())?;
    check_dim(class_text_embs.dim(), dict.dim())?;
    if image_labels.len() != image_embs.len() {
        return Err(Error::LengthMismatch {
            left: image_embs.len(),
            right: image_labels.len(),
        });
    }
    if image_embs.is_empty() || class_text_embs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut image_label_sims = Vec::with_capacity(image_embs.len());
    for (i, label) in image_labels.iter().enumerate() {
        let label = label.as_ref();
        let c = class_text_embs
            .position(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))?;
        image_label_sims.push((
            image_embs.ids()[i].clone(),
            sim(image_embs.row(i), class_text_embs.row(c)),
        ));
    }
    let label_dict_means = class_text_embs
        .ids()
        .iter()
        .zip(class_text_embs.rows())
        .map(|(id, row)| Ok((id.clone(), avg_dict_similarity(row, dict)?)))
        .collect::<Result<Vec<_>>>()?;
    let values = |v: &[(String, f64)]| v.iter().map(|x| x.1).collect::<Vec<_>>();
    Ok(ClusteringReport {
        image_label_summary: Summary::of(&values(&image_label_sims))?,
        label_dict_summary: Summary::of(&values(&label_dict_means))?,
        image_label_sims,
        label_dict_means,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub report: EvalReport,
}

/// Evaluates the combined score at every `lambda`. Similarities, top-K
/// matches and per-class components are computed once and reused.
pub fn lambda_sweep(
    test: &EmbeddingMatrix,
    labels: &[bool],
    bank: &NormalMemoryBank,
    dict: &Dictionary,
    cfg_base: &ScoringConfig,
    lambdas: &[f64],
) -> Result<Vec<SweepRow>> {
    if labels.len() != test.len() {
        return Err(Error::LengthMismatch { left: test.len(), right: labels.len() });
    }
    for &l in lambdas {
        cfg_base.with_lambda(l).validate()?;
    }
    let comps = components_batch(test, bank, dict, cfg_base)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let scores = comps.iter().map(|c| c.combine(lambda).0).collect();
            let report = evaluate(&LabeledScores::new(scores, labels.to_vec())?)?;
            Ok(SweepRow { lambda, report })
        })
        .collect()
}

/// Pearson correlation coefficient; `NaN` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Midranks (1-based) of `v`.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap_or(Ordering::Equal));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = mid;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation (Pearson on midranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    pearson(&ranks(x), &ranks(y))
}
