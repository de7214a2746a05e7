//! Synthetic embedding worlds with a tunable similarity bias.
//!
//! Geometry, for a random unit "text anchor" `t0`:
//!
//! * every text embedding (class labels and dictionary entries) is
//!   `sqrt(c)·t0 + sqrt(1-c)·u` for a random unit `u ⟂ t0`, where `c` is
//!   `text_concentration`, so any two texts have expected similarity `c`;
//! * every class owns an image direction `v`; `t0`, all `u_k` of class
//!   labels and all `v_k` are mutually orthogonal, so classes never overlap
//!   by chance;
//! * an image of class `k` is
//!   `normalize(IMAGE_CLASS_WEIGHT·v_k + image_alignment·u_k + ANCHOR_WEIGHT·b·t0 + IMAGE_NOISE·n)`
//!   with `n ~ N(0, I/dim)` and per-image bias `b = 1 + bias_amplitude·N(0, 1)`.
//!
//! Images with a large `b` are closer to every text at once, normal labels
//! and dictionary alike, which is the bias the external text score is meant
//! to remove. Anomalies are images of held-out classes.
//!
//! Randomness comes from a single `ChaCha8Rng` seeded with `seed`; all draws
//! happen in a fixed order, so a configuration always yields the same world.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bank::{attach_dictionary, build_bank, Dictionary, NormalMemoryBank};
use crate::error::{Error, Result};
use crate::eval::{evaluate, LabeledScores};
use crate::math::{l2_normalize_f64, EmbeddingMatrix};
use crate::scoring::{score_batch, Method, ScoringConfig};

/// Weight of the class-specific image direction.
pub const IMAGE_CLASS_WEIGHT: f64 = 0.75;
/// Weight of the text anchor in an image with bias 1.
pub const ANCHOR_WEIGHT: f64 = 0.12;
/// Scale of the isotropic image noise.
pub const IMAGE_NOISE: f64 = 0.3;
/// Bias amplitude of the `biased` preset.
pub const DEFAULT_BIAS_AMPLITUDE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    /// Number of normal classes.
    pub n_classes: usize,
    /// Number of held-out classes that anomalies are drawn from.
    pub n_anomaly_classes: usize,
    pub n_train_per_class: usize,
    pub n_test_normal: usize,
    pub n_test_anomaly: usize,
    pub n_dict: usize,
    /// Expected similarity between any two text embeddings.
    pub text_concentration: f64,
    /// Weight of an image's own label direction.
    pub image_alignment: f64,
    /// Spread of the per-image pull toward the text anchor.
    pub bias_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            n_classes: 4,
            n_anomaly_classes: 4,
            n_train_per_class: 100,
            n_test_normal: 500,
            n_test_anomaly: 500,
            n_dict: 500,
            text_concentration: 0.75,
            image_alignment: 0.3,
            bias_amplitude: DEFAULT_BIAS_AMPLITUDE,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn biased(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn unbiased(seed: u64) -> Self {
        Self {
            seed,
            bias_amplitude: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.n_classes == 0 || self.n_anomaly_classes == 0 || self.n_train_per_class == 0 || self.n_dict == 0 {
            return bad("class, training and dictionary counts must be at least 1");
        }
        if self.dim <= 2 * (self.n_classes + self.n_anomaly_classes) {
            return bad("dim must exceed twice the total number of classes");
        }
        if self.n_test_normal + self.n_test_anomaly == 0 {
            return bad("need at least one test sample");
        }
        if !(self.text_concentration > 0.0 && self.text_concentration < 1.0) {
            return bad("text_concentration must lie in (0, 1)");
        }
        if !(self.image_alignment.is_finite() && self.image_alignment >= 0.0) {
            return bad("image_alignment must be >= 0");
        }
        if !(self.bias_amplitude.is_finite() && self.bias_amplitude >= 0.0) {
            return bad("bias_amplitude must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub normal_classes: Vec<String>,
    pub anomaly_classes: Vec<String>,
    pub train: EmbeddingMatrix,
    pub train_labels: Vec<String>,
    pub test: EmbeddingMatrix,
    pub test_labels: Vec<String>,
    pub test_is_anomaly: Vec<bool>,
    /// Label embeddings of all classes, normal first; row ids are class names.
    pub class_text_embs: EmbeddingMatrix,
    pub dictionary: Dictionary,
    /// Ground-truth bias `b` of each training and test image.
    pub train_bias: Vec<f64>,
    pub test_bias: Vec<f64>,
}

impl SynthWorld {
    pub fn normal_class_text(&self) -> EmbeddingMatrix {
        let rows: Vec<usize> = (0..self.normal_classes.len()).collect();
        self.class_text_embs.select(&rows).expect("normal classes come first")
    }

    /// Memory bank over the training set with the dictionary attached.
    pub fn bank(&self) -> Result<NormalMemoryBank> {
        let bank = build_bank(&self.train, &self.train_labels, &self.normal_class_text(), &self.normal_classes)?;
        attach_dictionary(bank, &self.dictionary)
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
}

impl Sampler {
    fn gaussian(&mut self) -> Vec<f64> {
        (0..self.dim).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn unit(&mut self) -> Vec<f64> {
        loop {
            let v = self.gaussian();
            let n = norm(&v);
            if n > 1e-6 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Random unit vector orthogonal to every (orthonormal) vector in `basis`.
    fn unit_orthogonal(&mut self, basis: &[Vec<f64>]) -> Vec<f64> {
        loop {
            let mut v = self.gaussian();
            for axis in basis {
                let p: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
                for (x, a) in v.iter_mut().zip(axis) {
                    *x -= p * a;
                }
            }
            let n = norm(&v);
            if n > 1e-6 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    fn standard(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn matrix(ids: Vec<String>, dim: usize, rows: &[Vec<f64>]) -> Result<EmbeddingMatrix> {
    let rows = rows.iter().map(|r| l2_normalize_f64(r)).collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return EmbeddingMatrix::empty(dim);
    }
    EmbeddingMatrix::from_rows(ids, rows)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let dim = cfg.dim;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        dim,
    };
    let anchor = s.unit();
    let (ta, tb) = (cfg.text_concentration.sqrt(), (1.0 - cfg.text_concentration).sqrt());
    let text = |u: &[f64]| -> Vec<f64> { anchor.iter().zip(u).map(|(a, x)| ta * a + tb * x).collect() };

    let n_all = cfg.n_classes + cfg.n_anomaly_classes;
    // anchor, label and image directions form one orthonormal set
    let mut basis = vec![anchor.clone()];
    for _ in 0..2 * n_all {
        let v = s.unit_orthogonal(&basis);
        basis.push(v);
    }
    let label_dirs = &basis[1..=n_all];
    let image_dirs = &basis[n_all + 1..];
    let anchor_only = std::slice::from_ref(&anchor);
    let dict_dirs: Vec<Vec<f64>> = (0..cfg.n_dict).map(|_| s.unit_orthogonal(anchor_only)).collect();

    let normal_classes: Vec<String> = (0..cfg.n_classes).map(|i| format!("normal_{i:02}")).collect();
    let anomaly_classes: Vec<String> = (0..cfg.n_anomaly_classes).map(|i| format!("anomaly_{i:02}")).collect();
    let class_names: Vec<String> = normal_classes.iter().chain(&anomaly_classes).cloned().collect();

    let class_rows: Vec<Vec<f64>> = label_dirs.iter().map(|u| text(u)).collect();
    let class_text_embs = matrix(class_names.clone(), dim, &class_rows)?;
    let dict_rows: Vec<Vec<f64>> = dict_dirs.iter().map(|u| text(u)).collect();
    let dict_ids: Vec<String> = (0..cfg.n_dict).map(|i| format!("entry_{i:04}")).collect();
    let dictionary = Dictionary::from_embeddings(matrix(dict_ids, dim, &dict_rows)?)?;

    let image = |class: usize, s: &mut Sampler| -> (Vec<f64>, f64) {
        let bias = 1.0 + cfg.bias_amplitude * s.standard();
        let noise = s.gaussian();
        let scale = IMAGE_NOISE / (dim as f64).sqrt();
        let v: Vec<f64> = (0..dim)
            .map(|i| {
                IMAGE_CLASS_WEIGHT * image_dirs[class][i]
                    + cfg.image_alignment * label_dirs[class][i]
                    + ANCHOR_WEIGHT * bias * anchor[i]
                    + scale * noise[i]
            })
            .collect();
        (v, bias)
    };

    let mut train_rows = Vec::with_capacity(cfg.n_classes * cfg.n_train_per_class);
    let mut train_labels = Vec::with_capacity(train_rows.capacity());
    let mut train_bias = Vec::with_capacity(train_rows.capacity());
    for (c, name) in class_names.iter().enumerate().take(cfg.n_classes) {
        for _ in 0..cfg.n_train_per_class {
            let (v, b) = image(c, &mut s);
            train_rows.push(v);
            train_labels.push(name.clone());
            train_bias.push(b);
        }
    }
    let train_ids = (0..train_rows.len()).map(|i| format!("train_{i:05}")).collect();
    let train = matrix(train_ids, dim, &train_rows)?;

    let n_test = cfg.n_test_normal + cfg.n_test_anomaly;
    let mut test_rows = Vec::with_capacity(n_test);
    let mut test_labels = Vec::with_capacity(n_test);
    let mut test_is_anomaly = Vec::with_capacity(n_test);
    let mut test_bias = Vec::with_capacity(n_test);
    // spread anomalies evenly so row order carries no label signal
    let (mut done_normal, mut done_anomaly) = (0, 0);
    for i in 0..n_test {
        let take_anomaly = (i + 1) * cfg.n_test_anomaly / n_test > i * cfg.n_test_anomaly / n_test;
        let class = if take_anomaly {
            let c = cfg.n_classes + done_anomaly % cfg.n_anomaly_classes;
            done_anomaly += 1;
            c
        } else {
            let c = done_normal % cfg.n_classes;
            done_normal += 1;
            c
        };
        let (v, b) = image(class, &mut s);
        test_rows.push(v);
        test_labels.push(class_names[class].clone());
        test_is_anomaly.push(take_anomaly);
        test_bias.push(b);
    }
    let test_ids = (0..n_test).map(|i| format!("test_{i:05}")).collect();
    let test = matrix(test_ids, dim, &test_rows)?;

    Ok(SynthWorld {
        config: *cfg,
        normal_classes,
        anomaly_classes,
        train,
        train_labels,
        test,
        test_labels,
        test_is_anomaly,
        class_text_embs,
        dictionary,
        train_bias,
        test_bias,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub auroc_bliss: f64,
    pub auroc_biased: f64,
    pub auroc_knn: f64,
}

/// Generates a world and reports the AUROC of all three scoring methods.
pub fn bias_benchmark(cfg: &SynthConfig, scoring: &ScoringConfig) -> Result<BenchmarkResult> {
    let world = generate(cfg)?;
    let bank = world.bank()?;
    let auroc = |method| -> Result<f64> {
        let recs = score_batch(&world.test, &bank, Some(&world.dictionary), scoring, method)?;
        let ls = LabeledScores::new(recs.iter().map(|r| r.score).collect(), world.test_is_anomaly.clone())?;
        Ok(evaluate(&ls)?.auroc)
    };
    Ok(BenchmarkResult {
        auroc_bliss: auroc(Method::Bliss)?,
        auroc_biased: auroc(Method::Biased)?,
        auroc_knn: auroc(Method::Knn)?,
    })
}
