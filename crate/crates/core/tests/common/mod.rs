#![allow(dead_code)]

use bliss_core::bank::{attach_dictionary, build_bank, Dictionary, NormalMemoryBank};
use bliss_core::math::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_matrix(rng: &mut ChaCha8Rng, prefix: &str, n: usize, dim: usize) -> EmbeddingMatrix {
    let data: Vec<f32> = (0..n * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let ids = (0..n).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingMatrix::from_raw(ids, dim, data).unwrap()
}

pub struct Fixture {
    pub bank: NormalMemoryBank,
    pub dict: Dictionary,
    pub test: EmbeddingMatrix,
    pub train: EmbeddingMatrix,
    pub train_labels: Vec<String>,
    pub class_text: EmbeddingMatrix,
    pub class_names: Vec<String>,
}

/// Random bank with `n_classes` classes of `per_class` rows each.
pub fn fixture(seed: u64, n_classes: usize, per_class: usize, n_dict: usize, n_test: usize, dim: usize) -> Fixture {
    let mut r = rng(seed);
    let class_names: Vec<String> = (0..n_classes).map(|i| format!("class_{i}")).collect();
    let class_text = unit_matrix(&mut r, "label_", n_classes, dim);
    let train = unit_matrix(&mut r, "train_", n_classes * per_class, dim);
    let train_labels: Vec<String> = (0..n_classes * per_class)
        .map(|i| class_names[i % n_classes].clone())
        .collect();
    let dict = Dictionary::from_embeddings(unit_matrix(&mut r, "entry_", n_dict, dim)).unwrap();
    let test = unit_matrix(&mut r, "test_", n_test, dim);
    let bank = build_bank(&train, &train_labels, &class_text, &class_names).unwrap();
    let bank = attach_dictionary(bank, &dict).unwrap();
    Fixture {
        bank,
        dict,
        test,
        train,
        train_labels,
        class_text,
        class_names,
    }
}

/// Sequential f64 cosine similarity of two unit rows, clamped.
pub fn naive_sim(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc.clamp(-1.0, 1.0)
}

/// Two-pass population mean and std.
pub fn naive_moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Indices of the `k` largest values; ties go to the lower index.
pub fn sort_topk(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
