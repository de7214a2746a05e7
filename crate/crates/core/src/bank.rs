//! The labelled-normal memory bank and the external text dictionary.
//!
//! A [`NormalMemoryBank`] partitions the normal training embeddings by class
//! and precomputes, for every class, the mean and standard deviation of the
//! similarities between that class's training images and its label
//! embedding. Attaching a [`Dictionary`] fills a dense `classes × entries`
//! table of the same statistics against every dictionary entry, so scoring
//! only ever looks statistics up.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::{check_dim, moments_iter, sim, EmbeddingMatrix, MomentStats};

/// Embedded external text entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    entries: Vec<String>,
    embs: EmbeddingMatrix,
    fingerprint: [u8; 32],
}

impl Dictionary {
    /// `entries[j]` is the source string of row `j` of `embs`. Entries may
    /// repeat; row ids may not.
    pub fn new(entries: Vec<String>, embs: EmbeddingMatrix) -> Result<Self> {
        if embs.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        if entries.len() != embs.len() {
            return Err(Error::LengthMismatch {
                left: entries.len(),
                right: embs.len(),
            });
        }
        let fingerprint = fingerprint(&embs);
        Ok(Self {
            entries,
            embs,
            fingerprint,
        })
    }

    /// Uses the row ids as entry strings.
    pub fn from_embeddings(embs: EmbeddingMatrix) -> Result<Self> {
        let entries = embs.ids().to_vec();
        Self::new(entries, embs)
    }

    pub fn len(&self) -> usize {
        self.embs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embs.dim()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embs
    }

    pub fn ids(&self) -> &[String] {
        self.embs.ids()
    }
}

fn fingerprint(embs: &EmbeddingMatrix) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((embs.dim() as u64).to_le_bytes());
    for id in embs.ids() {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
    }
    for x in embs.as_slice() {
        h.update(x.to_le_bytes());
    }
    h.finalize().into()
}

/// Drops every entry whose source string equals one of `blocked`, ignoring case.
pub fn exclude_entries(dict: &Dictionary, blocked: &[impl AsRef<str>]) -> Result<Dictionary> {
    if blocked.is_empty() {
        return Ok(dict.clone());
    }
    let blocked: HashSet<String> = blocked.iter().map(|b| b.as_ref().to_lowercase()).collect();
    let keep: Vec<usize> = dict
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| !blocked.contains(&e.to_lowercase()))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let entries = keep.iter().map(|&i| dict.entries[i].clone()).collect();
    Dictionary::new(entries, dict.embs.select(&keep)?)
}

/// Per-(class, dictionary entry) similarity statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DictStats {
    fingerprint: [u8; 32],
    n_entries: usize,
    table: Vec<MomentStats>,
}

impl DictStats {
    pub fn n_entries(&self) -> usize {
        self.n_entries
    }

    pub fn get(&self, class: usize, entry: usize) -> MomentStats {
        self.table[class * self.n_entries + entry]
    }

    /// Statistics of one class against every entry.
    pub fn class_row(&self, class: usize) -> &[MomentStats] {
        &self.table[class * self.n_entries..(class + 1) * self.n_entries]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalMemoryBank {
    class_names: Vec<String>,
    class_text_embs: EmbeddingMatrix,
    train_by_class: Vec<EmbeddingMatrix>,
    class_stats: Vec<MomentStats>,
    dict_stats: Option<DictStats>,
}

/// Builds the bank from labelled normal training embeddings.
///
/// Row `i` of `class_text_embs` is the label embedding of `class_names[i]`.
/// Training rows keep their input order within each class.
pub fn build_bank(
    train_embs: &EmbeddingMatrix,
    train_labels: &[impl AsRef<str>],
    class_text_embs: &EmbeddingMatrix,
    class_names: &[impl AsRef<str>],
) -> Result<NormalMemoryBank> {
    if class_names.is_empty() {
        return Err(Error::EmptyInput);
    }
    if train_labels.len() != train_embs.len() {
        return Err(Error::LengthMismatch {
            left: train_embs.len(),
            right: train_labels.len(),
        });
    }
    if class_names.len() != class_text_embs.len() {
        return Err(Error::LengthMismatch {
            left: class_names.len(),
            right: class_text_embs.len(),
        });
    }
    check_dim(class_text_embs.dim(), train_embs.dim())?;

    let class_names: Vec<String> = class_names.iter().map(|c| c.as_ref().to_owned()).collect();
    let mut index = HashMap::with_capacity(class_names.len());
    for (i, c) in class_names.iter().enumerate() {
        if index.insert(c.as_str(), i).is_some() {
            return Err(Error::DuplicateId(c.clone()));
        }
    }

    let mut members = vec![Vec::new(); class_names.len()];
    for (row, label) in train_labels.iter().enumerate() {
        let label = label.as_ref();
        let &c = index
            .get(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))?;
        members[c].push(row);
    }

    let mut train_by_class = Vec::with_capacity(class_names.len());
    let mut class_stats = Vec::with_capacity(class_names.len());
    for (c, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::EmptyClass(class_names[c].clone()));
        }
        let part = train_embs.select(rows)?;
        let label = class_text_embs.row(c);
        class_stats.push(moments_iter(part.rows().map(|z| sim(z, label)))?);
        train_by_class.push(part);
    }

    Ok(NormalMemoryBank {
        class_names,
        class_text_embs: class_text_embs.clone(),
        train_by_class,
        class_stats,
        dict_stats: None,
    })
}

/// Precomputes the class × entry statistics table for `dict`.
///
/// Re-attaching the same dictionary reproduces the same table.
pub fn attach_dictionary(mut bank: NormalMemoryBank, dict: &Dictionary) -> Result<NormalMemoryBank> {
    check_dim(bank.dim(), dict.dim())?;
    let t = dict.len();
    let n = bank.n_classes();
    // column-major fill so the work parallelizes over entries
    let columns: Vec<Vec<MomentStats>> = (0..t)
        .into_par_iter()
        .map(|j| {
            let d = dict.embs.row(j);
            bank.train_by_class
                .iter()
                .map(|part| moments_iter(part.rows().map(|z| sim(z, d))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(n * t);
    for i in 0..n {
        table.extend(columns.iter().map(|col| col[i]));
    }
    bank.dict_stats = Some(DictStats {
        fingerprint: dict.fingerprint,
        n_entries: t,
        table,
    });
    Ok(bank)
}

impl NormalMemoryBank {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.class_text_embs.dim()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_text_embs(&self) -> &EmbeddingMatrix {
        &self.class_text_embs
    }

    pub fn class_index(&self, class: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::UnknownClass(class.to_owned()))
    }

    pub fn train_embs(&self, class: usize) -> &EmbeddingMatrix {
        &self.train_by_class[class]
    }

    pub fn train_count(&self) -> usize {
        self.train_by_class.iter().map(EmbeddingMatrix::len).sum()
    }

    /// Training rows of every class, class by class.
    pub fn all_train_rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.train_by_class.iter().flat_map(|m| m.rows())
    }

    pub fn class_stats(&self, class: usize) -> MomentStats {
        self.class_stats[class]
    }

    pub fn dict_stats(&self) -> Option<&DictStats> {
        self.dict_stats.as_ref()
    }

    /// The statistics table, provided it was built from `dict`.
    pub fn dict_stats_for(&self, dict: &Dictionary) -> Result<&DictStats> {
        match &self.dict_stats {
            Some(s) if s.fingerprint == dict.fingerprint => Ok(s),
            _ => Err(Error::MissingDictStats),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::l2_normalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(ids: &[&str], rows: &[&[f32]]) -> EmbeddingMatrix {
        let dim = rows[0].len();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        EmbeddingMatrix::from_raw(ids.iter().map(|s| s.to_string()).collect(), dim, data).unwrap()
    }

    fn two_class_bank() -> NormalMemoryBank {
        let train = mat(
            &["a0", "a1", "b0", "b1"],
            &[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0]],
        );
        let labels = ["A", "A", "B", "B"];
        let classes = mat(&["A", "B"], &[&[1.0, 0.0], &[0.0, 1.0]]);
        build_bank(&train, &labels, &classes, &["A", "B"]).unwrap()
    }

    #[test]
    fn build_bank_hand_example() {
        let bank = two_class_bank();
        assert_eq!(bank.class_stats(0), MomentStats { mean: 0.5, std: 0.5 });
        assert_eq!(bank.class_stats(1), MomentStats { mean: 0.5, std: 0.5 });
        assert_eq!(bank.train_count(), 4);
        assert!(bank.dict_stats().is_none());
    }

    #[test]
    fn single_sample_class() {
        let train = mat(&["x"], &[&[0.3, 0.4]]);
        let classes = mat(&["A"], &[&[0.3, 0.4]]);
        let bank = build_bank(&train, &["A"], &classes, &["A"]).unwrap();
        let s = bank.class_stats(0);
        assert!((s.mean - 1.0).abs() < 1e-6);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn build_bank_errors() {
        let train = mat(&["a0", "h0"], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let classes = mat(&["A", "B"], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            build_bank(&train, &["A", "horse"], &classes, &["A", "B"]),
            Err(Error::UnknownLabel(l)) if l == "horse"
        ));
        assert!(matches!(
            build_bank(&train, &["A", "A"], &classes, &["A", "B"]),
            Err(Error::EmptyClass(c)) if c == "B"
        ));
        let classes3 = mat(&["A"], &[&[1.0, 0.0, 0.0]]);
        assert!(matches!(
            build_bank(&train, &["A", "A"], &classes3, &["A"]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn attach_dictionary_hand_example() {
        let dict = Dictionary::from_embeddings(mat(&["d0"], &[&[0.0, 1.0]])).unwrap();
        let bank = attach_dictionary(two_class_bank(), &dict).unwrap();
        let s = bank.dict_stats_for(&dict).unwrap();
        assert_eq!(s.get(0, 0), MomentStats { mean: 0.5, std: 0.5 });
        assert_eq!(s.n_entries(), 1);
    }

    #[test]
    fn dictionary_entry_equal_to_label_reproduces_class_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 6;
        let data: Vec<f32> = (0..20 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let train = EmbeddingMatrix::from_raw((0..20).map(|i| format!("t{i}")).collect(), d, data).unwrap();
        let labels: Vec<&str> = (0..20).map(|i| if i % 2 == 0 { "A" } else { "B" }).collect();
        let cdata: Vec<f32> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let classes = EmbeddingMatrix::from_raw(vec!["A".into(), "B".into()], d, cdata).unwrap();
        let bank = build_bank(&train, &labels, &classes, &["A", "B"]).unwrap();
        let dict = Dictionary::new(vec!["a".into(), "b".into()], classes.clone()).unwrap();
        let bank = attach_dictionary(bank, &dict).unwrap();
        let s = bank.dict_stats_for(&dict).unwrap();
        assert_eq!(s.get(0, 0), bank.class_stats(0));
        assert_eq!(s.get(1, 1), bank.class_stats(1));
    }

    #[test]
    fn attach_dictionary_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 8;
        let n = 30;
        let data: Vec<f32> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let train = EmbeddingMatrix::from_raw((0..n).map(|i| format!("t{i}")).collect(), d, data).unwrap();
        let labels: Vec<String> = (0..n).map(|i| format!("c{}", i % 3)).collect();
        let cdata: Vec<f32> = (0..3 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let names = ["c0", "c1", "c2"];
        let classes = EmbeddingMatrix::from_raw(names.iter().map(|s| s.to_string()).collect(), d, cdata).unwrap();
        let ddata: Vec<f32> = (0..100 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dict_embs = EmbeddingMatrix::from_raw((0..100).map(|i| format!("d{i}")).collect(), d, ddata).unwrap();
        let dict = Dictionary::from_embeddings(dict_embs.clone()).unwrap();
        let bank = attach_dictionary(build_bank(&train, &labels, &classes, &names).unwrap(), &dict).unwrap();
        let stats = bank.dict_stats_for(&dict).unwrap();
        for (ci, cname) in names.iter().enumerate() {
            for j in 0..100 {
                let mut vals = Vec::new();
                for (r, label) in labels.iter().enumerate().take(n) {
                    if label == cname {
                        let z = train.row(r);
                        let e = dict_embs.row(j);
                        let dot: f64 = z.iter().zip(e).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
                        vals.push(dot);
                    }
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                let got = stats.get(ci, j);
                assert!((got.mean - mean).abs() < 1e-9);
                assert!((got.std - var.sqrt()).abs() < 1e-9);
            }
        }
        // re-attachment is idempotent
        let again = attach_dictionary(bank.clone(), &dict).unwrap();
        assert_eq!(again, bank);
    }

    #[test]
    fn dict_stats_are_bound_to_their_dictionary() {
        let d1 = Dictionary::from_embeddings(mat(&["d0"], &[&[0.0, 1.0]])).unwrap();
        let d2 = Dictionary::from_embeddings(mat(&["d0"], &[&[1.0, 0.0]])).unwrap();
        let bank = two_class_bank();
        assert!(matches!(bank.dict_stats_for(&d1), Err(Error::MissingDictStats)));
        let bank = attach_dictionary(bank, &d1).unwrap();
        assert!(bank.dict_stats_for(&d1).is_ok());
        assert!(matches!(bank.dict_stats_for(&d2), Err(Error::MissingDictStats)));
        let d3 = Dictionary::from_embeddings(mat(&["d0"], &[&[0.0, 1.0, 0.0]])).unwrap();
        assert!(matches!(attach_dictionary(bank, &d3), Err(Error::DimMismatch { .. })));
    }

    fn word_dict(words: &[String]) -> Dictionary {
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f32> = (0..words.len() * d).map(|_| rng.random_range(0.1..1.0)).collect();
        let ids = (0..words.len()).map(|i| format!("e{i}")).collect();
        Dictionary::new(words.to_vec(), EmbeddingMatrix::from_raw(ids, d, data).unwrap()).unwrap()
    }

    #[test]
    fn exclude_entries_counts() {
        let mut words: Vec<String> = (0..1650).map(|i| format!("concept {i}")).collect();
        let overlap: Vec<String> = (0..200).map(|i| format!("Tiny Label {i}")).collect();
        words.extend(overlap.iter().cloned());
        let dict = word_dict(&words);
        assert_eq!(dict.len(), 1850);
        // blocked list uses different casing and has extra labels that are absent
        let mut blocked: Vec<String> = overlap.iter().map(|w| w.to_uppercase()).collect();
        blocked.push("not present".into());
        let pruned = exclude_entries(&dict, &blocked).unwrap();
        assert_eq!(pruned.len(), 1650);
        assert!(pruned.entries().iter().all(|e| e.starts_with("concept")));
        // substring matches are not removed
        let pruned = exclude_entries(&dict, &["concept"]).unwrap();
        assert_eq!(pruned.len(), 1850);

        let none: [&str; 0] = [];
        assert_eq!(exclude_entries(&dict, &none).unwrap(), dict);
        assert!(matches!(exclude_entries(&dict, &words), Err(Error::EmptyDictionary)));
    }

    #[test]
    fn empty_dictionary_rejected() {
        let empty = EmbeddingMatrix::empty(3).unwrap();
        assert!(matches!(Dictionary::from_embeddings(empty), Err(Error::EmptyDictionary)));
    }

    #[test]
    fn reordering_within_class_keeps_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = 5;
        let rows: Vec<Vec<f32>> = (0..12)
            .map(|_| l2_normalize(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f32>>()).unwrap().into_inner())
            .collect();
        let classes = EmbeddingMatrix::from_raw(vec!["A".into()], d, vec![1.0, 0.5, 0.0, -0.5, 0.2]).unwrap();
        let build = |order: &[usize]| {
            let data = order.iter().flat_map(|&i| rows[i].clone()).collect();
            let ids = order.iter().map(|i| format!("r{i}")).collect();
            let m = EmbeddingMatrix::new(ids, d, data).unwrap();
            build_bank(&m, &vec!["A"; order.len()], &classes, &["A"]).unwrap()
        };
        let fwd: Vec<usize> = (0..12).collect();
        let rev: Vec<usize> = (0..12).rev().collect();
        let (a, b) = (build(&fwd).class_stats(0), build(&rev).class_stats(0));
        assert!((a.mean - b.mean).abs() < 1e-9 && (a.std - b.std).abs() < 1e-9);
    }
}
