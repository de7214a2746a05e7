//! Bias-corrected similarity scoring for semantic anomaly detection over
//! pre-extracted vision-language embeddings.
//!
//! A test image embedding is scored against a memory bank of labelled normal
//! images. The internal class score standardizes its similarity to each normal
//! class label; the external text score standardizes its similarity to its
//! closest entries of a large generic text dictionary, which cancels the
//! tendency of some images to be close to *all* text. The final score is
//! `min_i (IC_i + lambda * ET_i)` over normal classes; higher is more anomalous.
//!
//! ```
//! use bliss_core::{bank, math::EmbeddingMatrix, scoring};
//!
//! let ids = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
//! let train = EmbeddingMatrix::from_raw(ids("t", 2), 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
//! let labels = EmbeddingMatrix::from_raw(vec!["cat".into()], 2, vec![1.0, 0.0]).unwrap();
//! let dict = bank::Dictionary::from_embeddings(
//!     EmbeddingMatrix::from_raw(ids("d", 1), 2, vec![0.0, 1.0]).unwrap(),
//! )
//! .unwrap();
//! let bank = bank::build_bank(&train, &["cat", "cat"], &labels, &["cat"]).unwrap();
//! let bank = bank::attach_dictionary(bank, &dict).unwrap();
//! let cfg = scoring::ScoringConfig { k: 1, ..Default::default() };
//! let rec = scoring::bliss_score(&[1.0, 0.0], &bank, &dict, &cfg).unwrap();
//! assert!((rec.score + 1.5).abs() < 1e-6);
//! ```

pub mod bank;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod math;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
