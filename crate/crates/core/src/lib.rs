//! Bias measurement in word-embedding spaces with WEAT-style association
//! tests, permutation significance, and Procrustes-aligned cross-lingual
//! spaces.

pub mod align;
pub mod config;
pub mod embedding;
pub mod error;
pub mod lexicon;
pub mod permutation;
pub mod report;
pub mod runner;
pub mod weat;

pub use embedding::{EmbeddingSpace, Language, LookupPolicy};
pub use error::{Error, Result};
pub use lexicon::{BiasTest, ResolvedTest, TestId};
pub use weat::Metric;
