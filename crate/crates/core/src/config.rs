//! Run configuration files.
//!
//! A config is a flat TOML document; every key is optional except
//! `embeddings`:
//!
//! ```toml
//! embeddings = ["en:vectors/wiki.en.vec", "de:vectors/wiki.de.vec"]
//! lexicons = ["builtin", "xweat.lex"]
//! tests = ["T1", "T2", "T6"]
//! metrics = ["cosine", "euclidean"]
//! permutations = 100000
//! exact_threshold = 200000
//! seed = 42
//! alpha = 0.05
//! coverage_threshold = 0.2
//! max_vocab = 200000
//! case = "exact-then-lowercase"
//! duplicates = "keep-first"
//! alignments = ["de:en:dicts/de-en.tsv"]
//! normalize_before_fit = "none"
//! monolingual = true
//! workers = 4
//! format = "json"
//! out = "report.json"
//! ```
//!
//! Relative paths are taken relative to the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::embedding::Language;
use crate::error::{Error, Result};
use crate::runner::{AlignmentJob, EmbeddingSpec, LexiconSource, RunConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    embeddings: Option<Vec<String>>,
    lexicons: Option<Vec<String>>,
    tests: Option<Vec<String>>,
    metrics: Option<Vec<String>>,
    permutations: Option<u64>,
    exact_threshold: Option<u64>,
    seed: Option<u64>,
    alpha: Option<f64>,
    coverage_threshold: Option<f64>,
    max_vocab: Option<usize>,
    case: Option<String>,
    duplicates: Option<String>,
    alignments: Option<Vec<String>>,
    normalize_before_fit: Option<String>,
    monolingual: Option<bool>,
    workers: Option<usize>,
    format: Option<String>,
    out: Option<String>,
}

fn resolve_path(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// `lang:path`.
pub fn parse_embedding_spec(s: &str, base: &Path) -> Result<EmbeddingSpec> {
    let (lang, path) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidInput(format!("expected LANG:PATH, got {s:?}")))?;
    Ok(EmbeddingSpec {
        language: Language::new(lang)?,
        path: resolve_path(base, path),
    })
}

/// `src:tgt:dictionary`.
pub fn parse_alignment_job(s: &str, base: &Path) -> Result<AlignmentJob> {
    let mut parts = s.splitn(3, ':');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(src), Some(tgt), Some(path)) if !path.is_empty() => Ok(AlignmentJob {
            source: Language::new(src)?,
            target: Language::new(tgt)?,
            dictionary: resolve_path(base, path),
        }),
        _ => Err(Error::InvalidInput(format!("expected SRC:TGT:DICTIONARY, got {s:?}"))),
    }
}

pub fn parse_lexicon_source(s: &str, base: &Path) -> LexiconSource {
    if s == "builtin" {
        LexiconSource::Builtin
    } else {
        LexiconSource::File(resolve_path(base, s))
    }
}

pub fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>> {
    items.iter().map(|s| s.trim().parse()).collect()
}

/// Parses config text; `base` anchors relative paths.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig> {
    let f: FileConfig = toml::from_str(text).map_err(|e| Error::InvalidInput(e.message().to_string()))?;
    let mut c = RunConfig::default();
    if let Some(v) = f.embeddings {
        c.embeddings = v.iter().map(|s| parse_embedding_spec(s, base)).collect::<Result<_>>()?;
    }
    if let Some(v) = f.lexicons {
        c.lexicons = v.iter().map(|s| parse_lexicon_source(s, base)).collect();
    }
    if let Some(v) = f.tests {
        c.tests = Some(parse_list(&v)?);
    }
    if let Some(v) = f.metrics {
        c.metrics = parse_list(&v)?;
    }
    if let Some(v) = f.permutations {
        c.plan.num_samples = v;
    }
    if let Some(v) = f.exact_threshold {
        c.plan.exact_threshold = v;
    }
    if let Some(v) = f.seed {
        c.plan.seed = v;
    }
    if let Some(v) = f.alpha {
        c.plan.alpha = v;
    }
    if let Some(v) = f.coverage_threshold {
        c.coverage_threshold = v;
    }
    c.max_vocab = f.max_vocab;
    if let Some(v) = f.case {
        c.policy.case_strategy = v.parse()?;
    }
    if let Some(v) = f.duplicates {
        c.policy.on_duplicate_line = v.parse()?;
    }
    if let Some(v) = f.alignments {
        c.alignments = v.iter().map(|s| parse_alignment_job(s, base)).collect::<Result<_>>()?;
    }
    if let Some(v) = f.normalize_before_fit {
        c.normalization = v.parse()?;
    }
    c.monolingual = f.monolingual;
    if let Some(v) = f.workers {
        c.workers = v;
    }
    if let Some(v) = f.format {
        c.format = v.parse()?;
    }
    c.out = f.out.map(|p| resolve_path(base, &p));
    Ok(c)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
