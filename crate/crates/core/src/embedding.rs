//! Word-vector spaces loaded from word2vec/GloVe-style text files.
//!
//! A space is immutable once built. Vectors are kept exactly as parsed (no
//! normalization); single precision storage is the default for loaded files
//! and spaces produced by projection are kept in double precision.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-letter ISO-639-1 language code, stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Language(String);

impl Language {
    pub fn new(tag: &str) -> Result<Self> {
        let tag = tag.trim();
        if tag.len() == 2 && tag.bytes().all(|b| b.is_ascii_alphabetic()) {
            Ok(Language(tag.to_ascii_lowercase()))
        } else {
            Err(Error::InvalidLanguage(tag.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Language::new(s)
    }
}

impl TryFrom<String> for Language {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Language::new(&s)
    }
}

impl From<Language> for String {
    fn from(lang: Language) -> String {
        lang.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseStrategy {
    ExactOnly,
    #[default]
    ExactThenLowercase,
}

impl FromStr for CaseStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact-only" => Ok(CaseStrategy::ExactOnly),
            "exact-then-lowercase" | "lowercase" => Ok(CaseStrategy::ExactThenLowercase),
            other => Err(Error::InvalidInput(format!("unknown case strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    #[default]
    KeepFirst,
    Error,
}

impl FromStr for DuplicatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep-first" => Ok(DuplicatePolicy::KeepFirst),
            "error" => Ok(DuplicatePolicy::Error),
            other => Err(Error::InvalidInput(format!("unknown duplicate policy {other:?}"))),
        }
    }
}

/// How surface forms are matched against a vocabulary, and how duplicate
/// vocabulary lines are treated at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LookupPolicy {
    pub case_strategy: CaseStrategy,
    pub on_duplicate_line: DuplicatePolicy,
}

impl LookupPolicy {
    pub fn exact() -> Self {
        LookupPolicy {
            case_strategy: CaseStrategy::ExactOnly,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Storage {
    fn len(&self) -> usize {
        match self {
            Storage::F32(v) => v.len(),
            Storage::F64(v) => v.len(),
        }
    }
}

const MAX_RESERVED_ROWS: usize = 20_000_000;
const MAX_RESERVED_VALUES: usize = 1 << 32;

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Keep only the first `limit` data lines.
    pub limit: Option<usize>,
    pub on_duplicate: DuplicatePolicy,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    language: Language,
    dim: usize,
    vocab: IndexSet<String>,
    storage: Storage,
    source: String,
    duplicates_skipped: usize,
}

impl EmbeddingSpace {
    /// Builds a double-precision space from explicit rows.
    pub fn from_rows<W, R>(language: Language, words: W, rows: R, source: impl Into<String>) -> Result<Self>
    where
        W: IntoIterator,
        W::Item: Into<String>,
        R: IntoIterator,
        R::Item: AsRef<[f64]>,
    {
        let mut vocab = IndexSet::new();
        for word in words {
            let word = word.into();
            if !vocab.insert(word.clone()) {
                return Err(Error::InvalidInput(format!("duplicate vocabulary entry {word:?}")));
            }
        }
        let mut data = Vec::new();
        let mut dim = None;
        let mut n_rows = 0;
        for row in rows {
            let row = row.as_ref();
            let expected = *dim.get_or_insert(row.len());
            if row.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
            n_rows += 1;
        }
        if n_rows != vocab.len() {
            return Err(Error::InvalidInput(format!(
                "{} words but {} rows",
                vocab.len(),
                n_rows
            )));
        }
        Self::from_parts(language, vocab, data, dim.unwrap_or(0), source.into())
    }

    pub(crate) fn from_parts(
        language: Language,
        vocab: IndexSet<String>,
        data: Vec<f64>,
        dim: usize,
        source: String,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be at least 1".into()));
        }
        if data.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite component in row of {:?}",
                vocab[pos / dim]
            )));
        }
        Ok(EmbeddingSpace {
            language,
            dim,
            vocab,
            storage: Storage::F64(data),
            source,
            duplicates_skipped: 0,
        })
    }

    /// Loads a text vector file with default options and an optional row limit.
    pub fn load(path: impl AsRef<Path>, language: Language, limit: Option<usize>) -> Result<Self> {
        let opts = LoadOptions {
            limit,
            ..Default::default()
        };
        Self::load_with(path, language, &opts)
    }

    pub fn load_with(path: impl AsRef<Path>, language: Language, opts: &LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::with_capacity(1 << 20, file);
        Self::read_text(reader, path, language, opts)
    }

    /// Parses `word v1 ... vd` lines with an optional `n d` header line.
    pub fn read_text<R: BufRead>(
        mut reader: R,
        path: &Path,
        language: Language,
        opts: &LoadOptions,
    ) -> Result<Self> {
        let mut buf = Vec::with_capacity(8192);
        let mut line_no = 0usize;
        let mut data_lines = 0usize;
        let mut header: Option<(usize, usize)> = None;
        let mut dim: Option<usize> = None;
        let mut vocab: IndexSet<String> = IndexSet::new();
        let mut storage = match opts.precision {
            Precision::Single => Storage::F32(Vec::new()),
            Precision::Double => Storage::F64(Vec::new()),
        };
        let mut duplicates = 0usize;

        loop {
            if opts.limit.is_some_and(|limit| data_lines >= limit) {
                break;
            }
            buf.clear();
            let read = reader
                .read_until(b'\n', &mut buf)
                .map_err(|e| Error::io(path, e))?;
            if read == 0 {
                break;
            }
            line_no += 1;
            let line = std::str::from_utf8(&buf)
                .map_err(|_| Error::parse(path, line_no, "line is not valid UTF-8"))?;
            let line = line.trim_end_matches(['\n', '\r', ' ', '\t']);
            if line.is_empty() {
                continue;
            }

            if line_no == 1 {
                if let Some((n, d)) = parse_header(line) {
                    if d == 0 {
                        return Err(Error::parse(path, line_no, "header declares dimension 0"));
                    }
                    header = Some((n, d));
                    dim = Some(d);
                    // a bogus header must not trigger a huge allocation
                    let rows = opts.limit.map_or(n, |l| l.min(n)).min(MAX_RESERVED_ROWS);
                    vocab.reserve(rows);
                    if let Some(total) = rows.checked_mul(d).filter(|&t| t <= MAX_RESERVED_VALUES) {
                        match &mut storage {
                            Storage::F32(v) => v.reserve_exact(total),
                            Storage::F64(v) => v.reserve_exact(total),
                        }
                    }
                    continue;
                }
            }
            data_lines += 1;

            let (word, rest) = line.split_once(' ').unwrap_or((line, ""));
            let before = storage.len();
            let parsed = match &mut storage {
                Storage::F32(v) => push_components::<f32>(rest, v),
                Storage::F64(v) => push_components::<f64>(rest, v),
            };
            let count = parsed.map_err(|msg| Error::parse(path, line_no, msg))?;
            let expected = *dim.get_or_insert(count);
            if count != expected {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {expected} components, found {count}"),
                ));
            }
            if expected == 0 {
                return Err(Error::parse(path, line_no, "row has no vector components"));
            }

            if vocab.contains(word) {
                match opts.on_duplicate {
                    DuplicatePolicy::KeepFirst => {
                        duplicates += 1;
                        match &mut storage {
                            Storage::F32(v) => v.truncate(before),
                            Storage::F64(v) => v.truncate(before),
                        }
                    }
                    DuplicatePolicy::Error => {
                        return Err(Error::DuplicateWord {
                            path: path.to_path_buf(),
                            line: line_no,
                            word: word.to_string(),
                        });
                    }
                }
            } else {
                vocab.insert(word.to_string());
            }
        }

        let dim = dim.ok_or_else(|| Error::parse(path, line_no, "file contains no vectors"))?;
        if let Some((n, _)) = header {
            if opts.limit.is_none() && n != data_lines {
                log::warn!(
                    "{}: header declares {} rows but {} data lines were read",
                    path.display(),
                    n,
                    data_lines
                );
            }
        }
        if duplicates > 0 {
            log::warn!(
                "{}: skipped {} duplicate vocabulary lines (kept first occurrence)",
                path.display(),
                duplicates
            );
        }

        Ok(EmbeddingSpace {
            language,
            dim,
            vocab,
            storage,
            source: path.display().to_string(),
            duplicates_skipped: duplicates,
        })
    }

    pub fn language(&self) -> &Language {
        &self.language
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of duplicate lines dropped under keep-first.
    pub fn duplicates_skipped(&self) -> usize {
        self.duplicates_skipped
    }

    pub fn words(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.vocab.iter().map(String::as_str)
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.vocab.get_index(index).map(String::as_str)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.vocab.get_index_of(word)
    }

    /// Copies row `index` into `out` as double precision.
    pub fn row_into(&self, index: usize, out: &mut [f64]) {
        let range = index * self.dim..(index + 1) * self.dim;
        match &self.storage {
            Storage::F32(v) => {
                for (o, x) in out.iter_mut().zip(&v[range]) {
                    *o = f64::from(*x);
                }
            }
            Storage::F64(v) => out.copy_from_slice(&v[range]),
        }
    }

    pub fn row(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.row_into(index, &mut out);
        out
    }

    /// Resolves a surface form to a row index under `policy`.
    pub fn lookup_index(&self, term: &str, policy: &LookupPolicy) -> Option<usize> {
        if let Some(i) = self.vocab.get_index_of(term) {
            return Some(i);
        }
        match policy.case_strategy {
            CaseStrategy::ExactOnly => None,
            CaseStrategy::ExactThenLowercase => {
                let lower = term.to_lowercase();
                if lower == term {
                    None
                } else {
                    self.vocab.get_index_of(lower.as_str())
                }
            }
        }
    }

    pub fn lookup(&self, term: &str, policy: &LookupPolicy) -> Option<Vec<f64>> {
        self.lookup_index(term, policy).map(|i| self.row(i))
    }

    /// Sub-space holding only the given words (those present), in this
    /// space's row order.
    pub fn restrict<'a, I>(&self, words: I, policy: &LookupPolicy) -> EmbeddingSpace
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut keep: Vec<usize> = words
            .into_iter()
            .filter_map(|w| self.lookup_index(w, policy))
            .collect();
        keep.sort_unstable();
        keep.dedup();
        let mut vocab = IndexSet::with_capacity(keep.len());
        let storage = match &self.storage {
            Storage::F32(v) => Storage::F32(
                keep.iter()
                    .flat_map(|&i| v[i * self.dim..(i + 1) * self.dim].iter().copied())
                    .collect(),
            ),
            Storage::F64(v) => Storage::F64(
                keep.iter()
                    .flat_map(|&i| v[i * self.dim..(i + 1) * self.dim].iter().copied())
                    .collect(),
            ),
        };
        for &i in &keep {
            vocab.insert(self.vocab[i].clone());
        }
        EmbeddingSpace {
            language: self.language.clone(),
            dim: self.dim,
            vocab,
            storage,
            source: self.source.clone(),
            duplicates_skipped: 0,
        }
    }

    /// New double-precision space with every row passed through `f`, which
    /// writes a row of `out_dim` components.
    pub(crate) fn map_rows<F>(&self, out_dim: usize, source: String, mut f: F) -> Result<EmbeddingSpace>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut row = vec![0.0; self.dim];
        let mut data = vec![0.0; self.len() * out_dim];
        for (i, out) in data.chunks_exact_mut(out_dim.max(1)).enumerate() {
            self.row_into(i, &mut row);
            f(&row, out);
        }
        Self::from_parts(self.language.clone(), self.vocab.clone(), data, out_dim, source)
    }

    /// Writes the space in headered text form (`n d` then one row per line).
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.vocab.iter().enumerate() {
            out.write_all(word.as_bytes())?;
            let range = i * self.dim..(i + 1) * self.dim;
            match &self.storage {
                Storage::F32(v) => {
                    for x in &v[range] {
                        write!(out, " {x}")?;
                    }
                }
                Storage::F64(v) => {
                    for x in &v[range] {
                        write!(out, " {x}")?;
                    }
                }
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_text(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut tokens = line.split_ascii_whitespace();
    let n = tokens.next()?.parse().ok()?;
    let d = tokens.next()?.parse().ok()?;
    tokens.next().is_none().then_some((n, d))
}

trait Component: FromStr + Copy {
    fn finite(self) -> bool;
}

impl Component for f32 {
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Component for f64 {
    fn finite(self) -> bool {
        self.is_finite()
    }
}

fn push_components<T: Component>(rest: &str, out: &mut Vec<T>) -> std::result::Result<usize, String> {
    let mut count = 0;
    for token in rest.split_ascii_whitespace() {
        let value: T = token
            .parse()
            .map_err(|_| format!("component {} is not a number: {token:?}", count + 1))?;
        if !value.finite() {
            return Err(format!("component {} is not finite: {token:?}", count + 1));
        }
        out.push(value);
        count += 1;
    }
    Ok(count)
}
