//! Bias test definitions and their resolution against embedding spaces.
//!
//! Lexicon files are organised in blocks:
//!
//! ```text
//! # comment
//! [T1 de attr_A]
//! friend = Freund|Freundin
//! health = Gesundheit
//! Liebe
//! ```
//!
//! Each `(test id, language)` pair must define all four sets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingSpace, Language, LookupPolicy};
use crate::error::{Error, Result};

pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.20;

const BUILTIN_ENGLISH: &str = include_str!("../data/weat_en.lex");

/// One of the ten WEAT tests, `T1` through `T10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TestId(u8);

impl TestId {
    pub fn new(n: u8) -> Result<Self> {
        if (1..=10).contains(&n) {
            Ok(TestId(n))
        } else {
            Err(Error::InvalidInput(format!("unknown test id T{n}")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = TestId> {
        (1..=10).map(TestId)
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix(['T', 't'])
            .and_then(|n| n.parse::<u8>().ok())
            .ok_or_else(|| Error::InvalidInput(format!("unknown test id {s:?}")))
            .and_then(TestId::new)
    }
}

impl TryFrom<String> for TestId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestId> for String {
    fn from(id: TestId) -> String {
        id.to_string()
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "target_X")]
    TargetX,
    #[serde(rename = "target_Y")]
    TargetY,
    #[serde(rename = "attr_A")]
    AttrA,
    #[serde(rename = "attr_B")]
    AttrB,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::TargetX, Role::TargetY, Role::AttrA, Role::AttrB];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::TargetX => "target_X",
            Role::TargetY => "target_Y",
            Role::AttrA => "attr_A",
            Role::AttrB => "attr_B",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown role {s:?}")))
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A stimulus and its surface forms (e.g. both gendered forms of a noun).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermGroup {
    canonical: String,
    variants: Vec<String>,
}

impl TermGroup {
    pub fn new(canonical: impl Into<String>, variants: Vec<String>) -> Result<Self> {
        let canonical = canonical.into();
        if variants.is_empty() {
            return Err(Error::InvalidInput(format!("stimulus {canonical:?} has no surface forms")));
        }
        for (i, v) in variants.iter().enumerate() {
            if v.is_empty() {
                return Err(Error::InvalidInput(format!("stimulus {canonical:?} has an empty form")));
            }
            if variants[..i].contains(v) {
                return Err(Error::InvalidInput(format!(
                    "stimulus {canonical:?} repeats form {v:?}"
                )));
            }
        }
        Ok(TermGroup { canonical, variants })
    }

    pub fn single(form: impl Into<String>) -> Self {
        let form = form.into();
        TermGroup {
            canonical: form.clone(),
            variants: vec![form],
        }
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn variants(&self) -> &[String] {
        &self.variants
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTest {
    pub id: TestId,
    pub target_x: Vec<TermGroup>,
    pub target_y: Vec<TermGroup>,
    pub attr_a: Vec<TermGroup>,
    pub attr_b: Vec<TermGroup>,
    pub target_language: Language,
    pub attribute_language: Language,
}

impl BiasTest {
    pub fn new(
        id: TestId,
        language: Language,
        target_x: Vec<TermGroup>,
        target_y: Vec<TermGroup>,
        attr_a: Vec<TermGroup>,
        attr_b: Vec<TermGroup>,
    ) -> Result<Self> {
        let test = BiasTest {
            id,
            target_x,
            target_y,
            attr_a,
            attr_b,
            target_language: language.clone(),
            attribute_language: language,
        };
        for role in Role::ALL {
            if test.set(role).is_empty() {
                return Err(Error::EmptySet(role.as_str()));
            }
        }
        Ok(test)
    }

    pub fn set(&self, role: Role) -> &[TermGroup] {
        match role {
            Role::TargetX => &self.target_x,
            Role::TargetY => &self.target_y,
            Role::AttrA => &self.attr_a,
            Role::AttrB => &self.attr_b,
        }
    }

    pub fn is_cross_lingual(&self) -> bool {
        self.target_language != self.attribute_language
    }

    fn language_for(&self, role: Role) -> &Language {
        match role {
            Role::TargetX | Role::TargetY => &self.target_language,
            Role::AttrA | Role::AttrB => &self.attribute_language,
        }
    }

    /// Every surface form used by the sets in `language`.
    pub fn forms_in<'a>(&'a self, language: &'a Language) -> impl Iterator<Item = &'a str> + 'a {
        Role::ALL
            .into_iter()
            .filter(move |r| self.language_for(*r) == language)
            .flat_map(move |r| self.set(r))
            .flat_map(|g| g.variants().iter().map(String::as_str))
    }
}

/// The built-in English T1–T10 definitions.
pub fn builtin_english() -> Vec<BiasTest> {
    parse_lexicon(BUILTIN_ENGLISH, Path::new("<builtin:weat_en.lex>"))
        .expect("built-in lexicon is well formed")
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Vec<BiasTest>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text, path)
}

struct Block {
    header_line: usize,
    sets: [Option<Vec<TermGroup>>; 4],
}

/// Parses lexicon text; one `BiasTest` per `(test id, language)` block group,
/// in order of first appearance.
pub fn parse_lexicon(text: &str, path: &Path) -> Result<Vec<BiasTest>> {
    let mut blocks: IndexMap<(TestId, Language), Block> = IndexMap::new();
    let mut current: Option<(TestId, Language, Role)> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(path, line_no, "unterminated block header"))?;
            let tokens: Vec<&str> = inner.split_whitespace().collect();
            let [id, lang, role] = tokens[..] else {
                return Err(Error::parse(
                    path,
                    line_no,
                    "block header must be [test_id language role]",
                ));
            };
            let id: TestId = id.parse().map_err(|e: Error| Error::parse(path, line_no, e.to_string()))?;
            let lang = Language::new(lang).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            let role: Role = role.parse().map_err(|e: Error| Error::parse(path, line_no, e.to_string()))?;
            let block = blocks.entry((id, lang.clone())).or_insert_with(|| Block {
                header_line: line_no,
                sets: Default::default(),
            });
            if block.sets[role.index()].is_some() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("{id} {lang} {role} defined twice"),
                ));
            }
            block.sets[role.index()] = Some(Vec::new());
            current = Some((id, lang, role));
            continue;
        }

        let Some((id, lang, role)) = &current else {
            return Err(Error::parse(path, line_no, "stimulus outside of any block"));
        };
        let group = parse_stimulus(line).map_err(|e| Error::parse(path, line_no, e))?;
        let set = blocks
            .get_mut(&(*id, lang.clone()))
            .and_then(|b| b.sets[role.index()].as_mut())
            .expect("current block exists");
        if set.iter().any(|g| g.canonical == group.canonical) {
            return Err(Error::parse(
                path,
                line_no,
                format!("stimulus {:?} repeated in {id} {lang} {role}", group.canonical),
            ));
        }
        set.push(group);
    }

    blocks
        .into_iter()
        .map(|((id, lang), block)| {
            let Block { header_line, sets } = block;
            let [x, y, a, b] = sets;
            let take = |set: Option<Vec<TermGroup>>, role: Role| match set {
                None => Err(Error::parse(
                    path,
                    header_line,
                    format!("{id} {lang} has no {role} block"),
                )),
                Some(s) if s.is_empty() => Err(Error::parse(
                    path,
                    header_line,
                    format!("{id} {lang} has an empty {role} set"),
                )),
                Some(s) => Ok(s),
            };
            let x = take(x, Role::TargetX)?;
            let y = take(y, Role::TargetY)?;
            let a = take(a, Role::AttrA)?;
            let b = take(b, Role::AttrB)?;
            BiasTest::new(id, lang, x, y, a, b)
        })
        .collect()
}

fn parse_stimulus(line: &str) -> std::result::Result<TermGroup, String> {
    match line.split_once('=') {
        None => {
            if line.contains('|') {
                return Err("variant list needs a canonical name (`canonical = a|b`)".into());
            }
            Ok(TermGroup::single(line))
        }
        Some((canonical, forms)) => {
            let canonical = canonical.trim();
            if canonical.is_empty() {
                return Err("empty canonical stimulus".into());
            }
            let variants: Vec<String> = forms.split('|').map(|f| f.trim().to_string()).collect();
            TermGroup::new(canonical, variants).map_err(|e| e.to_string())
        }
    }
}

/// Pairs L1 targets with L2 attributes, and L2 targets with L1 attributes.
pub fn make_cross_lingual(l1: &BiasTest, l2: &BiasTest) -> Result<(BiasTest, BiasTest)> {
    if l1.id != l2.id {
        return Err(Error::InvalidInput(format!(
            "cannot pair {} with {}",
            l1.id, l2.id
        )));
    }
    if l1.target_language == l2.target_language {
        return Err(Error::InvalidInput(format!(
            "cross-lingual pairing needs two languages, got {} twice",
            l1.target_language
        )));
    }
    let first = BiasTest {
        id: l1.id,
        target_x: l1.target_x.clone(),
        target_y: l1.target_y.clone(),
        attr_a: l2.attr_a.clone(),
        attr_b: l2.attr_b.clone(),
        target_language: l1.target_language.clone(),
        attribute_language: l2.attribute_language.clone(),
    };
    let second = BiasTest {
        id: l1.id,
        target_x: l2.target_x.clone(),
        target_y: l2.target_y.clone(),
        attr_a: l1.attr_a.clone(),
        attr_b: l1.attr_b.clone(),
        target_language: l2.target_language.clone(),
        attribute_language: l1.attribute_language.clone(),
    };
    Ok((first, second))
}

/// All directed cross-lingual tests over every language pair sharing a test id.
pub fn cross_lingual_tests(tests: &[BiasTest]) -> Result<Vec<BiasTest>> {
    let mono: Vec<&BiasTest> = tests.iter().filter(|t| !t.is_cross_lingual()).collect();
    let mut out = Vec::new();
    for (i, l1) in mono.iter().enumerate() {
        for l2 in &mono[i + 1..] {
            if l1.id == l2.id && l1.target_language != l2.target_language {
                let (a, b) = make_cross_lingual(l1, l2)?;
                out.push(a);
                out.push(b);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTerm {
    pub canonical: String,
    pub form: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetCoverage {
    pub role: Role,
    /// Stimuli with at least one surface form in the vocabulary.
    pub found: usize,
    pub total: usize,
}

impl SetCoverage {
    pub fn fraction(&self) -> f64 {
        self.found as f64 / self.total as f64
    }
}

/// A test whose stimuli have been mapped to vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTest {
    pub origin: BiasTest,
    pub x: Vec<ResolvedTerm>,
    pub y: Vec<ResolvedTerm>,
    pub a: Vec<ResolvedTerm>,
    pub b: Vec<ResolvedTerm>,
    pub coverage: [SetCoverage; 4],
    pub dropped: Vec<(Role, String)>,
}

impl ResolvedTest {
    /// Builds a fully covered test directly from vectors; terms are named
    /// `x0, x1, ...`, `y0, ...` and so on.
    pub fn from_vectors(
        id: TestId,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let lang = Language::new("xx")?;
        let name = |prefix: &str, vs: Vec<Vec<f64>>| -> Vec<ResolvedTerm> {
            vs.into_iter()
                .enumerate()
                .map(|(i, vector)| ResolvedTerm {
                    canonical: format!("{prefix}{i}"),
                    form: format!("{prefix}{i}"),
                    vector,
                })
                .collect()
        };
        let (x, y, a, b) = (name("x", x), name("y", y), name("a", a), name("b", b));
        let groups = |terms: &[ResolvedTerm]| -> Vec<TermGroup> {
            terms.iter().map(|t| TermGroup::single(t.form.clone())).collect()
        };
        let origin = BiasTest::new(id, lang, groups(&x), groups(&y), groups(&a), groups(&b))?;
        let coverage = [
            (Role::TargetX, x.len()),
            (Role::TargetY, y.len()),
            (Role::AttrA, a.len()),
            (Role::AttrB, b.len()),
        ]
        .map(|(role, n)| SetCoverage {
            role,
            found: n,
            total: n,
        });
        Ok(ResolvedTest {
            origin,
            x,
            y,
            a,
            b,
            coverage,
            dropped: Vec::new(),
        })
    }

    pub fn set(&self, role: Role) -> &[ResolvedTerm] {
        match role {
            Role::TargetX => &self.x,
            Role::TargetY => &self.y,
            Role::AttrA => &self.a,
            Role::AttrB => &self.b,
        }
    }

    pub fn set_mut(&mut self, role: Role) -> &mut Vec<ResolvedTerm> {
        match role {
            Role::TargetX => &mut self.x,
            Role::TargetY => &mut self.y,
            Role::AttrA => &mut self.a,
            Role::AttrB => &mut self.b,
        }
    }

    /// Applies `f` to every vector in all four sets.
    pub fn map_vectors(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> ResolvedTest {
        let mut out = self.clone();
        for role in Role::ALL {
            for term in out.set_mut(role) {
                term.vector = f(&term.vector);
            }
        }
        out
    }

    /// Same test with the target sets exchanged.
    pub fn swap_targets(&self) -> ResolvedTest {
        let mut out = self.clone();
        std::mem::swap(&mut out.x, &mut out.y);
        out
    }

    /// Same test with the attribute sets exchanged.
    pub fn swap_attributes(&self) -> ResolvedTest {
        let mut out = self.clone();
        std::mem::swap(&mut out.a, &mut out.b);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscardReport {
    pub test: BiasTest,
    pub coverage: [SetCoverage; 4],
    pub threshold: f64,
    pub dropped: Vec<(Role, String)>,
}

impl DiscardReport {
    pub fn reason(&self) -> String {
        let counts: Vec<String> = self
            .coverage
            .iter()
            .map(|c| format!("{}={}/{}", c.role, c.found, c.total))
            .collect();
        format!("coverage <= {} ({})", self.threshold, counts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Resolved(ResolvedTest),
    Discarded(DiscardReport),
}

impl Resolution {
    pub fn resolved(self) -> Option<ResolvedTest> {
        match self {
            Resolution::Resolved(r) => Some(r),
            Resolution::Discarded(_) => None,
        }
    }

    pub fn is_discarded(&self) -> bool {
        matches!(self, Resolution::Discarded(_))
    }
}

/// Looks up every stimulus. A set whose found fraction is at or below
/// `threshold` discards the whole test.
pub fn resolve(
    test: &BiasTest,
    target_space: &EmbeddingSpace,
    attr_space: &EmbeddingSpace,
    policy: &LookupPolicy,
    threshold: f64,
) -> Result<Resolution> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!(
            "coverage threshold must lie in [0, 1), got {threshold}"
        )));
    }
    for (space, lang, what) in [
        (target_space, &test.target_language, "target"),
        (attr_space, &test.attribute_language, "attribute"),
    ] {
        if space.language() != lang {
            return Err(Error::InvalidInput(format!(
                "{what} space is {} but test {} expects {}",
                space.language(),
                test.id,
                lang
            )));
        }
    }
    if target_space.dim() != attr_space.dim() {
        return Err(Error::DimensionMismatch {
            expected: target_space.dim(),
            found: attr_space.dim(),
        });
    }

    let mut sets: [Vec<ResolvedTerm>; 4] = Default::default();
    let mut coverage = Role::ALL.map(|role| SetCoverage {
        role,
        found: 0,
        total: test.set(role).len(),
    });
    let mut dropped = Vec::new();

    for role in Role::ALL {
        let space = match role {
            Role::TargetX | Role::TargetY => target_space,
            Role::AttrA | Role::AttrB => attr_space,
        };
        for group in test.set(role) {
            let before = sets[role.index()].len();
            for form in group.variants() {
                if let Some(vector) = space.lookup(form, policy) {
                    sets[role.index()].push(ResolvedTerm {
                        canonical: group.canonical().to_string(),
                        form: form.clone(),
                        vector,
                    });
                }
            }
            if sets[role.index()].len() > before {
                coverage[role.index()].found += 1;
            } else {
                dropped.push((role, group.canonical().to_string()));
            }
        }
    }

    if coverage.iter().any(|c| c.fraction() <= threshold) {
        return Ok(Resolution::Discarded(DiscardReport {
            test: test.clone(),
            coverage,
            threshold,
            dropped,
        }));
    }

    let [x, y, a, b] = sets;
    Ok(Resolution::Resolved(ResolvedTest {
        origin: test.clone(),
        x,
        y,
        a,
        b,
        coverage,
        dropped,
    }))
}
