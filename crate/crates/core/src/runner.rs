//! End-to-end runs: load spaces, resolve tests, score them, collect rows.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rayon::prelude::*;

use crate::align::{self, BilingualDictionary, Normalization};
use crate::embedding::{EmbeddingSpace, Language, LoadOptions, LookupPolicy};
use crate::error::{Error, Result};
use crate::lexicon::{self, BiasTest, Resolution, TestId, DEFAULT_COVERAGE_THRESHOLD};
use crate::permutation::{self, PermutationMode, PermutationPlan, PlanOptions};
use crate::report::{display_2dp, OutputFormat, Report, ReportRow, RunMeta};
use crate::weat::{AssociationProfile, Deviation, Metric, VectorMetric};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpec {
    pub language: Language,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentJob {
    pub source: Language,
    pub target: Language,
    pub dictionary: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LexiconSource {
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub embeddings: Vec<EmbeddingSpec>,
    /// Empty means the built-in English lexicon.
    pub lexicons: Vec<LexiconSource>,
    /// `None` runs every test the lexicon defines.
    pub tests: Option<Vec<TestId>>,
    pub metrics: Vec<Metric>,
    pub plan: PlanOptions,
    pub coverage_threshold: f64,
    pub policy: LookupPolicy,
    pub max_vocab: Option<usize>,
    pub alignments: Vec<AlignmentJob>,
    pub normalization: Normalization,
    /// `None`: monolingual rows only when there are no alignment jobs.
    pub monolingual: Option<bool>,
    pub format: OutputFormat,
    /// 0 keeps rayon's default.
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embeddings: Vec::new(),
            lexicons: Vec::new(),
            tests: None,
            metrics: vec![Metric::Cosine],
            plan: PlanOptions::default(),
            coverage_threshold: DEFAULT_COVERAGE_THRESHOLD,
            policy: LookupPolicy::default(),
            max_vocab: None,
            alignments: Vec::new(),
            normalization: Normalization::None,
            monolingual: None,
            format: OutputFormat::Json,
            workers: 0,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn meta(&self) -> RunMeta {
        RunMeta {
            seed: self.plan.seed,
            alpha: self.plan.alpha,
            coverage_threshold: self.coverage_threshold,
            exact_threshold: self.plan.exact_threshold,
            permutations: self.plan.num_samples,
        }
    }

    fn embedding(&self, lang: &Language) -> Result<&EmbeddingSpec> {
        self.embeddings
            .iter()
            .find(|e| &e.language == lang)
            .ok_or_else(|| Error::InvalidInput(format!("no embedding space given for language {lang}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.embeddings.is_empty() {
            return Err(Error::InvalidInput("no embedding spaces configured".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidInput("no metric selected".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.embeddings {
            if !seen.insert(&e.language) {
                return Err(Error::InvalidInput(format!("two embedding spaces for language {}", e.language)));
            }
        }
        for job in &self.alignments {
            if job.source == job.target {
                return Err(Error::InvalidInput(format!("alignment {0}->{0} maps a space onto itself", job.source)));
            }
            self.embedding(&job.source)?;
            self.embedding(&job.target)?;
        }
        if !(0.0..1.0).contains(&self.coverage_threshold) {
            return Err(Error::InvalidInput(format!(
                "coverage threshold must lie in [0, 1), got {}",
                self.coverage_threshold
            )));
        }
        if !(self.plan.alpha > 0.0 && self.plan.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.plan.alpha)));
        }
        Ok(())
    }
}

/// Scoring options shared by every test of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub metrics: Vec<Metric>,
    pub plan: PlanOptions,
    pub coverage_threshold: f64,
    pub policy: LookupPolicy,
}

impl From<&RunConfig> for EvalOptions {
    fn from(c: &RunConfig) -> Self {
        EvalOptions {
            metrics: c.metrics.clone(),
            plan: c.plan,
            coverage_threshold: c.coverage_threshold,
            policy: c.policy,
        }
    }
}

/// A test with the spaces its target and attribute words are read from.
#[derive(Debug, Clone, Copy)]
pub struct Task<'a> {
    pub test: &'a BiasTest,
    pub target_space: &'a EmbeddingSpace,
    pub attribute_space: &'a EmbeddingSpace,
}

/// Seed for one (test, direction, metric), so that rows do not depend on
/// which other rows the run contains.
pub fn derive_seed(base: u64, test: TestId, target: &Language, attr: &Language, metric: Metric) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in format!("{test}|{target}|{attr}|{metric}").bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(base ^ splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn in_test(test: &BiasTest, e: Error) -> Error {
    Error::InTest {
        test: test.id.to_string(),
        target_language: test.target_language.to_string(),
        attribute_language: test.attribute_language.to_string(),
        source: Box::new(e),
    }
}

/// Scores every task under every metric. Rows come back sorted by test,
/// target language, attribute language and metric.
pub fn evaluate(tasks: &[Task<'_>], opts: &EvalOptions) -> Result<Vec<ReportRow>> {
    let jobs: Vec<(usize, Metric)> = (0..tasks.len())
        .flat_map(|i| opts.metrics.iter().map(move |&m| (i, m)))
        .collect();
    let resolutions: Vec<Resolution> = tasks
        .par_iter()
        .map(|t| {
            lexicon::resolve(
                t.test,
                t.target_space,
                t.attribute_space,
                &opts.policy,
                opts.coverage_threshold,
            )
            .map_err(|e| in_test(t.test, e))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ReportRow> = jobs
        .par_iter()
        .map(|&(i, metric)| score(tasks[i].test, &resolutions[i], metric, opts).map_err(|e| in_test(tasks[i].test, e)))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(rows)
}

fn score(test: &BiasTest, resolution: &Resolution, metric: Metric, opts: &EvalOptions) -> Result<ReportRow> {
    let mut row = ReportRow {
        test_id: test.id,
        target_language: test.target_language.clone(),
        attribute_language: test.attribute_language.clone(),
        metric,
        effect_size: None,
        effect_size_display: None,
        statistic: None,
        p_value: None,
        smoothed_p_value: None,
        mode: None,
        partitions: None,
        ties: None,
        seed: None,
        significant: None,
        marker: String::new(),
        coverage: match resolution {
            Resolution::Resolved(r) => r.coverage.clone(),
            Resolution::Discarded(d) => d.coverage.clone(),
        },
        discarded: false,
        reason: None,
    };
    let resolved = match resolution {
        Resolution::Resolved(r) => r,
        Resolution::Discarded(d) => {
            row.discarded = true;
            row.reason = Some(d.reason());
            return Ok(row);
        }
    };

    let seed = derive_seed(opts.plan.seed, test.id, &test.target_language, &test.attribute_language, metric);
    let plan = PermutationPlan::for_test(resolved, &PlanOptions { seed, ..opts.plan })?;
    let profile = AssociationProfile::compute(resolved, &metric)?;
    let effect = profile.effect_size(Deviation::Population)? * metric.orientation();
    let sig = permutation::p_value_from_profile(&profile, metric.is_distance(), &plan)?;

    row.effect_size = Some(effect);
    row.effect_size_display = Some(display_2dp(effect));
    row.statistic = Some(sig.observed);
    row.p_value = Some(sig.p_value);
    row.smoothed_p_value = sig.smoothed_p_value;
    row.mode = Some(sig.mode);
    row.partitions = Some(sig.partitions_evaluated);
    row.ties = Some(sig.ties);
    row.seed = (sig.mode == PermutationMode::MonteCarlo).then_some(seed);
    row.significant = Some(sig.significant);
    if !sig.significant {
        row.marker = "*".into();
    }
    Ok(row)
}

fn load_tests(config: &RunConfig) -> Result<Vec<BiasTest>> {
    let sources = if config.lexicons.is_empty() {
        vec![LexiconSource::Builtin]
    } else {
        config.lexicons.clone()
    };
    let mut tests: BTreeMap<(TestId, Language), BiasTest> = BTreeMap::new();
    for src in &sources {
        let batch = match src {
            LexiconSource::Builtin => lexicon::builtin_english(),
            LexiconSource::File(p) => lexicon::load_lexicon(p)?,
        };
        for t in batch {
            let key = (t.id, t.target_language.clone());
            if tests.contains_key(&key) {
                return Err(Error::InvalidInput(format!(
                    "test {} for {} is defined by more than one lexicon",
                    key.0, key.1
                )));
            }
            tests.insert(key, t);
        }
    }
    if let Some(selected) = &config.tests {
        tests.retain(|(id, _), _| selected.contains(id));
    }
    Ok(tests.into_values().collect())
}

/// Runs the configured experiment and returns its rows.
pub fn run(config: &RunConfig) -> Result<Vec<ReportRow>> {
    config.validate()?;
    with_workers(config.workers, || run_inner(config))
}

/// `run` plus aggregates, stamped with the current time.
pub fn run_report(config: &RunConfig) -> Result<Report> {
    let rows = run(config)?;
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    Ok(Report::new(config.meta(), rows, stamp))
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start {workers} workers: {e}")))?;
    pool.install(f)
}

fn run_inner(config: &RunConfig) -> Result<Vec<ReportRow>> {
    let tests = load_tests(config)?;
    let monolingual = config.monolingual.unwrap_or(config.alignments.is_empty());

    let by_lang = |lang: &Language| -> Vec<&BiasTest> {
        tests.iter().filter(|t| &t.target_language == lang).collect()
    };
    if let Some(selected) = &config.tests {
        let mut needed: Vec<&Language> = Vec::new();
        if monolingual {
            needed.extend(config.embeddings.iter().map(|e| &e.language));
        }
        for job in &config.alignments {
            needed.push(&job.source);
            needed.push(&job.target);
        }
        for lang in needed {
            for id in selected {
                if !by_lang(lang).iter().any(|t| t.id == *id) {
                    return Err(Error::InvalidInput(format!("test {id} is selected but the lexicon has no {lang} version")));
                }
            }
        }
    }

    let dictionaries: Vec<BilingualDictionary> = config
        .alignments
        .iter()
        .map(|j| BilingualDictionary::load(&j.dictionary, j.source.clone(), j.target.clone()))
        .collect::<Result<_>>()?;

    // Load each space once and keep only the rows a test or dictionary uses.
    let mut spaces: BTreeMap<Language, EmbeddingSpace> = BTreeMap::new();
    for spec in &config.embeddings {
        let lang = &spec.language;
        let used_mono = monolingual && !by_lang(lang).is_empty();
        let used_align = config.alignments.iter().any(|j| &j.source == lang || &j.target == lang);
        if !used_mono && !used_align {
            log::warn!("embedding space for {lang} is not used by any test");
            continue;
        }
        let opts = LoadOptions {
            limit: config.max_vocab,
            on_duplicate: config.policy.on_duplicate_line,
            ..Default::default()
        };
        let full = EmbeddingSpace::load_with(&spec.path, lang.clone(), &opts)?;
        let mut words: BTreeSet<&str> = tests.iter().flat_map(|t| t.forms_in(lang)).collect();
        for (job, dict) in config.alignments.iter().zip(&dictionaries) {
            if &job.source == lang {
                words.extend(dict.pairs().iter().map(|(s, _)| s.as_str()));
            }
            if &job.target == lang {
                words.extend(dict.pairs().iter().map(|(_, t)| t.as_str()));
            }
        }
        log::info!("{lang}: {} words, dimension {}", full.len(), full.dim());
        spaces.insert(lang.clone(), full.restrict(words, &config.policy));
    }

    let mut owned_tests: Vec<BiasTest> = Vec::new();
    let mut task_spaces: Vec<(Language, Language, Option<usize>)> = Vec::new();
    if monolingual {
        for spec in &config.embeddings {
            for t in by_lang(&spec.language) {
                owned_tests.push(t.clone());
                task_spaces.push((spec.language.clone(), spec.language.clone(), None));
            }
        }
    }

    // Source spaces mapped into each job's target space.
    let mut projected: Vec<EmbeddingSpace> = Vec::new();
    for (j, (job, dict)) in config.alignments.iter().zip(&dictionaries).enumerate() {
        let src = &spaces[&job.source];
        let tgt = &spaces[&job.target];
        let aligned = align::extract_aligned(dict, src, tgt, &config.policy)?;
        log::info!(
            "{}->{}: {} dictionary pairs kept, {} dropped",
            job.source,
            job.target,
            aligned.kept_pairs.len(),
            aligned.dropped_pairs
        );
        let w = align::fit_procrustes_with(&aligned, config.normalization)?;
        projected.push(align::project(src, &w)?);

        let src_tests = by_lang(&job.source);
        let tgt_tests = by_lang(&job.target);
        for s in &src_tests {
            let Some(t) = tgt_tests.iter().find(|t| t.id == s.id) else {
                continue;
            };
            let (a, b) = lexicon::make_cross_lingual(s, t)?;
            for x in [a, b] {
                task_spaces.push((x.target_language.clone(), x.attribute_language.clone(), Some(j)));
                owned_tests.push(x);
            }
        }
    }

    let pick = |lang: &Language, job: Option<usize>| -> &EmbeddingSpace {
        match job {
            Some(j) if config.alignments[j].source == *lang => &projected[j],
            _ => &spaces[lang],
        }
    };
    let tasks: Vec<Task<'_>> = owned_tests
        .iter()
        .zip(&task_spaces)
        .map(|(test, (tl, al, job))| Task {
            test,
            target_space: pick(tl, *job),
            attribute_space: pick(al, *job),
        })
        .collect();
    evaluate(&tasks, &EvalOptions::from(config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_by_row() {
        let en = Language::new("en").unwrap();
        let de = Language::new("de").unwrap();
        let t1 = TestId::new(1).unwrap();
        let a = derive_seed(7, t1, &en, &en, Metric::Cosine);
        assert_eq!(a, derive_seed(7, t1, &en, &en, Metric::Cosine));
        assert_ne!(a, derive_seed(7, t1, &en, &de, Metric::Cosine));
        assert_ne!(a, derive_seed(7, t1, &en, &en, Metric::Euclidean));
        assert_ne!(a, derive_seed(8, t1, &en, &en, Metric::Cosine));
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_err());
        c.embeddings.push(EmbeddingSpec {
            language: Language::new("en").unwrap(),
            path: "x".into(),
        });
        c.validate().unwrap();
        c.alignments.push(AlignmentJob {
            source: Language::new("de").unwrap(),
            target: Language::new("en").unwrap(),
            dictionary: "d".into(),
        });
        assert!(c.validate().is_err());
    }
}
