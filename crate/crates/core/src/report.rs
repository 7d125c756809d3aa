//! Report rows, aggregation over tests, and JSON/TSV serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::Language;
use crate::error::{Error, Result};
use crate::lexicon::{Role, SetCoverage, TestId};
use crate::permutation::PermutationMode;
use crate::weat::Metric;

pub const SCHEMA: &str = "weatlab.report/v1";

/// One evaluated (or discarded) test in one language direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub test_id: TestId,
    pub target_language: Language,
    pub attribute_language: Language,
    pub metric: Metric,
    /// Signed so that positive means X is closer to A than Y is, for both
    /// similarity and distance metrics.
    pub effect_size: Option<f64>,
    pub effect_size_display: Option<String>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub smoothed_p_value: Option<f64>,
    pub mode: Option<PermutationMode>,
    pub partitions: Option<u64>,
    pub ties: Option<u64>,
    pub seed: Option<u64>,
    pub significant: Option<bool>,
    /// `*` when the effect is not significant.
    pub marker: String,
    pub coverage: [SetCoverage; 4],
    pub discarded: bool,
    pub reason: Option<String>,
}

impl ReportRow {
    pub fn sort_key(&self) -> (TestId, &Language, &Language, Metric) {
        (self.test_id, &self.target_language, &self.attribute_language, self.metric)
    }

    pub fn is_cross_lingual(&self) -> bool {
        self.target_language != self.attribute_language
    }
}

/// Two decimals, ties to even on the exact binary value.
pub fn display_2dp(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    /// Mean over every non-discarded test of the group.
    AvgAll,
    /// Mean over the tests that are significant in every group of the same
    /// kind (monolingual or cross-lingual) and metric.
    AvgSig,
}

impl AggregateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregateMode::AvgAll => "avg_all",
            AggregateMode::AvgSig => "avg_sig",
        }
    }
}

impl FromStr for AggregateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg_all" => Ok(AggregateMode::AvgAll),
            "avg_sig" => Ok(AggregateMode::AvgSig),
            other => Err(Error::InvalidInput(format!("unknown aggregate {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub target_language: Language,
    pub attribute_language: Language,
    pub metric: Metric,
    pub mode: AggregateMode,
    /// `None` when no test qualifies (see `empty_subset`).
    pub value: Option<f64>,
    pub value_display: Option<String>,
    pub empty_subset: bool,
    /// Some averaged effect was not significant.
    pub includes_insignificant: bool,
    pub tests: Vec<TestId>,
}

type GroupKey = (Language, Language, Metric);

fn group_rows(rows: &[ReportRow]) -> BTreeMap<GroupKey, Vec<&ReportRow>> {
    let mut groups: BTreeMap<GroupKey, Vec<&ReportRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.target_language.clone(), row.attribute_language.clone(), row.metric))
            .or_default()
            .push(row);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|r| r.test_id);
    }
    groups
}

/// Per-group averages of effect sizes; groups are languages for monolingual
/// rows and directed language pairs for cross-lingual rows.
pub fn aggregate(rows: &[ReportRow], mode: AggregateMode) -> Vec<Summary> {
    let groups = group_rows(rows);

    // tests significant in every group, per (cross-lingual?, metric)
    let mut sig_everywhere: BTreeMap<(bool, Metric), BTreeSet<TestId>> = BTreeMap::new();
    if mode == AggregateMode::AvgSig {
        let mut family: BTreeMap<(bool, Metric), Vec<&Vec<&ReportRow>>> = BTreeMap::new();
        for ((t, a, m), g) in &groups {
            family.entry((t != a, *m)).or_default().push(g);
        }
        for (key, members) in family {
            let mut common: Option<BTreeSet<TestId>> = None;
            for g in members {
                let sig: BTreeSet<TestId> = g
                    .iter()
                    .filter(|r| !r.discarded && r.significant == Some(true))
                    .map(|r| r.test_id)
                    .collect();
                common = Some(match common {
                    None => sig,
                    Some(c) => c.intersection(&sig).copied().collect(),
                });
            }
            sig_everywhere.insert(key, common.unwrap_or_default());
        }
    }

    groups
        .into_iter()
        .map(|((target, attr, metric), g)| {
            let included: Vec<&ReportRow> = g
                .into_iter()
                .filter(|r| !r.discarded && r.effect_size.is_some())
                .filter(|r| match mode {
                    AggregateMode::AvgAll => true,
                    AggregateMode::AvgSig => sig_everywhere[&(target != attr, metric)].contains(&r.test_id),
                })
                .collect();
            let effects: Vec<f64> = included.iter().filter_map(|r| r.effect_size).collect();
            let value = (!effects.is_empty()).then(|| effects.iter().sum::<f64>() / effects.len() as f64);
            Summary {
                target_language: target,
                attribute_language: attr,
                metric,
                mode,
                value,
                value_display: value.map(display_2dp),
                empty_subset: value.is_none(),
                includes_insignificant: included.iter().any(|r| r.significant != Some(true)),
                tests: included.iter().map(|r| r.test_id).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub alpha: f64,
    pub coverage_threshold: f64,
    pub exact_threshold: u64,
    pub permutations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub generated_at: String,
    pub meta: RunMeta,
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<Summary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Tsv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "tsv" => Ok(OutputFormat::Tsv),
            other => Err(Error::InvalidInput(format!("unknown output format {other:?}"))),
        }
    }
}

impl Report {
    /// Builds a report with both aggregates; `generated_at` is the only
    /// field that changes between identical runs.
    pub fn new(meta: RunMeta, rows: Vec<ReportRow>, generated_at: String) -> Self {
        let mut summaries = aggregate(&rows, AggregateMode::AvgAll);
        summaries.extend(aggregate(&rows, AggregateMode::AvgSig));
        Report {
            schema: SCHEMA.to_string(),
            generated_at,
            meta,
            rows,
            summaries,
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Tsv => self.to_tsv(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Report =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("bad JSON report: {e}")))?;
        if report.schema != SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported report schema {:?}", report.schema)));
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        std::fs::write(path, self.render(format)).map_err(|e| Error::io(path, e))
    }
}

const ROW_COLUMNS: [&str; 21] = [
    "test_id",
    "target_language",
    "attribute_language",
    "metric",
    "discarded",
    "effect_size",
    "effect_size_2dp",
    "marker",
    "statistic",
    "p_value",
    "p_value_smoothed",
    "mode",
    "partitions",
    "ties",
    "seed",
    "significant",
    "cov_target_X",
    "cov_target_Y",
    "cov_attr_A",
    "cov_attr_B",
    "reason",
];

const SUMMARY_COLUMNS: [&str; 9] = [
    "target_language",
    "attribute_language",
    "metric",
    "aggregate",
    "value",
    "value_2dp",
    "empty_subset",
    "includes_insignificant",
    "tests",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn mode_str(m: PermutationMode) -> &'static str {
    match m {
        PermutationMode::Exact => "exact",
        PermutationMode::MonteCarlo => "monte-carlo",
    }
}

impl Report {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# schema\t{}", self.schema);
        let _ = writeln!(out, "# generated_at\t{}", self.generated_at);
        let m = &self.meta;
        let _ = writeln!(out, "# seed\t{}", m.seed);
        let _ = writeln!(out, "# alpha\t{}", m.alpha);
        let _ = writeln!(out, "# coverage_threshold\t{}", m.coverage_threshold);
        let _ = writeln!(out, "# exact_threshold\t{}", m.exact_threshold);
        let _ = writeln!(out, "# permutations\t{}", m.permutations);
        out.push_str("[rows]\n");
        out.push_str(&ROW_COLUMNS.join("\t"));
        out.push('\n');
        for r in &self.rows {
            let cov: Vec<String> = r.coverage.iter().map(|c| format!("{}/{}", c.found, c.total)).collect();
            let fields = [
                r.test_id.to_string(),
                r.target_language.to_string(),
                r.attribute_language.to_string(),
                r.metric.to_string(),
                r.discarded.to_string(),
                opt(&r.effect_size),
                opt(&r.effect_size_display),
                r.marker.clone(),
                opt(&r.statistic),
                opt(&r.p_value),
                opt(&r.smoothed_p_value),
                r.mode.map(mode_str).unwrap_or_default().to_string(),
                opt(&r.partitions),
                opt(&r.ties),
                opt(&r.seed),
                opt(&r.significant),
                cov[0].clone(),
                cov[1].clone(),
                cov[2].clone(),
                cov[3].clone(),
                opt(&r.reason),
            ];
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out.push_str("[summaries]\n");
        out.push_str(&SUMMARY_COLUMNS.join("\t"));
        out.push('\n');
        for s in &self.summaries {
            let tests: Vec<String> = s.tests.iter().map(ToString::to_string).collect();
            let fields = [
                s.target_language.to_string(),
                s.attribute_language.to_string(),
                s.metric.to_string(),
                s.mode.as_str().to_string(),
                opt(&s.value),
                opt(&s.value_display),
                s.empty_subset.to_string(),
                s.includes_insignificant.to_string(),
                tests.join(","),
            ];
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::InvalidInput(format!("TSV report line {line}: {msg}"));
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut rows = Vec::new();
        let mut summaries = Vec::new();
        let mut section = "";
        let mut expect_header = false;

        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest
                    .split_once('\t')
                    .ok_or_else(|| bad(n, "malformed metadata line".into()))?;
                meta.insert(k.to_string(), v.to_string());
                continue;
            }
            if line == "[rows]" || line == "[summaries]" {
                section = if line == "[rows]" { "rows" } else { "summaries" };
                expect_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let wanted: &[&str] = match section {
                "rows" => &ROW_COLUMNS,
                "summaries" => &SUMMARY_COLUMNS,
                _ => return Err(bad(n, "data outside of a section".into())),
            };
            if expect_header {
                if fields != wanted {
                    return Err(bad(n, "unexpected column header".into()));
                }
                expect_header = false;
                continue;
            }
            if fields.len() != wanted.len() {
                return Err(bad(n, format!("expected {} fields, found {}", wanted.len(), fields.len())));
            }
            let res = if section == "rows" {
                parse_row(&fields).map(|r| rows.push(r))
            } else {
                parse_summary(&fields).map(|s| summaries.push(s))
            };
            res.map_err(|e| bad(n, e.to_string()))?;
        }

        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("TSV report lacks `{k}`")))
        };
        let schema = get("schema")?;
        if schema != SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported report schema {schema:?}")));
        }
        Ok(Report {
            schema,
            generated_at: get("generated_at")?,
            meta: RunMeta {
                seed: num(&get("seed")?)?,
                alpha: num(&get("alpha")?)?,
                coverage_threshold: num(&get("coverage_threshold")?)?,
                exact_threshold: num(&get("exact_threshold")?)?,
                permutations: num(&get("permutations")?)?,
            },
            rows,
            summaries,
        })
    }
}

fn num<T: FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidInput(format!("cannot parse {s:?}")))
}

fn opt_num<T: FromStr>(s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        num(s).map(Some)
    }
}

fn opt_str(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

fn parse_coverage(role: Role, s: &str) -> Result<SetCoverage> {
    let (found, total) = s
        .split_once('/')
        .ok_or_else(|| Error::InvalidInput(format!("bad coverage {s:?}")))?;
    Ok(SetCoverage {
        role,
        found: num(found)?,
        total: num(total)?,
    })
}

fn parse_row(f: &[&str]) -> Result<ReportRow> {
    let mode = match f[11] {
        "" => None,
        "exact" => Some(PermutationMode::Exact),
        "monte-carlo" => Some(PermutationMode::MonteCarlo),
        other => return Err(Error::InvalidInput(format!("unknown mode {other:?}"))),
    };
    Ok(ReportRow {
        test_id: f[0].parse()?,
        target_language: f[1].parse()?,
        attribute_language: f[2].parse()?,
        metric: f[3].parse()?,
        discarded: num(f[4])?,
        effect_size: opt_num(f[5])?,
        effect_size_display: opt_str(f[6]),
        marker: f[7].to_string(),
        statistic: opt_num(f[8])?,
        p_value: opt_num(f[9])?,
        smoothed_p_value: opt_num(f[10])?,
        mode,
        partitions: opt_num(f[12])?,
        ties: opt_num(f[13])?,
        seed: opt_num(f[14])?,
        significant: opt_num(f[15])?,
        coverage: [
            parse_coverage(Role::TargetX, f[16])?,
            parse_coverage(Role::TargetY, f[17])?,
            parse_coverage(Role::AttrA, f[18])?,
            parse_coverage(Role::AttrB, f[19])?,
        ],
        reason: opt_str(f[20]),
    })
}

fn parse_summary(f: &[&str]) -> Result<Summary> {
    let tests = if f[8].is_empty() {
        Vec::new()
    } else {
        f[8].split(',').map(str::parse).collect::<Result<Vec<TestId>>>()?
    };
    Ok(Summary {
        target_language: f[0].parse()?,
        attribute_language: f[1].parse()?,
        metric: f[2].parse()?,
        mode: f[3].parse()?,
        value: opt_num(f[4])?,
        value_display: opt_str(f[5]),
        empty_subset: num(f[6])?,
        includes_insignificant: num(f[7])?,
        tests,
    })
}
