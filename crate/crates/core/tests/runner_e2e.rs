mod common;

use common::Fixture;
use weatlab::embedding::Language;
use weatlab::lexicon::TestId;
use weatlab::permutation::PlanOptions;
use weatlab::report::{OutputFormat, Report};
use weatlab::runner::{self, AlignmentJob, EmbeddingSpec, LexiconSource, RunConfig};
use weatlab::weat::Metric;

fn lang(s: &str) -> Language {
    Language::new(s).unwrap()
}

fn base_config(f: &Fixture, langs: &[&str]) -> RunConfig {
    RunConfig {
        embeddings: langs
            .iter()
            .map(|l| EmbeddingSpec {
                language: lang(l),
                path: f.path(&format!("{l}.vec")),
            })
            .collect(),
        lexicons: langs
            .iter()
            .map(|l| {
                if *l == "en" {
                    LexiconSource::Builtin
                } else {
                    LexiconSource::File(f.path(&format!("{l}.lex")))
                }
            })
            .collect(),
        plan: PlanOptions {
            num_samples: 5_000,
            seed: 11,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn six() -> Option<Vec<TestId>> {
    Some(common::SIX.iter().map(|s| s.parse().unwrap()).collect())
}

#[test]
fn english_two_metrics_gives_twenty_rows() {
    let f = Fixture::new(&["en"], 12, 0, 1);
    let mut c = base_config(&f, &["en"]);
    c.metrics = vec![Metric::Cosine, Metric::Euclidean];
    let rows = runner::run(&c).unwrap();
    assert_eq!(rows.len(), 20);
    assert!(rows.windows(2).all(|w| w[0].sort_key() <= w[1].sort_key()));
    for r in &rows {
        assert!(!r.discarded);
        assert_eq!(r.significant, Some(r.p_value.unwrap() < 0.05));
        assert_eq!(r.marker.is_empty(), r.significant == Some(true));
    }
}

#[test]
fn seven_languages_six_tests_each() {
    let langs = ["en", "de", "es", "it", "hr", "ru", "tr"];
    let f = Fixture::new(&langs, 8, 0, 2);
    let mut c = base_config(&f, &langs);
    c.tests = six();
    c.plan.num_samples = 1_000;
    let rows = runner::run(&c).unwrap();
    assert_eq!(rows.len(), 42);
    for l in langs {
        assert_eq!(rows.iter().filter(|r| r.target_language.as_str() == l).count(), 6);
    }
    assert!(rows.iter().all(|r| !r.is_cross_lingual()));
}

#[test]
fn one_pair_gives_twelve_cross_lingual_rows() {
    let f = Fixture::new(&["en", "de"], 10, 80, 3);
    let mut c = base_config(&f, &["en", "de"]);
    c.tests = six();
    c.alignments.push(AlignmentJob {
        source: lang("de"),
        target: lang("en"),
        dictionary: f.path("de-en.tsv"),
    });
    let rows = runner::run(&c).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.is_cross_lingual()));
    assert_eq!(rows.iter().filter(|r| r.target_language.as_str() == "de").count(), 6);

    // T2, German targets with English attributes, recorded from the first
    // verified run of this fixture
    let t2 = rows
        .iter()
        .find(|r| r.test_id.number() == 2 && r.target_language.as_str() == "de")
        .unwrap();
    let golden = -0.08903695391197572;
    assert!((t2.effect_size.unwrap() - golden).abs() < 1e-9, "{:?}", t2.effect_size);

    // the German space is a noisy rotation of the English one, so after
    // alignment the cross-lingual effect stays near the English one
    c.monolingual = Some(true);
    let all = runner::run(&c).unwrap();
    assert_eq!(all.len(), 24);
    let en_t2 = all
        .iter()
        .find(|r| r.test_id.number() == 2 && r.target_language.as_str() == "en" && !r.is_cross_lingual())
        .unwrap();
    assert!((en_t2.effect_size.unwrap() - golden).abs() < 0.1);
}

#[test]
fn reruns_are_identical_apart_from_the_timestamp() {
    let f = Fixture::new(&["en", "de"], 10, 80, 4);
    let mut c = base_config(&f, &["en", "de"]);
    c.monolingual = Some(true);
    c.alignments.push(AlignmentJob {
        source: lang("de"),
        target: lang("en"),
        dictionary: f.path("de-en.tsv"),
    });
    let a = runner::run_report(&c).unwrap();
    let mut b = runner::run_report(&c).unwrap();
    b.generated_at = a.generated_at.clone();
    for fmt in [OutputFormat::Json, OutputFormat::Tsv] {
        assert_eq!(a.render(fmt), b.render(fmt));
    }
    assert_eq!(Report::from_tsv(&a.to_tsv()).unwrap(), a);
    assert_eq!(Report::from_json(&a.to_json()).unwrap(), a);
}

#[test]
fn errors_carry_context() {
    let f = Fixture::new(&["en"], 4, 0, 5);
    let mut c = base_config(&f, &["en"]);
    c.embeddings[0].path = f.path("nope.vec");
    let msg = runner::run(&c).unwrap_err().to_string();
    assert!(msg.contains("nope.vec"), "{msg}");

    std::fs::write(f.path("bad.lex"), "[T1 en target_X]\naster\n[T99 en target_Y]\nx\n").unwrap();
    let mut c = base_config(&f, &["en"]);
    c.lexicons = vec![LexiconSource::File(f.path("bad.lex"))];
    let msg = runner::run(&c).unwrap_err().to_string();
    assert!(msg.contains("bad.lex:3"), "{msg}");

    let mut c = base_config(&f, &["en"]);
    c.tests = six();
    c.lexicons.push(LexiconSource::Builtin);
    assert!(runner::run(&c).is_err());

    // a selected test missing from one language
    let f = Fixture::new(&["en", "de"], 4, 0, 6);
    let mut c = base_config(&f, &["en", "de"]);
    c.tests = Some(vec!["T3".parse().unwrap()]);
    let msg = runner::run(&c).unwrap_err().to_string();
    assert!(msg.contains("T3") && msg.contains("de"), "{msg}");
}
