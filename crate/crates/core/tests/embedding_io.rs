use std::io::Cursor;
use std::path::Path;

use proptest::prelude::*;
use weatlab::embedding::{EmbeddingSpace, Language, LoadOptions, LookupPolicy, Precision};

fn en() -> Language {
    Language::new("en").unwrap()
}

fn read(text: &str, opts: &LoadOptions) -> weatlab::Result<EmbeddingSpace> {
    EmbeddingSpace::read_text(Cursor::new(text), Path::new("mem"), en(), opts)
}

fn word() -> impl Strategy<Value = String> {
    "[a-zA-Z][a-zA-Z0-9_'-]{0,11}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_load_is_identity(
        words in prop::collection::btree_set(word(), 1..20),
        d in 1usize..6,
        seed in any::<u64>(),
    ) {
        let words: Vec<String> = words.into_iter().collect();
        let mut state = seed;
        let rows: Vec<Vec<f64>> = words
            .iter()
            .map(|_| {
                (0..d)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 1e3
                    })
                    .collect()
            })
            .collect();
        let space = EmbeddingSpace::from_rows(en(), words.iter().map(String::as_str), rows.clone(), "gen").unwrap();
        let mut buf = Vec::new();
        space.write_text(&mut buf).unwrap();
        let opts = LoadOptions { precision: Precision::Double, ..Default::default() };
        let back = read(std::str::from_utf8(&buf).unwrap(), &opts).unwrap();
        prop_assert_eq!(back.len(), words.len());
        prop_assert_eq!(back.dim(), d);
        for (w, r) in words.iter().zip(&rows) {
            prop_assert_eq!(&back.lookup(w, &LookupPolicy::exact()).unwrap(), r);
        }

        // the same file without its header line
        let text = String::from_utf8(buf).unwrap();
        let body = text.split_once('\n').unwrap().1;
        let headerless = read(body, &opts).unwrap();
        prop_assert_eq!(headerless, back.clone());
    }

    #[test]
    fn single_precision_rounds_once(v in -1e6f64..1e6) {
        let space = read(&format!("w {v}\n"), &LoadOptions::default()).unwrap();
        prop_assert_eq!(space.row(0)[0], v as f32 as f64);
    }
}

#[test]
fn header_and_headerless_agree() {
    let a = read("2 3\napple 1 0 0\nbanana 0 1 0\n", &LoadOptions::default()).unwrap();
    let b = read("apple 1 0 0\nbanana 0 1 0", &LoadOptions::default()).unwrap();
    assert_eq!((a.len(), a.dim()), (2, 3));
    assert_eq!((b.len(), b.dim()), (2, 3));
    assert_eq!(a.row(1), b.row(1));
}

#[test]
fn ragged_rows_name_the_line() {
    let err = read("apple 1 0 0\nbanana 0 1 0 4\n", &LoadOptions::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains(":2:"), "{msg}");
}

#[test]
fn save_and_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.txt");
    let space = EmbeddingSpace::from_rows(en(), ["Paul", "paul", "x"], vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![0.5, -0.25]], "t").unwrap();
    space.save(&path).unwrap();
    let back = EmbeddingSpace::load(&path, en(), None).unwrap();
    assert_eq!(back.row(0), vec![1.0, 2.0]);
    assert_eq!(back.lookup("PAUL", &LookupPolicy::default()).unwrap(), vec![3.0, 4.0]);
    assert!(back.lookup("zzz", &LookupPolicy::default()).is_none());
    let limited = EmbeddingSpace::load(&path, en(), Some(2)).unwrap();
    assert_eq!(limited.len(), 2);
    assert!(EmbeddingSpace::load(dir.path().join("missing"), en(), None).is_err());
}
