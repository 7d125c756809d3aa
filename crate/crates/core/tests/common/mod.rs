//! Brute-force reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the library's scoring code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sim {
    Cosine,
    Euclidean,
}

pub fn sim(kind: Sim, u: &[f64], v: &[f64]) -> f64 {
    match kind {
        Sim::Cosine => {
            let mut uv = 0.0;
            let mut uu = 0.0;
            let mut vv = 0.0;
            for i in 0..u.len() {
                uv += u[i] * v[i];
                uu += u[i] * u[i];
                vv += v[i] * v[i];
            }
            uv / (uu.sqrt() * vv.sqrt())
        }
        Sim::Euclidean => {
            let mut s = 0.0;
            for i in 0..u.len() {
                s += (u[i] - v[i]) * (u[i] - v[i]);
            }
            s.sqrt()
        }
    }
}

pub fn assoc(kind: Sim, w: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let sa: f64 = a.iter().map(|x| sim(kind, w, x)).sum();
    let sb: f64 = b.iter().map(|x| sim(kind, w, x)).sum();
    sa / a.len() as f64 - sb / b.len() as f64
}

pub fn statistic(kind: Sim, x: &[Vec<f64>], y: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let sx: f64 = x.iter().map(|w| assoc(kind, w, a, b)).sum();
    let sy: f64 = y.iter().map(|w| assoc(kind, w, a, b)).sum();
    sx - sy
}

pub fn effect_size(kind: Sim, x: &[Vec<f64>], y: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = x.iter().chain(y).map(|w| assoc(kind, w, a, b)).collect();
    let mx = x.iter().map(|w| assoc(kind, w, a, b)).sum::<f64>() / x.len() as f64;
    let my = y.iter().map(|w| assoc(kind, w, a, b)).sum::<f64>() / y.len() as f64;
    let m = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / all.len() as f64;
    (mx - my) / var.sqrt()
}

/// Counts over every equal-size split of X ∪ Y, enumerated by bitmask:
/// (qualifying, ties excluding the observed split, total).
pub fn exact_counts(kind: Sim, x: &[Vec<f64>], y: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]) -> (u64, u64, u64) {
    let pool: Vec<Vec<f64>> = x.iter().chain(y).cloned().collect();
    let n = pool.len();
    let k = x.len();
    let observed = statistic(kind, x, y, a, b);
    let observed_mask: u32 = (1u32 << k) - 1;
    let (mut q, mut ties, mut total) = (0, 0, 0);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        total += 1;
        let xs: Vec<Vec<f64>> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| pool[i].clone()).collect();
        let ys: Vec<Vec<f64>> = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| pool[i].clone()).collect();
        let s = statistic(kind, &xs, &ys, a, b);
        let beats = match kind {
            Sim::Cosine => s - observed > TIE,
            Sim::Euclidean => observed - s > TIE,
        };
        if beats {
            q += 1;
        } else if (s - observed).abs() <= TIE && mask != observed_mask {
            ties += 1;
        }
    }
    (q, ties, total)
}

pub fn binom(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| {
            // Box-Muller
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

/// Random instance with |X ∪ Y| ≤ max_n and dimension in 2..=max_d.
pub fn random_instance(seed: u64, max_n: usize, max_d: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_n);
    let k = rng.random_range(1..n);
    let d = rng.random_range(2..=max_d);
    let na = rng.random_range(1..=5);
    let nb = rng.random_range(1..=5);
    let mut draw = |m: usize| (0..m).map(|_| gaussian_vec(&mut rng, d)).collect::<Vec<_>>();
    Instance {
        x: draw(k),
        y: draw(n - k),
        a: draw(na),
        b: draw(nb),
    }
}

/// Random orthogonal matrix (row-major) from Gram-Schmidt on Gaussian rows.
pub fn random_orthogonal(seed: u64, d: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v = gaussian_vec(&mut rng, d);
        for _ in 0..2 {
            for u in &q {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= p * ui;
                }
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    q
}

/// Row vector times matrix.
pub fn vec_mat(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let d = m[0].len();
    let mut out = vec![0.0; d];
    for (i, vi) in v.iter().enumerate() {
        for j in 0..d {
            out[j] += vi * m[i][j];
        }
    }
    out
}

/// Every surface form of the built-in English lexicon, read straight from
/// the data file.
pub fn builtin_words() -> Vec<String> {
    let text = include_str!("../../data/weat_en.lex");
    let mut words: Vec<String> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
            continue;
        }
        let forms = line.split_once('=').map_or(line, |(_, f)| f);
        for f in forms.split('|') {
            let f = f.trim().to_string();
            if !words.contains(&f) {
                words.push(f);
            }
        }
    }
    words
}

/// Whitespace vector file text for the given words with seeded Gaussian rows.
pub fn vector_file(words: &[String], d: usize, seed: u64, header: bool) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    if header {
        s.push_str(&format!("{} {}\n", words.len(), d));
    }
    for w in words {
        s.push_str(w);
        for v in gaussian_vec(&mut rng, d) {
            s.push_str(&format!(" {v}"));
        }
        s.push('\n');
    }
    s
}

/// Built-in English stimuli as (test, role, forms) triples.
pub fn builtin_blocks() -> Vec<(String, String, Vec<String>)> {
    let text = include_str!("../../data/weat_en.lex");
    let mut out: Vec<(String, String, Vec<String>)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let parts: Vec<&str> = h.split_whitespace().collect();
            out.push((parts[0].to_string(), parts[2].to_string(), Vec::new()));
        } else {
            let form = line.split_once('=').map_or(line, |(_, f)| f).trim();
            out.last_mut().unwrap().2.push(form.to_string());
        }
    }
    out
}

pub fn translate(word: &str, lang: &str) -> String {
    format!("{word}_{lang}")
}

/// Lexicon text for `lang` covering `tests`, each English form w rendered as
/// `w = w_lang`.
pub fn translated_lexicon(lang: &str, tests: &[&str]) -> String {
    let mut s = String::new();
    for (id, role, forms) in builtin_blocks() {
        if !tests.contains(&id.as_str()) {
            continue;
        }
        s.push_str(&format!("[{id} {lang} {role}]\n"));
        for f in forms {
            s.push_str(&format!("{f} = {}\n", translate(&f, lang)));
        }
    }
    s
}

pub const SIX: [&str; 6] = ["T1", "T2", "T6", "T7", "T8", "T9"];

/// Files for a multilingual run: an English space over the built-in
/// vocabulary plus `fillers` extra words, and for every other language a
/// rotated, slightly noisy copy under translated names, with a lexicon and
/// a dictionary into English.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub langs: Vec<String>,
}

impl Fixture {
    pub fn new(langs: &[&str], d: usize, fillers: usize, seed: u64) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let mut words = builtin_words();
        words.extend((0..fillers).map(|i| format!("filler{i}")));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<Vec<f64>> = words.iter().map(|_| gaussian_vec(&mut rng, d)).collect();
        let write_space = |path: &std::path::Path, names: &[String], rows: &[Vec<f64>]| {
            let mut s = format!("{} {}\n", names.len(), d);
            for (w, r) in names.iter().zip(rows) {
                s.push_str(w);
                for v in r {
                    s.push_str(&format!(" {v}"));
                }
                s.push('\n');
            }
            std::fs::write(path, s).unwrap();
        };
        for (li, lang) in langs.iter().enumerate() {
            if *lang == "en" {
                write_space(&dir.path().join("en.vec"), &words, &base);
                continue;
            }
            let r = random_orthogonal(seed + 1 + li as u64, d);
            let names: Vec<String> = words.iter().map(|w| translate(w, lang)).collect();
            let rows: Vec<Vec<f64>> = base
                .iter()
                .map(|v| {
                    let noise = gaussian_vec(&mut rng, d);
                    vec_mat(v, &r).iter().zip(noise).map(|(a, n)| a + 0.05 * n).collect()
                })
                .collect();
            write_space(&dir.path().join(format!("{lang}.vec")), &names, &rows);
            std::fs::write(dir.path().join(format!("{lang}.lex")), translated_lexicon(lang, &SIX)).unwrap();
            let dict: String = (0..fillers)
                .map(|i| format!("{}\tfiller{i}\n", translate(&format!("filler{i}"), lang)))
                .collect();
            std::fs::write(dir.path().join(format!("{lang}-en.tsv")), dict).unwrap();
        }
        Fixture {
            dir,
            langs: langs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }
}
