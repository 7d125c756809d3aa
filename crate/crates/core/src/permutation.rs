//! Permutation-test significance over repartitions of X ∪ Y.
//!
//! Partitions keep the observed sizes: X_i is any subset of size |X| of the
//! pooled targets and Y_i is its complement. The p-value is the share of
//! partitions whose statistic strictly exceeds the observed one (strictly
//! below it for distance metrics). Statistics within [`TIE_TOLERANCE`] of the
//! observed value are ties and never qualify.
//!
//! Work is split into fixed-size index ranges, so results do not depend on
//! the number of rayon worker threads. In Monte Carlo mode range `r` draws
//! from ChaCha8 stream `r` of the plan seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::ResolvedTest;
use crate::weat::{split_statistic, AssociationProfile, Metric, VectorMetric};

pub const DEFAULT_EXACT_THRESHOLD: u64 = 200_000;
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Partitions per work range.
const RANGE_LEN: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    pub exact_threshold: u64,
    pub num_samples: u64,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            num_samples: DEFAULT_SAMPLES,
            seed: 0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub mode: PermutationMode,
    pub n_total: usize,
    pub size_x: usize,
    pub num_samples: u64,
    pub seed: u64,
    pub exact_threshold: u64,
    pub alpha: f64,
}

impl PermutationPlan {
    /// Exact enumeration when C(n_total, size_x) fits under the threshold,
    /// Monte Carlo otherwise.
    pub fn new(n_total: usize, size_x: usize, opts: &PlanOptions) -> Result<Self> {
        check_sizes(n_total, size_x)?;
        if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
            return Err(Error::InvalidPlan(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
        }
        let exact = binomial(n_total, size_x).is_some_and(|c| c <= opts.exact_threshold);
        if !exact && opts.num_samples == 0 {
            return Err(Error::InvalidPlan("Monte Carlo mode needs at least one sample".into()));
        }
        Ok(PermutationPlan {
            mode: if exact {
                PermutationMode::Exact
            } else {
                PermutationMode::MonteCarlo
            },
            n_total,
            size_x,
            num_samples: opts.num_samples,
            seed: opts.seed,
            exact_threshold: opts.exact_threshold,
            alpha: opts.alpha,
        })
    }

    pub fn for_test(test: &ResolvedTest, opts: &PlanOptions) -> Result<Self> {
        Self::new(test.x.len() + test.y.len(), test.x.len(), opts)
    }

    pub fn size_y(&self) -> usize {
        self.n_total - self.size_x
    }
}

fn check_sizes(n_total: usize, size_x: usize) -> Result<()> {
    if size_x == 0 || size_x >= n_total {
        return Err(Error::InvalidPlan(format!(
            "need 0 < |X| < |X ∪ Y|, got |X| = {size_x}, |X ∪ Y| = {n_total}"
        )));
    }
    if n_total > u32::MAX as usize {
        return Err(Error::InvalidPlan(format!("{n_total} targets is too many")));
    }
    Ok(())
}

/// C(n, k), or `None` if it does not fit in a `u64`.
pub fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Size-`k` subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl Combinations {
    fn starting_at(n: usize, current: Vec<usize>) -> Self {
        Combinations {
            n,
            current,
            started: false,
            done: false,
        }
    }

    /// Moves to the next subset in place; returns `false` when exhausted.
    fn advance(&mut self) -> bool {
        let k = self.current.len();
        let n = self.n;
        let Some(i) = (0..k).rev().find(|&i| self.current[i] < n - k + i) else {
            return false;
        };
        self.current[i] += 1;
        for j in i + 1..k {
            self.current[j] = self.current[j - 1] + 1;
        }
        true
    }

    fn current(&self) -> &[usize] {
        &self.current
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        Some(self.current.clone())
    }
}

/// Every X_i (as sorted index sets) for `n_total` pooled targets.
pub fn enumerate_partitions(n_total: usize, size_x: usize) -> Result<Combinations> {
    check_sizes(n_total, size_x)?;
    Ok(Combinations::starting_at(n_total, (0..size_x).collect()))
}

/// The `rank`-th size-`k` subset of `0..n` in lexicographic order.
pub fn unrank_combination(n: usize, k: usize, mut rank: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let remaining = k - slot - 1;
        loop {
            // subsets whose element at `slot` is `next`
            let count = binomial(n - next - 1, remaining).unwrap_or(u64::MAX);
            if rank < count {
                break;
            }
            rank -= count;
            next += 1;
        }
        out.push(next);
        next += 1;
    }
    out
}

/// Uniformly random X_i via a Fisher–Yates prefix shuffle; returns the
/// chosen indices sorted.
pub fn sample_partition<R: Rng + ?Sized>(rng: &mut R, n_total: usize, size_x: usize) -> Result<Vec<usize>> {
    check_sizes(n_total, size_x)?;
    let mut perm: Vec<usize> = (0..n_total).collect();
    shuffle_prefix(rng, &mut perm, size_x);
    let mut chosen = perm[..size_x].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

fn shuffle_prefix<R: Rng + ?Sized>(rng: &mut R, perm: &mut [usize], k: usize) {
    let n = perm.len() as u32;
    for i in 0..k {
        let j = rng.random_range(i as u32..n) as usize;
        perm.swap(i, j);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub p_value: f64,
    pub mode: PermutationMode,
    pub partitions_evaluated: u64,
    /// Partitions whose statistic beats the observed one.
    pub qualifying: u64,
    /// Partitions other than the observed one whose statistic ties it.
    pub ties: u64,
    pub observed: f64,
    pub alpha: f64,
    pub significant: bool,
    /// `(qualifying + 1) / (samples + 1)`, Monte Carlo only.
    pub smoothed_p_value: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    evaluated: u64,
    qualifying: u64,
    ties: u64,
}

impl std::ops::Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            evaluated: self.evaluated + o.evaluated,
            qualifying: self.qualifying + o.qualifying,
            ties: self.ties + o.ties,
        }
    }
}

struct Scorer<'a> {
    assoc: &'a [f64],
    observed: f64,
    distance: bool,
    mask: Vec<bool>,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl<'a> Scorer<'a> {
    fn new(assoc: &'a [f64], observed: f64, distance: bool) -> Self {
        Scorer {
            assoc,
            observed,
            distance,
            mask: vec![false; assoc.len()],
            xs: Vec::with_capacity(assoc.len()),
            ys: Vec::with_capacity(assoc.len()),
        }
    }

    fn score(&mut self, subset: &[usize], tally: &mut Tally) {
        self.mask.fill(false);
        for &i in subset {
            self.mask[i] = true;
        }
        let mask = &self.mask;
        let stat = split_statistic(self.assoc, |i| mask[i], &mut self.xs, &mut self.ys);
        tally.evaluated += 1;
        if (stat - self.observed).abs() <= TIE_TOLERANCE {
            let is_observed = subset.iter().enumerate().all(|(pos, &i)| pos == i);
            if !is_observed {
                tally.ties += 1;
            }
        } else if (stat > self.observed) != self.distance {
            tally.qualifying += 1;
        }
    }
}

/// Significance of a resolved test under `metric`.
pub fn p_value(test: &ResolvedTest, metric: Metric, plan: &PermutationPlan) -> Result<SignificanceResult> {
    let profile = AssociationProfile::compute(test, &metric)?;
    p_value_from_profile(&profile, metric.is_distance(), plan)
}

/// Significance from precomputed associations (X entries first, then Y).
pub fn p_value_from_profile(
    profile: &AssociationProfile,
    distance: bool,
    plan: &PermutationPlan,
) -> Result<SignificanceResult> {
    if profile.x.len() != plan.size_x || profile.x.len() + profile.y.len() != plan.n_total {
        return Err(Error::InvalidPlan(format!(
            "plan is for |X| = {}, |Y| = {} but the test has {} and {}",
            plan.size_x,
            plan.size_y(),
            profile.x.len(),
            profile.y.len()
        )));
    }
    let assoc = profile.combined();
    let observed = profile.statistic();
    let n = plan.n_total;
    let k = plan.size_x;

    let (tally, smoothed, seed) = match plan.mode {
        PermutationMode::Exact => {
            let total = binomial(n, k)
                .ok_or_else(|| Error::InvalidPlan("partition count overflows".into()))?;
            let ranges = total.div_ceil(RANGE_LEN);
            let tally = (0..ranges)
                .into_par_iter()
                .map(|r| {
                    let start = r * RANGE_LEN;
                    let len = RANGE_LEN.min(total - start);
                    let mut scorer = Scorer::new(&assoc, observed, distance);
                    let mut combos = Combinations::starting_at(n, unrank_combination(n, k, start));
                    let mut tally = Tally::default();
                    for step in 0..len {
                        if step > 0 {
                            combos.advance();
                        }
                        scorer.score(combos.current(), &mut tally);
                    }
                    tally
                })
                .reduce(Tally::default, |a, b| a + b);
            debug_assert_eq!(tally.evaluated, total);
            (tally, None, None)
        }
        PermutationMode::MonteCarlo => {
            if plan.num_samples == 0 {
                return Err(Error::InvalidPlan("Monte Carlo mode needs at least one sample".into()));
            }
            let samples = plan.num_samples;
            let ranges = samples.div_ceil(RANGE_LEN);
            let tally = (0..ranges)
                .into_par_iter()
                .map(|r| {
                    let len = RANGE_LEN.min(samples - r * RANGE_LEN);
                    let mut rng = range_rng(plan.seed, r);
                    let mut scorer = Scorer::new(&assoc, observed, distance);
                    let mut perm: Vec<usize> = Vec::with_capacity(n);
                    let mut tally = Tally::default();
                    for _ in 0..len {
                        perm.clear();
                        perm.extend(0..n);
                        shuffle_prefix(&mut rng, &mut perm, k);
                        let chosen = &mut perm[..k];
                        chosen.sort_unstable();
                        scorer.score(chosen, &mut tally);
                    }
                    tally
                })
                .reduce(Tally::default, |a, b| a + b);
            let smoothed = (tally.qualifying + 1) as f64 / (tally.evaluated + 1) as f64;
            (tally, Some(smoothed), Some(plan.seed))
        }
    };

    let p = tally.qualifying as f64 / tally.evaluated as f64;
    if tally.ties > 0 {
        log::warn!(
            "{} permuted statistics tie the observed statistic {} (ties do not count toward p)",
            tally.ties,
            observed
        );
    }
    Ok(SignificanceResult {
        p_value: p,
        mode: plan.mode,
        partitions_evaluated: tally.evaluated,
        qualifying: tally.qualifying,
        ties: tally.ties,
        observed,
        alpha: plan.alpha,
        significant: p < plan.alpha,
        smoothed_p_value: smoothed,
        seed,
    })
}

/// Generator for Monte Carlo work range `range`.
pub fn range_rng(seed: u64, range: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(range);
    rng
}
