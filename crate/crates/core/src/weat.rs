//! Association, test statistic and effect size.
//!
//! For a term `t`, `s(t, A, B) = mean_a f(t, a) - mean_b f(t, b)`. The test
//! statistic sums `s` over X and subtracts the sum over Y (no division by set
//! sizes). The effect size is the difference of the mean associations of X and
//! Y divided by the standard deviation of all associations in X ∪ Y.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{ResolvedTerm, ResolvedTest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Cosine, Metric::Euclidean];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        }
    }

    /// `+1` for similarities (higher is closer), `-1` for distances.
    pub fn orientation(self) -> f64 {
        if self.is_distance() {
            -1.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cosine" | "cos" => Ok(Metric::Cosine),
            "euclidean" | "euc" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidInput(format!("unknown metric {other:?}"))),
        }
    }
}

/// A pairwise similarity or distance between term vectors.
pub trait VectorMetric {
    fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64>;

    fn is_distance(&self) -> bool;
}

impl VectorMetric for Metric {
    fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        metric_value(*self, u, v)
    }

    fn is_distance(&self) -> bool {
        matches!(self, Metric::Euclidean)
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn metric_value(metric: Metric, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    match metric {
        Metric::Cosine => {
            let (nu, nv) = (norm(u), norm(v));
            if nu == 0.0 || nv == 0.0 {
                return Err(Error::ZeroVector {
                    term: String::new(),
                });
            }
            Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
        }
        Metric::Euclidean => Ok(u
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()),
    }
}

/// Sum in a fixed order: sequential for short slices, pairwise above that.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().fold(0.0, |acc, x| acc + x)
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

fn check_cosine_operands(is_distance: bool, terms: &[&ResolvedTerm]) -> Result<()> {
    if !is_distance {
        if let Some(t) = terms.iter().find(|t| norm(&t.vector) == 0.0) {
            return Err(Error::ZeroVector {
                term: t.form.clone(),
            });
        }
    }
    Ok(())
}

/// `s(t, A, B)`.
pub fn association<M, V>(t: &[f64], a: &[V], b: &[V], metric: &M) -> Result<f64>
where
    M: VectorMetric + ?Sized,
    V: AsRef<[f64]>,
{
    if a.is_empty() {
        return Err(Error::EmptySet("attr_A"));
    }
    if b.is_empty() {
        return Err(Error::EmptySet("attr_B"));
    }
    let sims_a = a.iter().map(|v| metric.eval(t, v.as_ref())).collect::<Result<Vec<_>>>()?;
    let sims_b = b.iter().map(|v| metric.eval(t, v.as_ref())).collect::<Result<Vec<_>>>()?;
    Ok(mean(&sims_a) - mean(&sims_b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deviation {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1`.
    Sample,
}

/// Per-term associations of a resolved test, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationProfile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl AssociationProfile {
    pub fn compute<M: VectorMetric + ?Sized>(test: &ResolvedTest, metric: &M) -> Result<Self> {
        for (set, name) in [(&test.x, "target_X"), (&test.y, "target_Y"), (&test.a, "attr_A"), (&test.b, "attr_B")] {
            if set.is_empty() {
                return Err(Error::EmptySet(name));
            }
        }
        let all: Vec<&ResolvedTerm> = test.x.iter().chain(&test.y).chain(&test.a).chain(&test.b).collect();
        check_cosine_operands(metric.is_distance(), &all)?;
        let a: Vec<&[f64]> = test.a.iter().map(|t| t.vector.as_slice()).collect();
        let b: Vec<&[f64]> = test.b.iter().map(|t| t.vector.as_slice()).collect();
        let assoc = |terms: &[ResolvedTerm]| -> Result<Vec<f64>> {
            terms
                .iter()
                .map(|t| association(&t.vector, &a, &b, metric))
                .collect()
        };
        Ok(AssociationProfile {
            x: assoc(&test.x)?,
            y: assoc(&test.y)?,
        })
    }

    /// X associations followed by Y associations.
    pub fn combined(&self) -> Vec<f64> {
        self.x.iter().chain(&self.y).copied().collect()
    }

    pub fn mean_x(&self) -> f64 {
        mean(&self.x)
    }

    pub fn mean_y(&self) -> f64 {
        mean(&self.y)
    }

    pub fn std_dev(&self, deviation: Deviation) -> f64 {
        std_dev(&self.combined(), deviation)
    }

    pub fn statistic(&self) -> f64 {
        split_statistic(&self.combined(), |i| i < self.x.len(), &mut Vec::new(), &mut Vec::new())
    }

    pub fn effect_size(&self, deviation: Deviation) -> Result<f64> {
        let all = self.combined();
        let n = all.len();
        if n < 2 {
            return Err(Error::Degenerate(format!("{n} target terms are too few for a deviation")));
        }
        let sigma = std_dev(&all, deviation);
        let scale = all.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sigma == 0.0 || sigma <= f64::EPSILON * scale || all.iter().all(|v| *v == all[0]) {
            return Err(Error::Degenerate(
                "all target associations are identical (zero standard deviation)".into(),
            ));
        }
        Ok((self.mean_x() - self.mean_y()) / sigma)
    }
}

pub fn std_dev(values: &[f64], deviation: Deviation) -> f64 {
    let mu = mean(values);
    let squares: Vec<f64> = values.iter().map(|v| (v - mu) * (v - mu)).collect();
    let denom = match deviation {
        Deviation::Population => values.len() as f64,
        Deviation::Sample => values.len() as f64 - 1.0,
    };
    (pairwise_sum(&squares) / denom).sqrt()
}

/// Statistic of the partition where index `i` of `assoc` belongs to X iff
/// `in_x(i)`. Both sides are summed in index order.
pub fn split_statistic(
    assoc: &[f64],
    in_x: impl Fn(usize) -> bool,
    xs: &mut Vec<f64>,
    ys: &mut Vec<f64>,
) -> f64 {
    xs.clear();
    ys.clear();
    for (i, v) in assoc.iter().enumerate() {
        if in_x(i) {
            xs.push(*v);
        } else {
            ys.push(*v);
        }
    }
    pairwise_sum(xs) - pairwise_sum(ys)
}

pub fn test_statistic(test: &ResolvedTest, metric: Metric) -> Result<f64> {
    Ok(AssociationProfile::compute(test, &metric)?.statistic())
}

/// Effect size with the population standard deviation.
pub fn effect_size(test: &ResolvedTest, metric: Metric) -> Result<f64> {
    effect_size_with(test, &metric, Deviation::Population)
}

pub fn effect_size_with<M: VectorMetric + ?Sized>(
    test: &ResolvedTest,
    metric: &M,
    deviation: Deviation,
) -> Result<f64> {
    AssociationProfile::compute(test, metric)?.effect_size(deviation)
}
