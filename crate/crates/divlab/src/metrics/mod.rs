//! Histogram-based similarity metrics over instruction mnemonics: the S
//! score (one minus half the sum of squared frequency differences), both
//! readings of Jaccard similarity, and a CFG-shape score. All metrics
//! erase operands entirely, so register renaming is invisible to them.

mod cfgsim;
mod matrix;

pub use cfgsim::cfg_similarity;
pub use matrix::{pairwise_matrix, MatrixWarning, SimilarityMatrix};

use crate::isa::{Mnemonic, Program};
use std::collections::BTreeMap;
use thiserror::Error;

/// An n-gram key: `n` consecutive mnemonics within one basic block.
pub type NgramKey = Vec<Mnemonic>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    S,
    JaccardPairs,
    JaccardWeighted,
    Cfg,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::S,
        MetricKind::JaccardPairs,
        MetricKind::JaccardWeighted,
        MetricKind::Cfg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::S => "s",
            MetricKind::JaccardPairs => "jaccard_pairs",
            MetricKind::JaccardWeighted => "jaccard_weighted",
            MetricKind::Cfg => "cfg",
        }
    }

    pub fn from_name(name: &str) -> Option<MetricKind> {
        MetricKind::ALL.iter().copied().find(|m| m.name() == name)
    }
}

/// A similarity value in `[0, 1]` tagged with the metric that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub value: f64,
    pub metric: MetricKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("gram length must be at least 1")]
    ZeroGramLength,
    #[error("mismatched gram lengths {a} and {b}")]
    MismatchedGramLength { a: usize, b: usize },
    #[error("histogram of an empty binary (total 0)")]
    EmptyHistogram,
}

/// Counts of instruction n-grams. Grams never cross basic-block
/// boundaries, so block reordering cannot manufacture phantom grams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramHistogram {
    n: usize,
    counts: BTreeMap<NgramKey, u64>,
    total: u64,
}

impl NgramHistogram {
    pub fn from_counts(n: usize, counts: BTreeMap<NgramKey, u64>) -> Self {
        assert!(n >= 1);
        debug_assert!(counts.keys().all(|k| k.len() == n));
        let total = counts.values().sum();
        NgramHistogram { n, counts, total }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<NgramKey, u64> {
        &self.counts
    }

    pub fn count(&self, key: &[Mnemonic]) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Relative frequency of a key: count divided by total. Absent keys
    /// have frequency 0; an empty histogram is an error, not a NaN.
    pub fn freq(&self, key: &[Mnemonic]) -> Result<f64, MetricsError> {
        if self.total == 0 {
            return Err(MetricsError::EmptyHistogram);
        }
        Ok(self.count(key) as f64 / self.total as f64)
    }
}

/// Builds the n-gram mnemonic histogram of a program. Operands are
/// ignored; each basic block contributes `max(0, len - n + 1)` grams
/// over its body plus encoded terminator.
pub fn mnemonic_histogram(p: &Program, n: usize) -> Result<NgramHistogram, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroGramLength);
    }
    let mut counts: BTreeMap<NgramKey, u64> = BTreeMap::new();
    for f in &p.functions {
        for b in &f.blocks {
            let seq: Vec<Mnemonic> = b.mnemonics().collect();
            for w in seq.windows(n) {
                *counts.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
    }
    Ok(NgramHistogram::from_counts(n, counts))
}

fn check_pair(a: &NgramHistogram, b: &NgramHistogram) -> Result<(), MetricsError> {
    if a.n != b.n {
        return Err(MetricsError::MismatchedGramLength { a: a.n, b: b.n });
    }
    Ok(())
}

/// The S score: `1 - sum over all keys of |freq_a - freq_b|^2 / 2`.
/// Identical frequency tables score 1; disjoint singleton tables score 0.
/// Two empty histograms score 1 by convention; one-sided emptiness is an
/// error.
pub fn similarity_s(
    a: &NgramHistogram,
    b: &NgramHistogram,
) -> Result<SimilarityScore, MetricsError> {
    check_pair(a, b)?;
    if a.total == 0 && b.total == 0 {
        return Ok(SimilarityScore {
            value: 1.0,
            metric: MetricKind::S,
        });
    }
    if a.total == 0 || b.total == 0 {
        return Err(MetricsError::EmptyHistogram);
    }
    let mut sum = 0.0;
    let mut keys: Vec<&NgramKey> = a.counts.keys().chain(b.counts.keys()).collect();
    keys.sort_unstable();
    keys.dedup();
    for key in keys {
        let fa = a.freq(key)?;
        let fb = b.freq(key)?;
        let d = fa - fb;
        sum += d * d;
    }
    Ok(SimilarityScore {
        value: (1.0 - sum / 2.0).clamp(0.0, 1.0),
        metric: MetricKind::S,
    })
}

/// Jaccard over sets of `(key, count)` pairs: a key contributes to the
/// intersection only when both histograms hold it with the same count.
/// Two empty histograms score 1.
pub fn jaccard_pairs(
    a: &NgramHistogram,
    b: &NgramHistogram,
) -> Result<SimilarityScore, MetricsError> {
    check_pair(a, b)?;
    let inter = a
        .counts
        .iter()
        .filter(|(k, v)| b.counts.get(*k) == Some(v))
        .count();
    let union = a.counts.len() + b.counts.len() - inter;
    let value = if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    };
    Ok(SimilarityScore {
        value,
        metric: MetricKind::JaccardPairs,
    })
}

/// Weighted (multiset) Jaccard: sum of per-key minima over sum of
/// per-key maxima. Two empty histograms score 1.
pub fn jaccard_weighted(
    a: &NgramHistogram,
    b: &NgramHistogram,
) -> Result<SimilarityScore, MetricsError> {
    check_pair(a, b)?;
    Ok(SimilarityScore {
        value: weighted_jaccard_counts(&a.counts, &b.counts),
        metric: MetricKind::JaccardWeighted,
    })
}

/// min-sum / max-sum Jaccard over arbitrary count maps; both empty -> 1.
pub(crate) fn weighted_jaccard_counts<K: Ord>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let mut min_sum = 0u64;
    let mut max_sum = 0u64;
    for (k, &va) in a {
        let vb = b.get(k).copied().unwrap_or(0);
        min_sum += va.min(vb);
        max_sum += va.max(vb);
    }
    for (k, &vb) in b {
        if !a.contains_key(k) {
            max_sum += vb;
        }
    }
    if max_sum == 0 {
        1.0
    } else {
        min_sum as f64 / max_sum as f64
    }
}
