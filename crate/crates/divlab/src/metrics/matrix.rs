//! Pairwise similarity matrices over program populations, with the
//! group aggregations the experiment tables use: within-group mean,
//! cross-group mean, and within-group minimum.

use super::cfgsim::{fingerprints, score_fingerprints, Fingerprints};
use super::{
    jaccard_pairs, jaccard_weighted, mnemonic_histogram, similarity_s, MetricKind, MetricsError,
    NgramHistogram,
};
use crate::exec;
use crate::isa::Program;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixWarning {
    pub row: String,
    pub col: String,
    pub message: String,
}

/// A symmetric similarity matrix with row/column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub metric: MetricKind,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub warnings: Vec<MatrixWarning>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Mean over all unordered pairs inside one group.
    pub fn within_group_mean(&self, group: &[usize]) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                sum += self.values[i][j];
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    /// Minimum over all unordered pairs inside one group.
    pub fn within_group_min(&self, group: &[usize]) -> Option<f64> {
        let mut min: Option<f64> = None;
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                let v = self.values[i][j];
                min = Some(match min {
                    Some(m) => m.min(v),
                    None => v,
                });
            }
        }
        min
    }

    /// Mean over every cross pair of two disjoint groups.
    pub fn cross_group_mean(&self, a: &[usize], b: &[usize]) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &i in a {
            for &j in b {
                sum += self.values[i][j];
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    /// CSV with a label header row and label-prefixed rows; the full
    /// symmetric square is emitted with four decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("label");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.labels.len() {
                let _ = write!(out, ",{:.4}", self.values[i][j]);
            }
            out.push('\n');
        }
        out
    }
}

/// Scores every unordered pair of the population under one metric.
/// Histogram metrics take the gram length `n`; the CFG metric ignores it.
pub fn pairwise_matrix(
    population: &[(String, Program)],
    metric: MetricKind,
    n: usize,
) -> Result<SimilarityMatrix, MetricsError> {
    let labels: Vec<String> = population.iter().map(|(l, _)| l.clone()).collect();
    let count = population.len();

    // Per-member data precomputed once; cells only combine.
    enum Prepared {
        Hist(Vec<NgramHistogram>),
        Cfg(Vec<Fingerprints>),
    }
    let prepared = if metric == MetricKind::Cfg {
        Prepared::Cfg(exec::map_slice(population, |(_, p)| fingerprints(p)))
    } else {
        let results = exec::map_slice(population, |(_, p)| mnemonic_histogram(p, n));
        Prepared::Hist(results.into_iter().collect::<Result<_, _>>()?)
    };

    // Upper triangle (including the diagonal), computed cell-wise.
    let mut pairs = Vec::with_capacity(count * (count + 1) / 2);
    for i in 0..count {
        for j in i..count {
            pairs.push((i, j));
        }
    }
    let cells = exec::map_range(pairs.len(), |idx| {
        let (i, j) = pairs[idx];
        match &prepared {
            Prepared::Cfg(fps) => Ok((score_fingerprints(&fps[i], &fps[j]), false)),
            Prepared::Hist(h) => {
                let (a, b) = (&h[i], &h[j]);
                if a.total() == 0 && b.total() == 0 {
                    // Empty against empty is defined as 1 so matrices
                    // stay NaN-free; surfaced as a warning.
                    return Ok((super::SimilarityScore { value: 1.0, metric }, true));
                }
                let score = match metric {
                    MetricKind::S => similarity_s(a, b)?,
                    MetricKind::JaccardPairs => jaccard_pairs(a, b)?,
                    MetricKind::JaccardWeighted => jaccard_weighted(a, b)?,
                    MetricKind::Cfg => unreachable!(),
                };
                Ok((score, false))
            }
        }
    });

    let mut values = vec![vec![0.0; count]; count];
    let mut warnings = Vec::new();
    for (idx, cell) in cells.into_iter().enumerate() {
        let (i, j) = pairs[idx];
        let (score, warned): (super::SimilarityScore, bool) = cell?;
        values[i][j] = score.value;
        values[j][i] = score.value;
        if warned {
            warnings.push(MatrixWarning {
                row: labels[i].clone(),
                col: labels[j].clone(),
                message: "both histograms empty; similarity defined as 1".into(),
            });
        }
    }

    Ok(SimilarityMatrix {
        metric,
        labels,
        values,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_assembly;

    fn pop(srcs: &[(&str, &str)]) -> Vec<(String, Program)> {
        srcs.iter()
            .map(|(l, s)| (l.to_string(), parse_assembly(s).unwrap()))
            .collect()
    }

    #[test]
    fn single_member_matrix_is_self_score() {
        let p = pop(&[("only", "fn main {\ne:\n movi r0, 1\n out r0\n halt\n}\n")]);
        for metric in MetricKind::ALL {
            let m = pairwise_matrix(&p, metric, 1).unwrap();
            assert_eq!(m.labels, vec!["only"]);
            assert_eq!(m.get(0, 0), 1.0);
        }
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let p = pop(&[
            ("a", "fn main {\ne:\n movi r0, 1\n out r0\n halt\n}\n"),
            (
                "b",
                "fn main {\ne:\n movi r1, 2\n movi r0, 3\n out r0\n halt\n}\n",
            ),
            ("c", "fn main {\ne:\n nop\n nop\n halt\n}\n"),
        ]);
        for metric in MetricKind::ALL {
            let m = pairwise_matrix(&p, metric, 1).unwrap();
            for i in 0..3 {
                assert_eq!(m.get(i, i), 1.0, "{metric:?}");
                for j in 0..3 {
                    assert_eq!(m.get(i, j), m.get(j, i), "{metric:?}");
                    assert!((0.0..=1.0).contains(&m.get(i, j)));
                }
            }
        }
    }

    #[test]
    fn group_aggregations_match_hand_sums() {
        let p = pop(&[
            ("g1a", "fn main {\ne:\n movi r0, 1\n out r0\n halt\n}\n"),
            ("g1b", "fn main {\ne:\n movi r0, 2\n out r0\n halt\n}\n"),
            (
                "g1c",
                "fn main {\ne:\n movi r0, 3\n nop\n out r0\n halt\n}\n",
            ),
            ("g2a", "fn main {\ne:\n push r1\n pop r2\n halt\n}\n"),
            ("g2b", "fn main {\ne:\n push r3\n pop r3\n nop\n halt\n}\n"),
        ]);
        let m = pairwise_matrix(&p, MetricKind::JaccardWeighted, 1).unwrap();
        let g1 = [0usize, 1, 2];
        let g2 = [3usize, 4];
        // Within-group mean over the 3 unordered pairs.
        let want_within = (m.get(0, 1) + m.get(0, 2) + m.get(1, 2)) / 3.0;
        assert!((m.within_group_mean(&g1).unwrap() - want_within).abs() < 1e-12);
        // Cross-group mean over all 6 = 3x2 pairs.
        let want_cross =
            (m.get(0, 3) + m.get(0, 4) + m.get(1, 3) + m.get(1, 4) + m.get(2, 3) + m.get(2, 4))
                / 6.0;
        assert!((m.cross_group_mean(&g1, &g2).unwrap() - want_cross).abs() < 1e-12);
        // Min aggregation picks the smallest pair.
        let want_min = m.get(0, 1).min(m.get(0, 2)).min(m.get(1, 2));
        assert_eq!(m.within_group_min(&g1).unwrap(), want_min);
        assert!(m.within_group_mean(&[0]).is_none());
    }

    #[test]
    fn cross_group_mean_averages_all_nine_pairs_of_two_triples() {
        // Two groups of three variants: the cross mean is the average of
        // all 9 individual pair scores.
        let p = pop(&[
            ("a0", "fn main {\ne:\n movi r0, 1\n out r0\n halt\n}\n"),
            (
                "a1",
                "fn main {\ne:\n movi r0, 2\n nop\n out r0\n halt\n}\n",
            ),
            (
                "a2",
                "fn main {\ne:\n movi r1, 3\n mov r0, r1\n out r0\n halt\n}\n",
            ),
            ("b0", "fn main {\ne:\n push r1\n pop r2\n halt\n}\n"),
            ("b1", "fn main {\ne:\n push r3\n nop\n pop r3\n halt\n}\n"),
            (
                "b2",
                "fn main {\ne:\n push r4\n pop r4\n nop\n nop\n halt\n}\n",
            ),
        ]);
        let m = pairwise_matrix(&p, MetricKind::JaccardPairs, 1).unwrap();
        let ga = [0usize, 1, 2];
        let gb = [3usize, 4, 5];
        let mut hand = 0.0;
        for &i in &ga {
            for &j in &gb {
                hand += m.get(i, j);
            }
        }
        hand /= 9.0;
        assert!((m.cross_group_mean(&ga, &gb).unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trips_through_parsing() {
        let p = pop(&[
            ("x", "fn main {\ne:\n movi r0, 1\n out r0\n halt\n}\n"),
            ("y", "fn main {\ne:\n nop\n halt\n}\n"),
        ]);
        let m = pairwise_matrix(&p, MetricKind::S, 1).unwrap();
        let csv = m.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "label,x,y");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "x");
        let v: f64 = row[2].parse().unwrap();
        assert!((v - m.get(0, 1)).abs() < 1e-4);
        // Symmetric lower triangle repeated.
        let row2: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row2[1], row[2]);
    }
}
