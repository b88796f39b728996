//! Naive reference implementation of the maximal-shared-substring
//! search, kept independent of the suffix-array path so the two can be
//! checked against each other. Quadratic all-pairs matching; intended
//! for documents of a few KiB.

use super::{Occurrence, SharedSubstring};
use std::collections::BTreeSet;

fn common_prefix_len(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

fn all_occurrences(docs: &[&[u8]], needle: &[u8]) -> Vec<(usize, usize)> {
    let mut occ = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        if doc.len() < needle.len() {
            continue;
        }
        for i in 0..=doc.len() - needle.len() {
            if &doc[i..i + needle.len()] == needle {
                occ.push((d, i));
            }
        }
    }
    occ
}

fn support_of(occ: &[(usize, usize)]) -> BTreeSet<usize> {
    occ.iter().map(|(d, _)| *d).collect()
}

/// Checks the maximality definition directly on the occurrence list: no
/// one-byte extension in either direction may keep the full support set.
fn is_maximal(docs: &[&[u8]], needle: &[u8], occ: &[(usize, usize)]) -> bool {
    let support = support_of(occ);
    // Right extensions, grouped by the following byte.
    let mut right: [BTreeSet<usize>; 256] = std::array::from_fn(|_| BTreeSet::new());
    let mut left: [BTreeSet<usize>; 256] = std::array::from_fn(|_| BTreeSet::new());
    for &(d, i) in occ {
        if let Some(&c) = docs[d].get(i + needle.len()) {
            right[c as usize].insert(d);
        }
        if i > 0 {
            left[docs[d][i - 1] as usize].insert(d);
        }
    }
    !right.contains(&support) && !left.contains(&support)
}

/// Brute-force maximal shared substrings. For every occurrence position
/// the support set shrinks as the length grows; each length where it
/// changes yields a candidate, and candidates are then verified against
/// the maximality definition.
pub fn shared_substrings_naive(
    docs: &[&[u8]],
    min_len: usize,
    quorum: usize,
) -> Vec<SharedSubstring> {
    assert!(min_len >= 1);
    assert!(quorum >= 2 && quorum <= docs.len());
    let d_count = docs.len();
    let mut candidates: BTreeSet<Vec<u8>> = BTreeSet::new();

    for d in 0..d_count {
        for i in 0..docs[d].len() {
            let rest = &docs[d][i..];
            // Longest match against every other document.
            let mut best = vec![0usize; d_count];
            for (e, doc) in docs.iter().enumerate() {
                if e == d {
                    continue;
                }
                for j in 0..doc.len() {
                    let m = common_prefix_len(rest, &doc[j..]);
                    if m > best[e] {
                        best[e] = m;
                    }
                }
            }
            // Support changes exactly where some best match ends, and at
            // the end of this occurrence.
            let mut change_lengths: BTreeSet<usize> = best
                .iter()
                .enumerate()
                .filter(|(e, _)| *e != d)
                .map(|(_, &m)| m)
                .collect();
            change_lengths.insert(rest.len());
            for &len in change_lengths.range(min_len..) {
                if len > rest.len() {
                    continue;
                }
                let members = 1 + best
                    .iter()
                    .enumerate()
                    .filter(|&(e, &m)| e != d && m >= len)
                    .count();
                if members >= quorum {
                    candidates.insert(rest[..len].to_vec());
                }
            }
        }
    }

    let mut out = Vec::new();
    for bytes in candidates {
        let occ = all_occurrences(docs, &bytes);
        let support = support_of(&occ);
        if support.len() < quorum {
            continue;
        }
        if !is_maximal(docs, &bytes, &occ) {
            continue;
        }
        out.push(SharedSubstring {
            bytes,
            support: support.into_iter().collect(),
            occurrences: occ
                .into_iter()
                .map(|(member, offset)| Occurrence { member, offset })
                .collect(),
        });
    }
    super::sort_canonically(&mut out);
    out
}
