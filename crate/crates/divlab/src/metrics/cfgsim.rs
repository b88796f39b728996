//! Structural similarity from CFG shape. Every basic block is reduced to
//! a coarse fingerprint (in-degree, out-degree, size bucket, terminator
//! kind); two programs are compared by weighted Jaccard over the block
//! fingerprint multiset and over the edge multiset (fingerprints of both
//! endpoints plus the edge kind), averaged with equal weight.

use super::{weighted_jaccard_counts, MetricKind, SimilarityScore};
use crate::isa::{build_cfg, EdgeKind, Program, Terminator};
use std::collections::BTreeMap;

/// Size bucketed to the largest power of two at or below the count.
fn bucket(count: usize) -> u32 {
    if count == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - count.leading_zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct BlockFp {
    in_degree: u32,
    out_degree: u32,
    size_bucket: u32,
    terminator: u8,
}

fn terminator_tag(t: &Terminator) -> u8 {
    match t {
        Terminator::Jmp { .. } => 0,
        Terminator::Branch { cond, .. } => 1 + *cond as u8,
        Terminator::Ret => 5,
        Terminator::Halt => 6,
        Terminator::FallThrough { .. } => 7,
    }
}

pub(crate) type Fingerprints = (
    BTreeMap<BlockFp, u64>,
    BTreeMap<(u8, BlockFp, BlockFp), u64>,
);

pub(crate) fn fingerprints(p: &Program) -> Fingerprints {
    let mut blocks: BTreeMap<BlockFp, u64> = BTreeMap::new();
    let mut edges: BTreeMap<(u8, BlockFp, BlockFp), u64> = BTreeMap::new();
    for f in &p.functions {
        let cfg = build_cfg(f);
        let fp_of: BTreeMap<&str, BlockFp> = f
            .blocks
            .iter()
            .map(|b| {
                let fp = BlockFp {
                    in_degree: cfg.in_degree(&b.label) as u32,
                    out_degree: cfg.out_degree(&b.label) as u32,
                    size_bucket: bucket(b.instruction_count()),
                    terminator: terminator_tag(&b.terminator),
                };
                (b.label.as_str(), fp)
            })
            .collect();
        for fp in fp_of.values() {
            *blocks.entry(*fp).or_insert(0) += 1;
        }
        for e in &cfg.edges {
            let kind = match e.kind {
                EdgeKind::FallThrough => 0u8,
                EdgeKind::Jump => 1,
                EdgeKind::BranchTaken => 2,
            };
            let key = (kind, fp_of[e.from.as_str()], fp_of[e.to.as_str()]);
            *edges.entry(key).or_insert(0) += 1;
        }
    }
    (blocks, edges)
}

pub(crate) fn score_fingerprints(a: &Fingerprints, b: &Fingerprints) -> SimilarityScore {
    let block_score = weighted_jaccard_counts(&a.0, &b.0);
    let edge_score = weighted_jaccard_counts(&a.1, &b.1);
    SimilarityScore {
        value: (block_score + edge_score) / 2.0,
        metric: MetricKind::Cfg,
    }
}

/// Scores two programs by CFG shape; 1 for structurally identical
/// programs, less as block or edge fingerprint multisets drift apart.
pub fn cfg_similarity(a: &Program, b: &Program) -> SimilarityScore {
    score_fingerprints(&fingerprints(a), &fingerprints(b))
}
