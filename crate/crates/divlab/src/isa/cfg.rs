//! Intra-function control-flow graphs: one node per basic block, edges
//! labeled by how control transfers, plus a per-node mnemonic histogram
//! for structural matching.

use super::{Function, Mnemonic, Terminator};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    FallThrough,
    Jump,
    BranchTaken,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::FallThrough => "fallthrough",
            EdgeKind::Jump => "jump",
            EdgeKind::BranchTaken => "branch-taken",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfgEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    /// Block labels in layout order; the first is the entry.
    pub nodes: Vec<String>,
    pub edges: Vec<CfgEdge>,
    /// Mnemonic histogram per node (body plus encoded terminator).
    pub histograms: BTreeMap<String, BTreeMap<Mnemonic, u64>>,
}

impl Cfg {
    pub fn successors<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a CfgEdge> {
        self.edges.iter().filter(move |e| e.from == label)
    }

    pub fn out_degree(&self, label: &str) -> usize {
        self.successors(label).count()
    }

    pub fn in_degree(&self, label: &str) -> usize {
        self.edges.iter().filter(|e| e.to == label).count()
    }
}

/// Builds the CFG of a function. Edge kinds follow terminator semantics:
/// an unconditional `jmp` yields a jump edge, a conditional branch a
/// branch-taken edge plus a fallthrough edge, an implicit fallthrough a
/// fallthrough edge, and `ret`/`halt` nothing.
pub fn build_cfg(f: &Function) -> Cfg {
    let mut edges = Vec::new();
    let mut histograms = BTreeMap::new();
    for b in &f.blocks {
        let mut hist: BTreeMap<Mnemonic, u64> = BTreeMap::new();
        for m in b.mnemonics() {
            *hist.entry(m).or_insert(0) += 1;
        }
        histograms.insert(b.label.clone(), hist);
        match &b.terminator {
            Terminator::Jmp { target } => edges.push(CfgEdge {
                from: b.label.clone(),
                to: target.clone(),
                kind: EdgeKind::Jump,
            }),
            Terminator::Branch {
                target,
                fallthrough,
                ..
            } => {
                edges.push(CfgEdge {
                    from: b.label.clone(),
                    to: target.clone(),
                    kind: EdgeKind::BranchTaken,
                });
                edges.push(CfgEdge {
                    from: b.label.clone(),
                    to: fallthrough.clone(),
                    kind: EdgeKind::FallThrough,
                });
            }
            Terminator::FallThrough { target } => edges.push(CfgEdge {
                from: b.label.clone(),
                to: target.clone(),
                kind: EdgeKind::FallThrough,
            }),
            Terminator::Ret | Terminator::Halt => {}
        }
    }
    Cfg {
        nodes: f.blocks.iter().map(|b| b.label.clone()).collect(),
        edges,
        histograms,
    }
}
