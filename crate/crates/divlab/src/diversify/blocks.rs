//! Basic-block randomization: probabilistic block splitting followed by
//! a uniform shuffle of every non-entry block. Broken fallthroughs are
//! materialized as explicit jumps; a conditional branch whose
//! fallthrough moved away gets a one-jump trampoline block right behind
//! it. The entry block never moves, which keeps the container's entry
//! offset meaningful without a relocation table.

use super::DiversityConfig;
use crate::isa::{BasicBlock, Function, Program, Terminator};
use crate::rng::Rng;
use std::collections::BTreeSet;

struct LabelMint {
    taken: BTreeSet<String>,
    // Monotone suffix counter; probing from zero per call would cost
    // quadratic time on heavily split functions.
    next: usize,
}

impl LabelMint {
    fn new(f: &Function) -> Self {
        LabelMint {
            taken: f.blocks.iter().map(|b| b.label.clone()).collect(),
            next: 0,
        }
    }

    fn fresh(&mut self, stem: &str) -> String {
        loop {
            let candidate = format!("{stem}{}", self.next);
            self.next += 1;
            if self.taken.insert(candidate.clone()) {
                return candidate;
            }
        }
    }
}

fn split_blocks(
    f: &Function,
    rng: &mut Rng,
    p_split: f64,
    mint: &mut LabelMint,
) -> Vec<BasicBlock> {
    let mut out = Vec::with_capacity(f.blocks.len());
    for b in &f.blocks {
        let mut cuts = Vec::new();
        for k in 1..=b.body.len() {
            if rng.gen_bool(p_split) {
                cuts.push(k);
            }
        }
        if cuts.is_empty() {
            out.push(b.clone());
            continue;
        }
        let mut segments: Vec<Vec<_>> = Vec::with_capacity(cuts.len() + 1);
        let mut last = 0;
        for &k in &cuts {
            segments.push(b.body[last..k].to_vec());
            last = k;
        }
        segments.push(b.body[last..].to_vec());
        let labels: Vec<String> = std::iter::once(b.label.clone())
            .chain((1..segments.len()).map(|_| mint.fresh(&format!("{}__sp", b.label))))
            .collect();
        let count = segments.len();
        for (i, body) in segments.into_iter().enumerate() {
            let terminator = if i + 1 < count {
                Terminator::FallThrough {
                    target: labels[i + 1].clone(),
                }
            } else {
                b.terminator.clone()
            };
            out.push(BasicBlock {
                label: labels[i].clone(),
                body,
                terminator,
            });
        }
    }
    out
}

fn repair_layout(blocks: Vec<BasicBlock>, mint: &mut LabelMint) -> Vec<BasicBlock> {
    let mut out = Vec::with_capacity(blocks.len());
    for i in 0..blocks.len() {
        let next_label = blocks.get(i + 1).map(|b| b.label.clone());
        let b = &blocks[i];
        match &b.terminator {
            Terminator::FallThrough { target } if next_label.as_deref() != Some(target) => {
                out.push(BasicBlock {
                    label: b.label.clone(),
                    body: b.body.clone(),
                    terminator: Terminator::Jmp {
                        target: target.clone(),
                    },
                });
            }
            Terminator::Branch {
                cond,
                target,
                fallthrough,
            } if next_label.as_deref() != Some(fallthrough) => {
                let tramp = mint.fresh(&format!("{}__tr", b.label));
                out.push(BasicBlock {
                    label: b.label.clone(),
                    body: b.body.clone(),
                    terminator: Terminator::Branch {
                        cond: *cond,
                        target: target.clone(),
                        fallthrough: tramp.clone(),
                    },
                });
                out.push(BasicBlock {
                    label: tramp,
                    body: Vec::new(),
                    terminator: Terminator::Jmp {
                        target: fallthrough.clone(),
                    },
                });
            }
            _ => out.push(b.clone()),
        }
    }
    out
}

/// Splits blocks at coin-flipped boundaries, shuffles every non-entry
/// block, and repairs the fallthrough structure.
pub fn randomize_blocks(p: &Program, cfg: &DiversityConfig) -> Program {
    let mut q = p.clone();
    for (fi, f) in q.functions.iter_mut().enumerate() {
        let mut rng = cfg.pass_rng("blocks", fi);
        let mut mint = LabelMint::new(f);
        let mut blocks = split_blocks(f, &mut rng, cfg.p_split, &mut mint);
        // Entry stays first; the rest shuffle uniformly.
        rng.shuffle(&mut blocks[1..]);
        f.blocks = repair_layout(blocks, &mut mint);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::super::testutil::assert_trace_equivalent;
    use super::*;
    use crate::isa::{encode, parse_assembly, Mnemonic};

    #[test]
    fn no_split_single_tail_block_is_identity() {
        // One non-entry block shuffles to itself; p_split 0 cuts nothing.
        let p = parse_assembly("fn main {\ne:\n movi r1, 1\n jmp fin\nfin:\n out r1\n halt\n}\n")
            .unwrap();
        let cfg = DiversityConfig {
            p_split: 0.0,
            ..DiversityConfig::default()
        };
        for seed in 0..5 {
            let q = randomize_blocks(&p, &cfg.clone().with_seed(seed));
            assert_eq!(encode(&q).unwrap(), encode(&p).unwrap());
        }
    }

    #[test]
    fn forced_split_materializes_jumps_when_halves_separate() {
        let p = parse_assembly(
            "fn main {\ne:\n movi r1, 1\n movi r2, 2\n out r1\n out r2\n jmp fin\nmid:\n nop\n jmp fin\nfin:\n halt\n}\n",
        )
        .unwrap();
        let cfg = DiversityConfig {
            p_split: 1.0,
            ..DiversityConfig::default()
        };
        let mut saw_materialized_jmp = false;
        for seed in 0..10 {
            let q = randomize_blocks(&p, &cfg.clone().with_seed(seed));
            q.validate().unwrap();
            let f = &q.functions[0];
            // Entry label still first.
            assert_eq!(f.blocks[0].label, "e");
            // Splitting must increase the block count.
            assert!(f.blocks.len() > p.functions[0].blocks.len(), "seed {seed}");
            // Any jmp to a synthetic split label proves fallthrough
            // repair ran.
            for b in &f.blocks {
                if let Terminator::Jmp { target } = &b.terminator {
                    if target.contains("__sp") {
                        saw_materialized_jmp = true;
                    }
                }
            }
            assert_trace_equivalent(&p, &q, &format!("split seed {seed}"));
        }
        assert!(saw_materialized_jmp, "no fallthrough was ever repaired");
    }

    #[test]
    fn conditional_blocks_get_trampolines_when_needed() {
        let p = parse_assembly(
            "fn main {\ne:\n movi r1, 3\n movi r2, 0\nloop:\n out r1\n subi r1, 1\n cmp r1, r2\n jnz loop\nfin:\n halt\n}\n",
        )
        .unwrap();
        let cfg = DiversityConfig::default();
        let mut saw_trampoline = false;
        for seed in 0..30 {
            let q = randomize_blocks(&p, &cfg.clone().with_seed(seed));
            q.validate().unwrap();
            for b in &q.functions[0].blocks {
                if b.label.contains("__tr") {
                    assert!(b.body.is_empty());
                    assert!(matches!(b.terminator, Terminator::Jmp { .. }));
                    saw_trampoline = true;
                }
            }
            assert_trace_equivalent(&p, &q, &format!("trampoline seed {seed}"));
        }
        assert!(saw_trampoline, "no trampoline in 30 seeds");
    }

    #[test]
    fn corpus_traces_survive_block_randomization() {
        let cfg = DiversityConfig::default();
        for (name, p) in crate::corpus::load_corpus() {
            for seed in 0..10 {
                let q = randomize_blocks(&p, &cfg.clone().with_seed(seed));
                q.validate().unwrap();
                assert!(
                    q.functions.iter().map(|f| f.blocks.len()).sum::<usize>()
                        >= p.functions.iter().map(|f| f.blocks.len()).sum::<usize>(),
                    "{name}: block count may only grow"
                );
                assert_trace_equivalent(&p, &q, &format!("{name} seed {seed}"));
            }
        }
    }

    #[test]
    fn split_preserves_instruction_stream() {
        // Splitting alone (no shuffle effect on a linear chain) keeps
        // the executed instruction sequence identical.
        let p = parse_assembly(
            "fn main {\ne:\n movi r1, 1\n movi r2, 2\n add r1, r2\n out r1\n halt\n}\n",
        )
        .unwrap();
        let cfg = DiversityConfig {
            p_split: 1.0,
            ..DiversityConfig::default()
        };
        let q = randomize_blocks(&p, &cfg.with_seed(4));
        let stream: Vec<Mnemonic> = q.mnemonics().filter(|m| *m != Mnemonic::Jmp).collect();
        let original: Vec<Mnemonic> = p.mnemonics().collect();
        let mut sorted_a = stream.clone();
        let mut sorted_b = original.clone();
        sorted_a.sort_unstable();
        sorted_b.sort_unstable();
        assert_eq!(
            sorted_a, sorted_b,
            "non-jump instruction multiset preserved"
        );
        assert_trace_equivalent(&p, &q, "pure split");
    }
}
