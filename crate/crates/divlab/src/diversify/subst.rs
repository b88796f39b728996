//! Instruction substitution: semantics-preserving swaps between
//! equivalent instruction forms, flipped by coin at every opportunity.
//!
//! Classes:
//!  (a) `mov rd, rs`   <-> `lea rd, rs, 0`
//!  (b) `movi rd, 0`   <-> `xor rd, rd`
//!  (c) `addi rd, k`   <-> `subi rd, -k`   (k != i32::MIN)

use super::DiversityConfig;
use crate::isa::{AluImmOp, AluOp, Imm, Instruction, Program};

/// The substituted form of a class member, or None for non-members.
pub(crate) fn flip(ins: &Instruction) -> Option<Instruction> {
    match ins {
        Instruction::Mov { dst, src } => Some(Instruction::Lea {
            dst: *dst,
            src: *src,
            imm: Imm::Const(0),
        }),
        Instruction::Lea { dst, src, imm } if *imm == Imm::Const(0) => Some(Instruction::Mov {
            dst: *dst,
            src: *src,
        }),
        Instruction::Movi { dst, imm } if *imm == Imm::Const(0) => Some(Instruction::Alu {
            op: AluOp::Xor,
            dst: *dst,
            src: *dst,
        }),
        Instruction::Alu {
            op: AluOp::Xor,
            dst,
            src,
        } if dst == src => Some(Instruction::Movi {
            dst: *dst,
            imm: Imm::Const(0),
        }),
        Instruction::AluImm { op, dst, imm } => match imm {
            Imm::Const(k) if *k != i32::MIN => {
                let flipped = match op {
                    AluImmOp::Addi => AluImmOp::Subi,
                    AluImmOp::Subi => AluImmOp::Addi,
                };
                Some(Instruction::AluImm {
                    op: flipped,
                    dst: *dst,
                    imm: Imm::Const(k.wrapping_neg()),
                })
            }
            _ => None,
        },
        _ => None,
    }
}

/// Replaces each substitution-class member by its alternate form with
/// probability `p_substitute`. Non-members pass through untouched.
pub fn substitute_instructions(p: &Program, cfg: &DiversityConfig) -> Program {
    let mut q = p.clone();
    for (fi, f) in q.functions.iter_mut().enumerate() {
        let mut rng = cfg.pass_rng("substitute", fi);
        for b in &mut f.blocks {
            for ins in &mut b.body {
                if let Some(alt) = flip(ins) {
                    if rng.gen_bool(cfg.p_substitute) {
                        *ins = alt;
                    }
                }
            }
        }
    }
    q
}
