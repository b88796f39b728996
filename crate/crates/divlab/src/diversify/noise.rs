//! Nop and garbage insertion.
//!
//! Insertion points sit before each instruction of a block (terminator
//! included), except the gap between a `cmp` and the conditional branch
//! that consumes it. Nops are free; garbage instructions are arithmetic
//! or moves whose destination is a register proved dead by liveness at
//! that point, so the visible trace cannot change.

use super::DiversityConfig;
use crate::isa::{
    liveness, AluImmOp, AluOp, BasicBlock, Imm, Instruction, Program, Reg, Terminator,
};
use crate::rng::Rng;

/// Positions where material may be inserted: before body index `i` for
/// each i, plus before an explicit terminator, minus the cmp/branch gap.
fn insertion_points(b: &BasicBlock) -> Vec<usize> {
    let mut points: Vec<usize> = (0..b.body.len()).collect();
    let has_terminator_slot = b.terminator.mnemonic().is_some();
    if has_terminator_slot {
        let guards_branch = matches!(b.terminator, Terminator::Branch { .. })
            && matches!(b.body.last(), Some(Instruction::Cmp { .. }));
        if !guards_branch {
            points.push(b.body.len());
        }
    }
    points
}

/// Inserts a run of 1..=max_garbage_len nops before each eligible point
/// with probability `p_nop`.
pub fn insert_nops(p: &Program, cfg: &DiversityConfig) -> Program {
    let mut q = p.clone();
    for (fi, f) in q.functions.iter_mut().enumerate() {
        let mut rng = cfg.pass_rng("nops", fi);
        for b in &mut f.blocks {
            let points = insertion_points(b);
            let mut body = Vec::with_capacity(b.body.len());
            let mut old = b.body.drain(..).collect::<Vec<_>>().into_iter();
            for idx in 0..=old.len() {
                if points.contains(&idx) && rng.gen_bool(cfg.p_nop) {
                    let run = rng.gen_range_inclusive(1, cfg.max_garbage_len);
                    body.extend(std::iter::repeat_n(Instruction::Nop, run));
                }
                if let Some(ins) = old.next() {
                    body.push(ins);
                }
            }
            b.body = body;
        }
    }
    q
}

fn random_garbage(rng: &mut Rng, dst: Reg) -> Instruction {
    let any_src = |rng: &mut Rng| Reg::all()[rng.gen_range(Reg::COUNT)];
    match rng.gen_range(5) {
        0 => Instruction::Movi {
            dst,
            imm: Imm::Const(rng.next_u32() as i32),
        },
        1 => Instruction::Mov {
            dst,
            src: any_src(rng),
        },
        2 => Instruction::Lea {
            dst,
            src: any_src(rng),
            imm: Imm::Const(rng.next_u32() as i32),
        },
        3 => Instruction::Alu {
            op: AluOp::ALL[rng.gen_range(AluOp::ALL.len())],
            dst,
            src: any_src(rng),
        },
        _ => Instruction::AluImm {
            op: if rng.gen_bool(0.5) {
                AluImmOp::Addi
            } else {
                AluImmOp::Subi
            },
            dst,
            imm: Imm::Const(rng.next_u32() as i32),
        },
    }
}

/// Inserts runs of dead-destination garbage at points chosen with
/// probability `p_garbage`. Points where every general register is live
/// are skipped.
#[allow(clippy::needless_range_loop)] // idx walks insertion points, not just `sets`
pub fn insert_garbage(p: &Program, cfg: &DiversityConfig) -> Program {
    let mut q = p.clone();
    for (fi, f) in q.functions.iter_mut().enumerate() {
        let live = liveness(f);
        let mut rng = cfg.pass_rng("garbage", fi);
        for b in &mut f.blocks {
            let points = insertion_points(b);
            let sets = live.block_sets(&b.label).to_vec();
            let mut body = Vec::with_capacity(b.body.len());
            let mut old = b.body.drain(..).collect::<Vec<_>>().into_iter();
            for idx in 0..=old.len() {
                if points.contains(&idx) && rng.gen_bool(cfg.p_garbage) {
                    let dead: Vec<Reg> = Reg::general()
                        .into_iter()
                        .filter(|r| !sets[idx].contains(*r))
                        .collect();
                    if !dead.is_empty() {
                        let dst = dead[rng.gen_range(dead.len())];
                        let run = rng.gen_range_inclusive(1, cfg.max_garbage_len);
                        for _ in 0..run {
                            body.push(random_garbage(&mut rng, dst));
                        }
                    }
                }
                if let Some(ins) = old.next() {
                    body.push(ins);
                }
            }
            b.body = body;
        }
    }
    q
}
