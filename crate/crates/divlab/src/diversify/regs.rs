//! Whole-program register permutation. r0 (return register) and sp stay
//! fixed by the calling convention; r1..r7 are renamed by one uniform
//! random permutation applied to every operand in the program.

use super::DiversityConfig;
use crate::isa::{Program, Reg};

/// Draws the permutation and rewrites every register operand.
pub fn permute_registers(p: &Program, cfg: &DiversityConfig) -> Program {
    let mut rng = cfg.pass_rng("registers", 0);
    let mut table: Vec<Reg> = Reg::permutable().to_vec();
    rng.shuffle(&mut table);
    apply_permutation(p, &table)
}

/// Applies an explicit mapping of r1..r7 (index 0 holds the image of r1).
pub(crate) fn apply_permutation(p: &Program, table: &[Reg]) -> Program {
    debug_assert_eq!(table.len(), 7);
    let map = |r: Reg| -> Reg {
        if r.0 >= 1 && r.0 <= 7 {
            table[(r.0 - 1) as usize]
        } else {
            r
        }
    };
    let mut q = p.clone();
    for f in &mut q.functions {
        for b in &mut f.blocks {
            for ins in &mut b.body {
                ins.map_regs(map);
            }
        }
    }
    q
}
