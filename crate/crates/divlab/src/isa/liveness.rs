//! Backward liveness dataflow over a function's CFG. The result tells
//! which registers may still be read before being overwritten at every
//! instruction position; garbage insertion consults it to pick provably
//! dead destination registers.
//!
//! Conventions baked into the transfer functions: sp is always live, a
//! `call` clobbers r0..r7 and leaves arguments on the stack (so it uses
//! only sp), and `ret` uses r0 (the return register) and sp.

use super::{Function, Instruction, Reg, Terminator, R0, SP};
use std::collections::BTreeMap;

/// A set of registers, packed into a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegSet(u16);

impl RegSet {
    pub const EMPTY: RegSet = RegSet(0);

    pub fn insert(&mut self, r: Reg) {
        self.0 |= 1 << r.0;
    }

    pub fn remove(&mut self, r: Reg) {
        self.0 &= !(1 << r.0);
    }

    pub fn contains(self, r: Reg) -> bool {
        self.0 & (1 << r.0) != 0
    }

    pub fn union(self, other: RegSet) -> RegSet {
        RegSet(self.0 | other.0)
    }

    pub fn intersects(self, other: RegSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Reg> {
        Reg::all().into_iter().filter(move |r| self.contains(*r))
    }

    pub fn of(regs: &[Reg]) -> RegSet {
        let mut s = RegSet::EMPTY;
        for &r in regs {
            s.insert(r);
        }
        s
    }
}

/// Registers read and written by one instruction.
pub(crate) fn instruction_uses_defs(ins: &Instruction) -> (RegSet, RegSet) {
    let mut uses = RegSet::EMPTY;
    let mut defs = RegSet::EMPTY;
    match ins {
        Instruction::Mov { dst, src } | Instruction::Lea { dst, src, .. } => {
            uses.insert(*src);
            defs.insert(*dst);
        }
        Instruction::Movi { dst, .. } => defs.insert(*dst),
        Instruction::Alu { dst, src, .. } => {
            uses.insert(*dst);
            uses.insert(*src);
            defs.insert(*dst);
        }
        Instruction::AluImm { dst, .. } => {
            uses.insert(*dst);
            defs.insert(*dst);
        }
        Instruction::Load { dst, base, .. } => {
            uses.insert(*base);
            defs.insert(*dst);
        }
        Instruction::Store { src, base, .. } => {
            uses.insert(*src);
            uses.insert(*base);
        }
        Instruction::Push { src } => {
            uses.insert(*src);
            uses.insert(SP);
            defs.insert(SP);
        }
        Instruction::Pop { dst } => {
            uses.insert(SP);
            defs.insert(*dst);
            defs.insert(SP);
        }
        Instruction::Cmp { lhs, rhs } => {
            uses.insert(*lhs);
            uses.insert(*rhs);
        }
        Instruction::Call { .. } => {
            // Arguments travel on the stack; the callee may clobber every
            // general register.
            uses.insert(SP);
            defs = RegSet::of(&Reg::general());
            defs.insert(SP);
        }
        Instruction::Out { src } => uses.insert(*src),
        Instruction::Nop => {}
    }
    (uses, defs)
}

fn terminator_uses(t: &Terminator) -> RegSet {
    match t {
        Terminator::Ret => RegSet::of(&[R0, SP]),
        _ => RegSet::EMPTY,
    }
}

/// Live register sets per instruction position. Position `i` in a block
/// is the point just before body instruction `i`; position `body.len()`
/// is the point just before the terminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LivenessMap {
    sets: BTreeMap<String, Vec<RegSet>>,
}

impl LivenessMap {
    /// Registers live just before position `idx` of `block`.
    pub fn live_before(&self, block: &str, idx: usize) -> RegSet {
        self.sets[block][idx]
    }

    pub fn block_sets(&self, block: &str) -> &[RegSet] {
        &self.sets[block]
    }
}

/// Computes liveness to a fixed point. sp is forced live at every
/// position after the dataflow converges.
pub fn liveness(f: &Function) -> LivenessMap {
    let idx_of: BTreeMap<&str, usize> = f
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();
    let successors: Vec<Vec<usize>> = f
        .blocks
        .iter()
        .map(|b| match &b.terminator {
            Terminator::Jmp { target } | Terminator::FallThrough { target } => {
                vec![idx_of[target.as_str()]]
            }
            Terminator::Branch {
                target,
                fallthrough,
                ..
            } => vec![idx_of[target.as_str()], idx_of[fallthrough.as_str()]],
            Terminator::Ret | Terminator::Halt => vec![],
        })
        .collect();

    let n = f.blocks.len();
    let mut live_in = vec![RegSet::EMPTY; n];
    let mut live_out = vec![RegSet::EMPTY; n];
    loop {
        let mut changed = false;
        for i in (0..n).rev() {
            let mut out = RegSet::EMPTY;
            for &s in &successors[i] {
                out = out.union(live_in[s]);
            }
            let mut live = out.union(terminator_uses(&f.blocks[i].terminator));
            for ins in f.blocks[i].body.iter().rev() {
                let (uses, defs) = instruction_uses_defs(ins);
                for r in defs.iter() {
                    live.remove(r);
                }
                live = live.union(uses);
            }
            if live != live_in[i] || out != live_out[i] {
                changed = true;
                live_in[i] = live;
                live_out[i] = out;
            }
        }
        if !changed {
            break;
        }
    }

    // Expand per-block results to per-position sets, forcing sp live.
    let mut sets = BTreeMap::new();
    for (i, b) in f.blocks.iter().enumerate() {
        let mut positions = vec![RegSet::EMPTY; b.body.len() + 1];
        let mut live = live_out[i].union(terminator_uses(&b.terminator));
        positions[b.body.len()] = live;
        for (j, ins) in b.body.iter().enumerate().rev() {
            let (uses, defs) = instruction_uses_defs(ins);
            for r in defs.iter() {
                live.remove(r);
            }
            live = live.union(uses);
            positions[j] = live;
        }
        for set in &mut positions {
            set.insert(SP);
        }
        sets.insert(b.label.clone(), positions);
    }
    LivenessMap { sets }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_assembly, R1, R2, R3};
    use super::*;

    #[test]
    fn live_set_at_halt_is_sp_only() {
        let p = parse_assembly("fn main {\ne:\n out r0\n halt\n}\n").unwrap();
        let lv = liveness(&p.functions[0]);
        // Position 1 is just before the halt terminator.
        assert_eq!(lv.live_before("e", 1), RegSet::of(&[SP]));
        // r0 is read by out, so it is live at position 0.
        assert!(lv.live_before("e", 0).contains(R0));
    }

    #[test]
    fn overwritten_register_is_dead_between_defs() {
        let p =
            parse_assembly("fn main {\ne:\n movi r1, 5\n movi r1, 6\n out r1\n halt\n}\n").unwrap();
        let lv = liveness(&p.functions[0]);
        // Just after the first movi (= before the second) r1 is dead.
        assert!(!lv.live_before("e", 1).contains(R1));
        assert!(lv.live_before("e", 2).contains(R1));
    }

    #[test]
    fn loop_carried_register_stays_live() {
        let src = "fn main {\ne:\n movi r1, 5\n movi r2, 0\nloop:\n add r2, r1\n subi r1, 1\n movi r3, 0\n cmp r1, r3\n jnz loop\n out r2\n halt\n}\n";
        let p = parse_assembly(src).unwrap();
        let lv = liveness(&p.functions[0]);
        // At loop head both the counter and the accumulator are live.
        let head = lv.live_before("loop", 0);
        assert!(head.contains(R1));
        assert!(head.contains(R2));
        assert!(!head.contains(R3));
    }

    #[test]
    fn liveness_is_a_fixed_point() {
        let src = "fn main {\ne:\n movi r1, 3\n movi r2, 7\nloop:\n add r2, r2\n subi r1, 1\n movi r3, 0\n cmp r1, r3\n jnz loop\n out r2\n halt\n}\n";
        let p = parse_assembly(src).unwrap();
        let f = &p.functions[0];
        let lv = liveness(f);
        // Re-applying the per-block transfer to the published sets must
        // reproduce them: live_before(i) = (live_before(i+1) - defs) + uses,
        // modulo the forced-sp convention.
        for b in &f.blocks {
            let sets = lv.block_sets(&b.label);
            for (j, ins) in b.body.iter().enumerate() {
                let (uses, defs) = instruction_uses_defs(ins);
                let mut expect = sets[j + 1];
                for r in defs.iter() {
                    expect.remove(r);
                }
                expect = expect.union(uses);
                expect.insert(SP);
                assert_eq!(sets[j], expect, "block {} position {}", b.label, j);
            }
        }
        // And a full recomputation changes nothing.
        assert_eq!(lv, liveness(f));
    }

    #[test]
    fn matches_path_enumeration_on_acyclic_functions() {
        // Independent oracle: enumerate every path through an acyclic
        // CFG and mark a register live if some path reads it before
        // writing it.
        let src = "fn main {\ne:\n movi r1, 1\n movi r2, 2\n movi r3, 0\n cmp r1, r2\n jz a\nmid:\n out r1\n jmp b\na:\n out r2\n mov r1, r2\nfall:\n jmp b\nb:\n out r1\n halt\n}\n";
        let p = parse_assembly(src).unwrap();
        let f = &p.functions[0];
        let lv = liveness(f);

        let oracle = oracle_liveness(f);
        for b in &f.blocks {
            for idx in 0..=b.body.len() {
                let got = lv.live_before(&b.label, idx);
                let want = oracle[&(b.label.clone(), idx)];
                assert_eq!(got, want, "block {} position {}", b.label, idx);
            }
        }
    }

    /// Brute-force liveness for acyclic functions: walk every path from
    /// each position to function exit; a register is live if it is read
    /// before written on some path. sp forced live to match convention.
    fn oracle_liveness(f: &Function) -> BTreeMap<(String, usize), RegSet> {
        use super::super::Reg;
        let mut result = BTreeMap::new();
        for b in &f.blocks {
            for idx in 0..=b.body.len() {
                let mut set = RegSet::EMPTY;
                for r in Reg::all() {
                    if reg_read_on_some_path(f, &b.label, idx, r, &mut Vec::new()) {
                        set.insert(r);
                    }
                }
                set.insert(SP);
                result.insert((b.label.clone(), idx), set);
            }
        }
        result
    }

    fn reg_read_on_some_path(
        f: &Function,
        block: &str,
        idx: usize,
        r: Reg,
        visiting: &mut Vec<String>,
    ) -> bool {
        // The test CFG is acyclic; guard anyway so a bad test program
        // cannot hang the suite.
        if visiting.iter().any(|v| v == block) {
            panic!("oracle requires an acyclic CFG");
        }
        let b = f.block(block).unwrap();
        for ins in &b.body[idx..] {
            let (uses, defs) = instruction_uses_defs(ins);
            if uses.contains(r) {
                return true;
            }
            if defs.contains(r) {
                return false;
            }
        }
        if terminator_uses(&b.terminator).contains(r) {
            return true;
        }
        let targets: Vec<&str> = match &b.terminator {
            Terminator::Jmp { target } | Terminator::FallThrough { target } => vec![target],
            Terminator::Branch {
                target,
                fallthrough,
                ..
            } => vec![target, fallthrough],
            Terminator::Ret | Terminator::Halt => vec![],
        };
        visiting.push(block.to_string());
        let found = targets
            .iter()
            .any(|t| reg_read_on_some_path(f, t, 0, r, visiting));
        visiting.pop();
        found
    }
}
