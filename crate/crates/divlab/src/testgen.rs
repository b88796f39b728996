//! Seeded random program generation for the property suites.
//!
//! Generated programs terminate by construction (counted loops, forward
//! branches, call targets strictly earlier in the function list) and
//! honor the calling convention the analyses assume: r1..r7 are treated
//! as clobbered after every call, so a value is never read out of them
//! before being re-initialized. That matters because garbage insertion
//! trusts liveness; a program that read a stale register across a call
//! would diverge under diversification and the fault would be the
//! program's, not the pass's.

use crate::isa::{
    AluImmOp, AluOp, BasicBlock, Cond, DataBlob, Function, Imm, Instruction, Mnemonic, Program,
    Reg, Terminator, INPUT_PORT, R0,
};
use crate::metrics::NgramHistogram;
use crate::rng::Rng;
use std::collections::BTreeMap;

/// Scratch memory base for generated programs, clear of the data region.
const SCRATCH_BASE: i32 = 0x9800;

struct Gen {
    rng: Rng,
    /// Registers whose value is deterministic at this point. Reading a
    /// register outside this set is forbidden (post-call junk).
    defined: [bool; 8],
    blocks: Vec<BasicBlock>,
    body: Vec<Instruction>,
    label_counter: usize,
    fn_index: usize,
}

impl Gen {
    fn fresh_label(&mut self) -> String {
        let l = format!("g{}_{}", self.fn_index, self.label_counter);
        self.label_counter += 1;
        l
    }

    fn reg(&mut self) -> Reg {
        Reg(self.rng.gen_range(8) as u8)
    }

    /// A register that is safe to read.
    fn defined_reg(&mut self) -> Reg {
        let candidates: Vec<Reg> = Reg::general()
            .into_iter()
            .filter(|r| self.defined[r.0 as usize])
            .collect();
        if candidates.is_empty() {
            let r = self.reg();
            self.emit_movi(r);
            r
        } else {
            *self.rng.choose(&candidates)
        }
    }

    fn emit(&mut self, ins: Instruction) {
        if let Some(d) = ins.dst_reg() {
            if !d.is_sp() {
                self.defined[d.0 as usize] = true;
            }
        }
        self.body.push(ins);
    }

    fn emit_movi(&mut self, dst: Reg) {
        let imm = Imm::Const(self.rng.next_u32() as i32);
        self.emit(Instruction::Movi { dst, imm });
    }

    fn close_block(&mut self, label: String, terminator: Terminator) {
        let body = std::mem::take(&mut self.body);
        self.blocks.push(BasicBlock {
            label,
            body,
            terminator,
        });
    }

    fn arith_run(&mut self, len: usize) {
        for _ in 0..len {
            let dst = self.reg();
            match self.rng.gen_range(5) {
                0 => self.emit_movi(dst),
                1 => {
                    let src = self.defined_reg();
                    self.emit(Instruction::Mov { dst, src });
                }
                2 => {
                    let src = self.defined_reg();
                    let imm = Imm::Const(self.rng.next_u32() as i32);
                    self.emit(Instruction::Lea { dst, src, imm });
                }
                3 => {
                    let op = *self.rng.choose(&AluOp::ALL);
                    let dst = self.defined_reg();
                    let src = self.defined_reg();
                    self.emit(Instruction::Alu { op, dst, src });
                }
                _ => {
                    let op = if self.rng.gen_bool(0.5) {
                        AluImmOp::Addi
                    } else {
                        AluImmOp::Subi
                    };
                    let dst = self.defined_reg();
                    let imm = Imm::Const(self.rng.next_u32() as i32);
                    self.emit(Instruction::AluImm { op, dst, imm });
                }
            }
        }
    }

    fn emit_out(&mut self) {
        let src = self.defined_reg();
        self.emit(Instruction::Out { src });
    }
}

/// Options for [`random_program_with`].
#[derive(Debug, Clone)]
pub struct GenOptions {
    pub max_helpers: usize,
    pub max_segments: usize,
    pub with_data: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            max_helpers: 2,
            max_segments: 5,
            with_data: true,
        }
    }
}

/// Generates a valid, halting program from a seed.
pub fn random_program(seed: u64) -> Program {
    random_program_with(seed, &GenOptions::default())
}

pub fn random_program_with(seed: u64, opts: &GenOptions) -> Program {
    let mut rng = Rng::derive(seed, "testgen", 0);
    let helper_count = rng.gen_range(opts.max_helpers + 1);

    let data = if opts.with_data && rng.gen_bool(0.7) {
        let blob_count = rng.gen_range_inclusive(1, 2);
        (0..blob_count)
            .map(|i| {
                let len = rng.gen_range_inclusive(1, 40);
                let bytes = (0..len).map(|_| rng.next_u32() as u8).collect();
                DataBlob::plain(format!("blob{i}"), bytes)
            })
            .collect()
    } else {
        Vec::new()
    };

    // Helpers first (named h0..); a function may only call helpers that
    // already exist, so the call graph is acyclic.
    let mut functions: Vec<Function> = Vec::new();
    for h in 0..helper_count {
        let f = gen_function(
            &mut Rng::derive(seed, "testgen-fn", h as u64 + 1),
            format!("h{h}"),
            h + 1,
            &functions,
            &data,
            opts,
            false,
        );
        functions.push(f);
    }
    let main = gen_function(
        &mut Rng::derive(seed, "testgen-fn", 0),
        "main".to_string(),
        0,
        &functions,
        &data,
        opts,
        true,
    );
    functions.push(main);

    let p = Program {
        functions,
        data,
        symbols: true,
        entry_function: "main".to_string(),
    };
    p.validate().expect("generated program is valid");
    p
}

fn gen_function(
    rng: &mut Rng,
    name: String,
    fn_index: usize,
    callees: &[Function],
    data: &[DataBlob],
    opts: &GenOptions,
    is_main: bool,
) -> Function {
    let mut g = Gen {
        rng: rng.clone(),
        defined: [false; 8],
        blocks: Vec::new(),
        body: Vec::new(),
        label_counter: 0,
        fn_index,
    };
    let entry = format!("e{fn_index}");
    let mut open_label = entry;

    let segments = g.rng.gen_range_inclusive(2, opts.max_segments.max(2));
    for _ in 0..segments {
        match g.rng.gen_range(7) {
            0 => {
                let n = g.rng.gen_range_inclusive(2, 8);
                g.arith_run(n);
                if g.rng.gen_bool(0.7) {
                    g.emit_out();
                }
            }
            1 => {
                // Scratch memory round trip.
                let base = g.reg();
                let slot = SCRATCH_BASE + 0x40 * fn_index as i32 + 4 * g.rng.gen_range(8) as i32;
                g.emit(Instruction::Movi {
                    dst: base,
                    imm: Imm::Const(slot),
                });
                let src = g.defined_reg();
                g.emit(Instruction::Store {
                    src,
                    base,
                    offset: Imm::Const(0),
                });
                let dst = g.reg();
                g.emit(Instruction::Load {
                    dst,
                    base,
                    offset: Imm::Const(0),
                });
                g.emit_out();
            }
            2 => {
                // Counted loop; the counter pair stays untouched inside.
                let counter = g.reg();
                let zero = loop {
                    let r = g.reg();
                    if r != counter {
                        break r;
                    }
                };
                let n = g.rng.gen_range_inclusive(1, 8) as i32;
                g.emit(Instruction::Movi {
                    dst: counter,
                    imm: Imm::Const(n),
                });
                g.emit(Instruction::Movi {
                    dst: zero,
                    imm: Imm::Const(0),
                });
                let head = g.fresh_label();
                let exit = g.fresh_label();
                g.close_block(
                    std::mem::replace(&mut open_label, head.clone()),
                    Terminator::FallThrough {
                        target: head.clone(),
                    },
                );
                let body_len = g.rng.gen_range_inclusive(1, 4);
                for _ in 0..body_len {
                    let dst = loop {
                        let r = g.reg();
                        if r != counter && r != zero {
                            break r;
                        }
                    };
                    let src = g.defined_reg();
                    let op = *g.rng.choose(&AluOp::ALL);
                    // The ALU form reads dst as well; an undefined dst
                    // would leak post-call junk into the trace.
                    if dst == src || !g.defined[dst.0 as usize] {
                        let imm = Imm::Const(g.rng.next_u32() as i32);
                        g.emit(Instruction::Movi { dst, imm });
                    } else {
                        g.emit(Instruction::Alu { op, dst, src });
                    }
                }
                g.emit(Instruction::AluImm {
                    op: AluImmOp::Subi,
                    dst: counter,
                    imm: Imm::Const(1),
                });
                g.emit(Instruction::Cmp {
                    lhs: counter,
                    rhs: zero,
                });
                g.close_block(
                    head.clone(),
                    Terminator::Branch {
                        cond: Cond::Jnz,
                        target: head,
                        fallthrough: exit.clone(),
                    },
                );
                open_label = exit;
            }
            3 => {
                // Branch diamond on two defined registers.
                let a = g.defined_reg();
                let b = g.defined_reg();
                g.emit(Instruction::Cmp { lhs: a, rhs: b });
                let then_l = g.fresh_label();
                let else_l = g.fresh_label();
                let join = g.fresh_label();
                let cond = match g.rng.gen_range(4) {
                    0 => Cond::Jz,
                    1 => Cond::Jnz,
                    2 => Cond::Jlt,
                    _ => Cond::Jge,
                };
                g.close_block(
                    std::mem::replace(&mut open_label, join.clone()),
                    Terminator::Branch {
                        cond,
                        target: then_l.clone(),
                        fallthrough: else_l.clone(),
                    },
                );
                // Definedness must hold on both paths; keep the
                // intersection.
                let before = g.defined;
                g.arith_run(2);
                let after_else = g.defined;
                g.close_block(
                    else_l,
                    Terminator::Jmp {
                        target: join.clone(),
                    },
                );
                g.defined = before;
                g.arith_run(2);
                let after_then = g.defined;
                g.close_block(
                    then_l,
                    Terminator::Jmp {
                        target: join.clone(),
                    },
                );
                let mut merged = [false; 8];
                for (i, m) in merged.iter_mut().enumerate() {
                    *m = after_else[i] && after_then[i];
                }
                g.defined = merged;
            }
            4 => {
                // Balanced push/pop pair.
                let src = g.defined_reg();
                g.emit(Instruction::Push { src });
                g.arith_run(1);
                let dst = g.reg();
                g.emit(Instruction::Pop { dst });
                if g.rng.gen_bool(0.5) {
                    g.emit(Instruction::Out { src: dst });
                }
            }
            5 => {
                if data.is_empty() {
                    g.arith_run(3);
                } else {
                    // Read a word out of a data blob.
                    let blob = g.rng.gen_range(data.len());
                    let base = g.reg();
                    g.emit(Instruction::Movi {
                        dst: base,
                        imm: Imm::DataAddr(data[blob].label.clone()),
                    });
                    let dst = g.reg();
                    let span = data[blob].bytes.len();
                    let offset = Imm::Const(g.rng.gen_range(span) as i32);
                    g.emit(Instruction::Load { dst, base, offset });
                    g.emit_out();
                }
            }
            _ => {
                if is_main && !callees.is_empty() {
                    // Call a helper: push 0..2 args, call, drop args,
                    // poison caller-saved registers.
                    let callee = g.rng.gen_range(callees.len());
                    let argc = g.rng.gen_range(3);
                    for _ in 0..argc {
                        let src = g.defined_reg();
                        g.emit(Instruction::Push { src });
                    }
                    g.emit(Instruction::Call {
                        target: callees[callee].name.clone(),
                    });
                    g.defined = [false; 8];
                    g.defined[R0.0 as usize] = true;
                    for _ in 0..argc {
                        let dst = g.reg();
                        g.emit(Instruction::Pop { dst });
                    }
                    g.emit(Instruction::Out { src: R0 });
                } else if g.rng.gen_bool(0.5) {
                    // Input port read.
                    let base = g.reg();
                    g.emit(Instruction::Movi {
                        dst: base,
                        imm: Imm::Const(INPUT_PORT as i32),
                    });
                    let dst = g.reg();
                    g.emit(Instruction::Load {
                        dst,
                        base,
                        offset: Imm::Const(0),
                    });
                    g.emit_out();
                } else {
                    g.arith_run(4);
                }
            }
        }
    }

    // Always leave a deterministic return value / final output.
    let src = g.defined_reg();
    g.emit(Instruction::Mov { dst: R0, src });
    if is_main {
        g.emit(Instruction::Out { src: R0 });
        g.close_block(open_label, Terminator::Halt);
    } else {
        g.close_block(open_label, Terminator::Ret);
    }

    Function {
        name,
        blocks: g.blocks,
    }
}

/// A random n-gram histogram: keys drawn from the mnemonic alphabet,
/// counts in `1..=max_count`.
pub fn random_histogram(seed: u64, n: usize, keys: usize, max_count: u64) -> NgramHistogram {
    let mut rng = Rng::derive(seed, "testgen-hist", n as u64);
    let mut counts = BTreeMap::new();
    for _ in 0..keys {
        let key: Vec<Mnemonic> = (0..n)
            .map(|_| Mnemonic::ALL[rng.gen_range(Mnemonic::ALL.len())])
            .collect();
        let count = 1 + rng.next_u64() % max_count;
        counts.insert(key, count);
    }
    NgramHistogram::from_counts(n, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{encode, interpret, Termination, DEFAULT_STEP_LIMIT};

    #[test]
    fn generated_programs_are_valid_and_halt() {
        for seed in 0..60 {
            let p = random_program(seed);
            p.validate().unwrap();
            let img = encode(&p).unwrap();
            for inputs in crate::corpus::INPUT_VECTORS {
                let t = interpret(&img, inputs, DEFAULT_STEP_LIMIT);
                assert_eq!(t.termination, Termination::Halted, "seed {seed}");
                assert!(!t.outputs.is_empty(), "seed {seed} produced no output");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(random_program(1234), random_program(1234));
        assert_ne!(random_program(1), random_program(2));
    }

    #[test]
    fn decode_round_trip_preserves_traces_on_random_programs() {
        use crate::isa::decode;
        for seed in 0..200 {
            let p = random_program(seed);
            let img = encode(&p).unwrap();
            let p2 = decode(&img).unwrap();
            let img2 = encode(&p2).unwrap();
            assert_eq!(img.code(), img2.code(), "seed {seed}");
            assert_eq!(img.data(), img2.data(), "seed {seed}");
            for inputs in crate::corpus::INPUT_VECTORS {
                let a = interpret(&img, inputs, DEFAULT_STEP_LIMIT);
                let b = interpret(&img2, inputs, DEFAULT_STEP_LIMIT);
                assert_eq!(a, b, "seed {seed} under {inputs:?}");
            }
        }
    }

    #[test]
    fn distinct_instruction_streams_encode_to_distinct_code() {
        let programs: Vec<_> = (0..40).map(random_program).collect();
        for (i, a) in programs.iter().enumerate() {
            for b in &programs[i + 1..] {
                let sa: Vec<_> = a.mnemonics().collect();
                let sb: Vec<_> = b.mnemonics().collect();
                if sa != sb {
                    assert_ne!(
                        encode(a).unwrap().code(),
                        encode(b).unwrap().code(),
                        "differing streams must differ in code bytes"
                    );
                }
            }
        }
    }
}
