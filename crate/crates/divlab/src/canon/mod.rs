//! The counter-measure side: normalization passes that map diversified
//! variants toward one canonical representative, and the digest-equality
//! match built on them.
//!
//! The canonical form neutralizes, in order: inserted nops (stripped),
//! instruction substitution (rewritten to class-canonical forms), block
//! splitting and layout shuffling (jump threading, merging, and a
//! deterministic breadth-first ordering), instruction reordering
//! (per-block mnemonic histograms), and register renaming (operands are
//! erased entirely). Garbage instructions are not removed — telling them
//! apart from genuine dead code would need the liveness witness only the
//! producer has — and data obfuscation is not inverted, so the digest
//! covers code structure only.

use crate::isa::{BasicBlock, Cond, Function, Imm, Instruction, Mnemonic, Program, Terminator};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Removes every nop. Alignment nops vanish along with inserted ones;
/// the goal is a shared canonical form, not the pre-diversification
/// binary.
pub fn strip_nops(p: &Program) -> Program {
    let mut q = p.clone();
    for f in &mut q.functions {
        for b in &mut f.blocks {
            b.body.retain(|i| !matches!(i, Instruction::Nop));
        }
    }
    q
}

/// Rewrites every substitution-class member to its canonical form:
/// `lea rd, rs, 0` to `mov`, `xor rd, rd` to `movi rd, 0`, and
/// addi/subi with negative immediates to the flipped op with the
/// non-negative immediate (i32::MIN cannot be negated and stays put).
pub fn normalize_substitutions(p: &Program) -> Program {
    let mut q = p.clone();
    for f in &mut q.functions {
        for b in &mut f.blocks {
            for ins in &mut b.body {
                if let Some(canonical) = normalize_one(ins) {
                    *ins = canonical;
                }
            }
        }
    }
    q
}

fn normalize_one(ins: &Instruction) -> Option<Instruction> {
    use crate::isa::{AluImmOp, AluOp};
    match ins {
        Instruction::Lea { dst, src, imm } if *imm == Imm::Const(0) => Some(Instruction::Mov {
            dst: *dst,
            src: *src,
        }),
        Instruction::Alu {
            op: AluOp::Xor,
            dst,
            src,
        } if dst == src => Some(Instruction::Movi {
            dst: *dst,
            imm: Imm::Const(0),
        }),
        Instruction::AluImm {
            op,
            dst,
            imm: Imm::Const(k),
        } if *k < 0 && *k != i32::MIN => {
            let flipped = match op {
                AluImmOp::Addi => AluImmOp::Subi,
                AluImmOp::Subi => AluImmOp::Addi,
            };
            Some(Instruction::AluImm {
                op: flipped,
                dst: *dst,
                imm: Imm::Const(-k),
            })
        }
        _ => None,
    }
}

/// Erases operands down to an abstract stream: registers become
/// first-use ordinals per function (`p0`, `p1`, ...), immediates are
/// kept, control-transfer targets are dropped. A whole-program register
/// permutation leaves this stream untouched.
pub fn canonical_register_abstraction(p: &Program) -> Vec<Vec<String>> {
    p.functions
        .iter()
        .map(|f| {
            let mut ordinals: BTreeMap<u8, usize> = BTreeMap::new();
            let mut next = 0usize;
            let mut reg = |r: crate::isa::Reg| -> String {
                let ord = *ordinals.entry(r.0).or_insert_with(|| {
                    let v = next;
                    next += 1;
                    v
                });
                format!("p{ord}")
            };
            let imm = |i: &Imm| -> String {
                match i {
                    Imm::Const(v) => v.to_string(),
                    Imm::DataAddr(l) => format!("@{l}"),
                }
            };
            let mut stream = Vec::new();
            for b in &f.blocks {
                for ins in &b.body {
                    let rendered = match ins {
                        Instruction::Mov { dst, src } => {
                            format!("mov {}, {}", reg(*dst), reg(*src))
                        }
                        Instruction::Movi { dst, imm: v } => {
                            format!("movi {}, {}", reg(*dst), imm(v))
                        }
                        Instruction::Lea { dst, src, imm: v } => {
                            format!("lea {}, {}, {}", reg(*dst), reg(*src), imm(v))
                        }
                        Instruction::Alu { op, dst, src } => {
                            format!("{} {}, {}", op.mnemonic(), reg(*dst), reg(*src))
                        }
                        Instruction::AluImm { op, dst, imm: v } => {
                            format!("{} {}, {}", op.mnemonic(), reg(*dst), imm(v))
                        }
                        Instruction::Load { dst, base, offset } => {
                            format!("load {}, [{}+{}]", reg(*dst), reg(*base), imm(offset))
                        }
                        Instruction::Store { src, base, offset } => {
                            format!("store {}, [{}+{}]", reg(*src), reg(*base), imm(offset))
                        }
                        Instruction::Push { src } => format!("push {}", reg(*src)),
                        Instruction::Pop { dst } => format!("pop {}", reg(*dst)),
                        Instruction::Cmp { lhs, rhs } => {
                            format!("cmp {}, {}", reg(*lhs), reg(*rhs))
                        }
                        Instruction::Call { .. } => "call".to_string(),
                        Instruction::Out { src } => format!("out {}", reg(*src)),
                        Instruction::Nop => "nop".to_string(),
                    };
                    stream.push(rendered);
                }
                if let Some(m) = b.terminator.mnemonic() {
                    stream.push(m.name().to_string());
                }
            }
            stream
        })
        .collect()
}

/// Canonical terminator kinds: implicit fallthrough and explicit jmp are
/// the same unconditional transfer once layout is canonicalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CanonTerm {
    Goto,
    Branch(Cond),
    Ret,
    Halt,
}

impl CanonTerm {
    fn name(self) -> String {
        match self {
            CanonTerm::Goto => "goto".into(),
            CanonTerm::Branch(c) => c.mnemonic().name().into(),
            CanonTerm::Ret => "ret".into(),
            CanonTerm::Halt => "halt".into(),
        }
    }
}

/// Re-derives a layout-independent block order per function: implicit
/// fallthroughs become explicit jumps, empty forwarding blocks are
/// threaded away, single-predecessor blocks merge into their jump-only
/// predecessor (undoing splits), and the survivors are ordered by
/// breadth-first traversal from the entry with ties broken by the block
/// mnemonic histogram and terminator kind.
///
/// The result is a canonical representation: conditional fallthrough
/// targets need not be adjacent anymore, so it is not generally
/// re-encodable.
pub fn canonical_block_order(p: &Program) -> Program {
    let mut q = p.clone();
    for f in &mut q.functions {
        // Goto-normalize.
        for b in &mut f.blocks {
            if let Terminator::FallThrough { target } = &b.terminator {
                b.terminator = Terminator::Jmp {
                    target: target.clone(),
                };
            }
        }
        thread_forwarding_blocks(f);
        merge_single_predecessor_chains(f);
        order_blocks_bfs(f);
    }
    q
}

fn retarget(f: &mut Function, from: &str, to: &str) {
    for b in &mut f.blocks {
        match &mut b.terminator {
            Terminator::Jmp { target } | Terminator::FallThrough { target } => {
                if target == from {
                    *target = to.to_string();
                }
            }
            Terminator::Branch {
                target,
                fallthrough,
                ..
            } => {
                if target == from {
                    *target = to.to_string();
                }
                if fallthrough == from {
                    *fallthrough = to.to_string();
                }
            }
            Terminator::Ret | Terminator::Halt => {}
        }
    }
}

/// Removes non-entry blocks that are nothing but `jmp somewhere-else`,
/// redirecting every reference to their target.
fn thread_forwarding_blocks(f: &mut Function) {
    loop {
        let victim = f.blocks.iter().enumerate().skip(1).find_map(|(i, b)| {
            if !b.body.is_empty() {
                return None;
            }
            match &b.terminator {
                Terminator::Jmp { target } if *target != b.label => {
                    Some((i, b.label.clone(), target.clone()))
                }
                _ => None,
            }
        });
        let Some((idx, label, target)) = victim else {
            break;
        };
        f.blocks.remove(idx);
        retarget(f, &label, &target);
    }
}

fn predecessor_counts(f: &Function) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> =
        f.blocks.iter().map(|b| (b.label.clone(), 0)).collect();
    for b in &f.blocks {
        match &b.terminator {
            Terminator::Jmp { target } | Terminator::FallThrough { target } => {
                *counts.get_mut(target).expect("resolved label") += 1;
            }
            Terminator::Branch {
                target,
                fallthrough,
                ..
            } => {
                *counts.get_mut(target).expect("resolved label") += 1;
                *counts.get_mut(fallthrough).expect("resolved label") += 1;
            }
            Terminator::Ret | Terminator::Halt => {}
        }
    }
    counts
}

/// Merges each block with exactly one predecessor into that predecessor
/// when the predecessor is jump-only (single successor).
fn merge_single_predecessor_chains(f: &mut Function) {
    loop {
        let preds = predecessor_counts(f);
        let mut merged = false;
        for i in 0..f.blocks.len() {
            let target_label = match &f.blocks[i].terminator {
                Terminator::Jmp { target } if *target != f.blocks[i].label => target.clone(),
                _ => continue,
            };
            if preds[&target_label] != 1 {
                continue;
            }
            let j = f
                .blocks
                .iter()
                .position(|b| b.label == target_label)
                .expect("resolved label");
            if j == 0 {
                // Never merge the entry block away.
                continue;
            }
            let absorbed = f.blocks.remove(j);
            let i = if j < i { i - 1 } else { i };
            f.blocks[i].body.extend(absorbed.body);
            f.blocks[i].terminator = absorbed.terminator;
            merged = true;
            break;
        }
        if !merged {
            break;
        }
    }
}

fn block_sort_key(b: &BasicBlock) -> (String, String) {
    (serialize_histogram(b), canon_term(&b.terminator).name())
}

fn order_blocks_bfs(f: &mut Function) {
    let by_label: BTreeMap<String, usize> = f
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.clone(), i))
        .collect();
    let mut visited = vec![false; f.blocks.len()];
    let mut order: Vec<usize> = Vec::with_capacity(f.blocks.len());
    let mut level = vec![0usize];
    visited[0] = true;
    while !level.is_empty() {
        order.extend(level.iter().copied());
        let mut next = Vec::new();
        for &i in &level {
            let successors: Vec<&String> = match &f.blocks[i].terminator {
                Terminator::Jmp { target } | Terminator::FallThrough { target } => vec![target],
                Terminator::Branch {
                    target,
                    fallthrough,
                    ..
                } => vec![target, fallthrough],
                Terminator::Ret | Terminator::Halt => vec![],
            };
            for s in successors {
                let si = by_label[s];
                if !visited[si] {
                    visited[si] = true;
                    next.push(si);
                }
            }
        }
        next.sort_by_key(|&i| block_sort_key(&f.blocks[i]));
        level = next;
    }
    // Unreachable blocks last, in key order.
    let mut rest: Vec<usize> = (0..f.blocks.len()).filter(|&i| !visited[i]).collect();
    rest.sort_by_key(|&i| block_sort_key(&f.blocks[i]));
    order.extend(rest);

    let mut blocks = std::mem::take(&mut f.blocks);
    let mut slots: Vec<Option<BasicBlock>> = blocks.drain(..).map(Some).collect();
    f.blocks = order
        .into_iter()
        .map(|i| slots[i].take().expect("each block placed once"))
        .collect();
}

fn canon_term(t: &Terminator) -> CanonTerm {
    match t {
        Terminator::Jmp { .. } | Terminator::FallThrough { .. } => CanonTerm::Goto,
        Terminator::Branch { cond, .. } => CanonTerm::Branch(*cond),
        Terminator::Ret => CanonTerm::Ret,
        Terminator::Halt => CanonTerm::Halt,
    }
}

fn serialize_histogram(b: &BasicBlock) -> String {
    let mut hist: BTreeMap<Mnemonic, u64> = BTreeMap::new();
    for ins in &b.body {
        *hist.entry(ins.mnemonic()).or_insert(0) += 1;
    }
    let mut out = String::new();
    for (m, c) in hist {
        let _ = write!(out, "{}:{} ", m.name(), c);
    }
    out
}

/// One canonicalized basic block: body mnemonic histogram, terminator
/// kind, and canonical successor indices within the function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSummary {
    pub histogram: Vec<(Mnemonic, u64)>,
    pub terminator: CanonTerm,
    pub successors: Vec<usize>,
}

/// The normalization fixed point: per function (entry first), the
/// ordered block summaries, plus a content digest over the whole stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalForm {
    pub functions: Vec<Vec<BlockSummary>>,
    pub digest: [u8; 32],
}

impl CanonicalForm {
    /// 64 hex characters of the content digest.
    pub fn digest_hex(&self) -> String {
        self.digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Deterministic text rendering for diffing canonical forms.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (fi, blocks) in self.functions.iter().enumerate() {
            let _ = writeln!(out, "fn {fi}");
            for (bi, b) in blocks.iter().enumerate() {
                let hist: Vec<String> = b
                    .histogram
                    .iter()
                    .map(|(m, c)| format!("{}:{}", m.name(), c))
                    .collect();
                let succ: Vec<String> = b.successors.iter().map(|s| s.to_string()).collect();
                let _ = writeln!(
                    out,
                    "  b{bi} {} -> [{}] | {}",
                    b.terminator.name(),
                    succ.join(","),
                    hist.join(" ")
                );
            }
        }
        out
    }
}

/// Full canonicalization pipeline; the entry function always comes
/// first so function layout cannot leak into the digest.
pub fn canonicalize(p: &Program) -> CanonicalForm {
    let q = canonical_block_order(&normalize_substitutions(&strip_nops(p)));

    let mut fn_order: Vec<&Function> = Vec::with_capacity(q.functions.len());
    fn_order.push(q.entry());
    fn_order.extend(q.functions.iter().filter(|f| f.name != q.entry_function));

    let functions: Vec<Vec<BlockSummary>> = fn_order
        .iter()
        .map(|f| {
            let idx: BTreeMap<&str, usize> = f
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| (b.label.as_str(), i))
                .collect();
            f.blocks
                .iter()
                .map(|b| {
                    let mut hist: BTreeMap<Mnemonic, u64> = BTreeMap::new();
                    for ins in &b.body {
                        *hist.entry(ins.mnemonic()).or_insert(0) += 1;
                    }
                    let successors = match &b.terminator {
                        Terminator::Jmp { target } | Terminator::FallThrough { target } => {
                            vec![idx[target.as_str()]]
                        }
                        Terminator::Branch {
                            target,
                            fallthrough,
                            ..
                        } => vec![idx[target.as_str()], idx[fallthrough.as_str()]],
                        Terminator::Ret | Terminator::Halt => vec![],
                    };
                    BlockSummary {
                        histogram: hist.into_iter().collect(),
                        terminator: canon_term(&b.terminator),
                        successors,
                    }
                })
                .collect()
        })
        .collect();

    let form = CanonicalForm {
        functions,
        digest: [0; 32],
    };
    let mut hasher = Sha256::new();
    hasher.update(form.dump().as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    CanonicalForm { digest, ..form }
}

/// Digest equality: a likelihood signal that two programs share source,
/// not a proof — canonicalization is not injective.
pub fn canonical_match(a: &Program, b: &Program) -> bool {
    canonicalize(a).digest == canonicalize(b).digest
}
