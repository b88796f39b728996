//! Parser for the `.tasm` assembly text format.
//!
//! ```text
//! ; comment
//! entry main
//!
//! fn main {
//! entry:
//!     movi r1, 0x10
//!     out r1
//!     halt
//! }
//!
//! data msg = hex"48490A"
//! ```
//!
//! One instruction per line. Registers are `r0`..`r7` and `sp`;
//! immediates are decimal or `0x` hex; memory operands are
//! `[rb]`, `[rb+imm]`, `[rb-imm]` or `[rb+label]`. A bare identifier in
//! an immediate position refers to a data blob and resolves to its
//! address at encode time. A `label:` line starts a new basic block; an
//! instruction following a control transfer without a label starts a
//! fresh synthetic block.

use super::{
    AluImmOp, AluOp, BasicBlock, Cond, DataBlob, Function, Imm, Instruction, Mnemonic, Program,
    Reg, Terminator, SP,
};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("{line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
    #[error("{line}: duplicate symbol `{symbol}`")]
    DuplicateSymbol { line: usize, symbol: String },
    #[error("no entry function declared and no function named `main`")]
    NoEntry,
    #[error("function `{function}` ends without a terminator")]
    MissingTerminator { function: String },
}

/// Parses assembly text into a validated [`Program`].
pub fn parse_assembly(text: &str) -> Result<Program, ParseError> {
    Parser::new(text).run()
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    functions: Vec<Function>,
    data: Vec<DataBlob>,
    entry: Option<String>,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(';') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_reg(s: &str) -> Option<Reg> {
    if s == "sp" {
        return Some(SP);
    }
    let idx = s.strip_prefix('r')?.parse::<u8>().ok()?;
    (idx < 8).then_some(Reg(idx))
}

fn parse_int(s: &str) -> Option<i32> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        // Unsigned hex covers the full 32-bit pattern space; negative hex
        // magnitudes must fit i32.
        let magnitude = u64::from_str_radix(hex, 16).ok()?;
        if neg {
            i32::try_from(-(i64::try_from(magnitude).ok()?)).ok()
        } else {
            u32::try_from(magnitude).ok().map(|v| v as i32)
        }
    } else {
        let magnitude = body.parse::<i64>().ok()?;
        let v = if neg { -magnitude } else { magnitude };
        i32::try_from(v).ok()
    }
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, strip_comment(l)))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        Parser {
            lines,
            pos: 0,
            functions: Vec::new(),
            data: Vec::new(),
            entry: None,
        }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.peek();
        self.pos += 1;
        item
    }

    fn run(mut self) -> Result<Program, ParseError> {
        while let Some((lineno, raw)) = self.next() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix("entry ") {
                let name = rest.trim();
                if !is_ident(name) {
                    return Err(syntax(lineno, 1, format!("bad entry name `{name}`")));
                }
                if self.entry.is_some() {
                    return Err(syntax(lineno, 1, "duplicate entry directive"));
                }
                self.entry = Some(name.to_string());
            } else if let Some(rest) = line.strip_prefix("fn ") {
                self.parse_function(lineno, rest)?;
            } else if let Some(rest) = line.strip_prefix("data ") {
                self.parse_data(lineno, rest)?;
            } else {
                return Err(syntax(
                    lineno,
                    1,
                    format!("expected `fn`, `data` or `entry`, found `{line}`"),
                ));
            }
        }

        let entry = match self.entry {
            Some(e) => e,
            None if self.functions.iter().any(|f| f.name == "main") => "main".to_string(),
            None => return Err(ParseError::NoEntry),
        };
        let program = Program {
            functions: self.functions,
            data: self.data,
            symbols: true,
            entry_function: entry,
        };
        program
            .validate()
            .map_err(|e| syntax(0, 0, e.to_string()))?;
        Ok(program)
    }

    fn parse_data(&mut self, lineno: usize, rest: &str) -> Result<(), ParseError> {
        let (name, value) = rest
            .split_once('=')
            .ok_or_else(|| syntax(lineno, 1, "expected `data NAME = hex\"...\"`"))?;
        let name = name.trim();
        if !is_ident(name) {
            return Err(syntax(lineno, 1, format!("bad data label `{name}`")));
        }
        if self.data.iter().any(|d| d.label == name) {
            return Err(ParseError::DuplicateSymbol {
                line: lineno,
                symbol: name.to_string(),
            });
        }
        let value = value.trim();
        let hex = value
            .strip_prefix("hex\"")
            .and_then(|v| v.strip_suffix('"'))
            .ok_or_else(|| syntax(lineno, 1, "data value must be hex\"...\""))?;
        if hex.len() % 2 != 0 {
            return Err(syntax(lineno, 1, "odd number of hex digits"));
        }
        let mut bytes = Vec::with_capacity(hex.len() / 2);
        for i in (0..hex.len()).step_by(2) {
            let b = u8::from_str_radix(&hex[i..i + 2], 16)
                .map_err(|_| syntax(lineno, i + 1, "bad hex digit"))?;
            bytes.push(b);
        }
        self.data.push(DataBlob::plain(name, bytes));
        Ok(())
    }

    fn parse_function(&mut self, lineno: usize, rest: &str) -> Result<(), ParseError> {
        let name = rest
            .trim()
            .strip_suffix('{')
            .map(str::trim)
            .ok_or_else(|| syntax(lineno, 1, "expected `fn NAME {`"))?;
        if !is_ident(name) {
            return Err(syntax(lineno, 1, format!("bad function name `{name}`")));
        }
        if self.functions.iter().any(|f| f.name == name) {
            return Err(ParseError::DuplicateSymbol {
                line: lineno,
                symbol: name.to_string(),
            });
        }

        // Collect (label, instructions) runs; blocks and terminators are
        // derived afterwards.
        let mut runs: Vec<(String, Vec<RawInstr>)> = Vec::new();
        let mut closed = false;
        while let Some((lno, raw)) = self.next() {
            let mut line = raw.trim();
            if line == "}" {
                closed = true;
                break;
            }
            if let Some((head, tail)) = line.split_once(':') {
                let head = head.trim();
                if is_ident(head) {
                    if runs.iter().any(|(l, _)| l == head) {
                        return Err(ParseError::DuplicateSymbol {
                            line: lno,
                            symbol: head.to_string(),
                        });
                    }
                    runs.push((head.to_string(), Vec::new()));
                    line = tail.trim();
                    if line.is_empty() {
                        continue;
                    }
                } else {
                    return Err(syntax(lno, 1, format!("bad label `{head}`")));
                }
            }
            let instr = parse_instruction(lno, line)?;
            match runs.last_mut() {
                Some((_, instrs)) => instrs.push(instr),
                None => {
                    return Err(syntax(
                        lno,
                        1,
                        "instruction before the first label of the function",
                    ))
                }
            }
        }
        if !closed {
            return Err(syntax(lineno, 1, format!("unclosed function `{name}`")));
        }
        if runs.is_empty() {
            return Err(syntax(lineno, 1, format!("function `{name}` is empty")));
        }

        let blocks = build_blocks(name, runs)?;
        self.functions.push(Function {
            name: name.to_string(),
            blocks,
        });
        Ok(())
    }
}

/// An instruction line before block structure is known: either a plain
/// instruction or a control transfer that will become a terminator.
enum RawInstr {
    Plain(Instruction),
    Jmp(String),
    Branch(Cond, String),
    Ret,
    Halt,
}

fn build_blocks(
    fn_name: &str,
    runs: Vec<(String, Vec<RawInstr>)>,
) -> Result<Vec<BasicBlock>, ParseError> {
    let run_count = runs.len();
    let taken: BTreeSet<String> = runs.iter().map(|(l, _)| l.clone()).collect();
    let mut fresh_counter = 0usize;
    let mut fresh = |taken: &mut BTreeSet<String>| loop {
        let candidate = format!("__ft{fresh_counter}");
        fresh_counter += 1;
        if taken.insert(candidate.clone()) {
            break candidate;
        }
    };
    let mut taken = taken;

    struct PendingBlock {
        label: String,
        body: Vec<Instruction>,
        terminator: Option<Terminator>,
    }
    let mut pending: Vec<PendingBlock> = Vec::new();

    for (run_idx, (label, instrs)) in runs.into_iter().enumerate() {
        let mut current = PendingBlock {
            label,
            body: Vec::new(),
            terminator: None,
        };
        for raw in instrs {
            if current.terminator.is_some() {
                // Unlabeled code after a control transfer starts a fresh
                // synthetic block.
                let done = std::mem::replace(
                    &mut current,
                    PendingBlock {
                        label: fresh(&mut taken),
                        body: Vec::new(),
                        terminator: None,
                    },
                );
                pending.push(done);
            }
            match raw {
                RawInstr::Plain(i) => current.body.push(i),
                RawInstr::Jmp(t) => current.terminator = Some(Terminator::Jmp { target: t }),
                RawInstr::Branch(cond, target) => {
                    // Fallthrough target filled in below once the next
                    // block's label is known.
                    current.terminator = Some(Terminator::Branch {
                        cond,
                        target,
                        fallthrough: String::new(),
                    })
                }
                RawInstr::Ret => current.terminator = Some(Terminator::Ret),
                RawInstr::Halt => current.terminator = Some(Terminator::Halt),
            }
        }
        if current.terminator.is_none() && run_idx + 1 == run_count {
            // The last run of a function must end in a control transfer.
            return Err(ParseError::MissingTerminator {
                function: fn_name.to_string(),
            });
        }
        pending.push(current);
    }

    // Resolve fallthroughs: each pending block without a terminator falls
    // through to the next; branch fallthrough is the next block's label.
    let mut blocks = Vec::with_capacity(pending.len());
    for i in 0..pending.len() {
        let next_label = pending.get(i + 1).map(|b| b.label.clone());
        let p = &mut pending[i];
        let terminator = match p.terminator.take() {
            Some(Terminator::Branch { cond, target, .. }) => {
                let fallthrough = next_label.ok_or_else(|| ParseError::MissingTerminator {
                    function: fn_name.to_string(),
                })?;
                Terminator::Branch {
                    cond,
                    target,
                    fallthrough,
                }
            }
            Some(t) => t,
            None => {
                let target = next_label.ok_or_else(|| ParseError::MissingTerminator {
                    function: fn_name.to_string(),
                })?;
                Terminator::FallThrough { target }
            }
        };
        blocks.push(BasicBlock {
            label: std::mem::take(&mut p.label),
            body: std::mem::take(&mut p.body),
            terminator,
        });
    }
    Ok(blocks)
}

fn parse_instruction(lineno: usize, line: &str) -> Result<RawInstr, ParseError> {
    let (mnem_str, rest) = match line.split_once(char::is_whitespace) {
        Some((m, r)) => (m, r.trim()),
        None => (line, ""),
    };
    let mnemonic = Mnemonic::from_name(mnem_str).ok_or_else(|| ParseError::UnknownMnemonic {
        line: lineno,
        mnemonic: mnem_str.to_string(),
    })?;

    let ops: Vec<&str> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    };
    let argc = ops.len();
    let arity_err = |want: &str| {
        syntax(
            lineno,
            1,
            format!("{mnemonic} expects {want}, found {argc} operand(s)"),
        )
    };

    let reg = |s: &str| {
        parse_reg(s).ok_or_else(|| syntax(lineno, 1, format!("expected register, found `{s}`")))
    };
    let imm = |s: &str| -> Result<Imm, ParseError> {
        if let Some(v) = parse_int(s) {
            Ok(Imm::Const(v))
        } else if is_ident(s) && parse_reg(s).is_none() {
            Ok(Imm::DataAddr(s.to_string()))
        } else {
            Err(syntax(lineno, 1, format!("bad immediate `{s}`")))
        }
    };
    let mem = |s: &str| -> Result<(Reg, Imm), ParseError> {
        let inner = s
            .strip_prefix('[')
            .and_then(|v| v.strip_suffix(']'))
            .ok_or_else(|| syntax(lineno, 1, format!("expected [base+offset], found `{s}`")))?;
        if let Some((b, off)) = inner.split_once('+') {
            Ok((reg(b.trim())?, imm(off.trim())?))
        } else if let Some((b, off)) = inner.split_once('-') {
            let value = imm(&format!("-{}", off.trim()))?;
            Ok((reg(b.trim())?, value))
        } else {
            Ok((reg(inner.trim())?, Imm::Const(0)))
        }
    };
    let label = |s: &str| {
        if is_ident(s) {
            Ok(s.to_string())
        } else {
            Err(syntax(lineno, 1, format!("bad label `{s}`")))
        }
    };

    let instr = match mnemonic {
        Mnemonic::Nop => {
            if argc != 0 {
                return Err(arity_err("no operands"));
            }
            RawInstr::Plain(Instruction::Nop)
        }
        Mnemonic::Ret => {
            if argc != 0 {
                return Err(arity_err("no operands"));
            }
            RawInstr::Ret
        }
        Mnemonic::Halt => {
            if argc != 0 {
                return Err(arity_err("no operands"));
            }
            RawInstr::Halt
        }
        Mnemonic::Mov => {
            if argc != 2 {
                return Err(arity_err("2 registers"));
            }
            RawInstr::Plain(Instruction::Mov {
                dst: reg(ops[0])?,
                src: reg(ops[1])?,
            })
        }
        Mnemonic::Movi => {
            if argc != 2 {
                return Err(arity_err("register, immediate"));
            }
            RawInstr::Plain(Instruction::Movi {
                dst: reg(ops[0])?,
                imm: imm(ops[1])?,
            })
        }
        Mnemonic::Lea => {
            if argc != 3 {
                return Err(arity_err("register, register, immediate"));
            }
            RawInstr::Plain(Instruction::Lea {
                dst: reg(ops[0])?,
                src: reg(ops[1])?,
                imm: imm(ops[2])?,
            })
        }
        Mnemonic::Add
        | Mnemonic::Sub
        | Mnemonic::Mul
        | Mnemonic::Xor
        | Mnemonic::And
        | Mnemonic::Or => {
            if argc != 2 {
                return Err(arity_err("2 registers"));
            }
            let op = match mnemonic {
                Mnemonic::Add => AluOp::Add,
                Mnemonic::Sub => AluOp::Sub,
                Mnemonic::Mul => AluOp::Mul,
                Mnemonic::Xor => AluOp::Xor,
                Mnemonic::And => AluOp::And,
                _ => AluOp::Or,
            };
            RawInstr::Plain(Instruction::Alu {
                op,
                dst: reg(ops[0])?,
                src: reg(ops[1])?,
            })
        }
        Mnemonic::Addi | Mnemonic::Subi => {
            if argc != 2 {
                return Err(arity_err("register, immediate"));
            }
            let op = if mnemonic == Mnemonic::Addi {
                AluImmOp::Addi
            } else {
                AluImmOp::Subi
            };
            RawInstr::Plain(Instruction::AluImm {
                op,
                dst: reg(ops[0])?,
                imm: imm(ops[1])?,
            })
        }
        Mnemonic::Load => {
            if argc != 2 {
                return Err(arity_err("register, [base+offset]"));
            }
            let (base, offset) = mem(ops[1])?;
            RawInstr::Plain(Instruction::Load {
                dst: reg(ops[0])?,
                base,
                offset,
            })
        }
        Mnemonic::Store => {
            if argc != 2 {
                return Err(arity_err("register, [base+offset]"));
            }
            let (base, offset) = mem(ops[1])?;
            RawInstr::Plain(Instruction::Store {
                src: reg(ops[0])?,
                base,
                offset,
            })
        }
        Mnemonic::Push => {
            if argc != 1 {
                return Err(arity_err("1 register"));
            }
            RawInstr::Plain(Instruction::Push { src: reg(ops[0])? })
        }
        Mnemonic::Pop => {
            if argc != 1 {
                return Err(arity_err("1 register"));
            }
            RawInstr::Plain(Instruction::Pop { dst: reg(ops[0])? })
        }
        Mnemonic::Cmp => {
            if argc != 2 {
                return Err(arity_err("2 registers"));
            }
            RawInstr::Plain(Instruction::Cmp {
                lhs: reg(ops[0])?,
                rhs: reg(ops[1])?,
            })
        }
        Mnemonic::Out => {
            if argc != 1 {
                return Err(arity_err("1 register"));
            }
            RawInstr::Plain(Instruction::Out { src: reg(ops[0])? })
        }
        Mnemonic::Call => {
            if argc != 1 {
                return Err(arity_err("function name"));
            }
            RawInstr::Plain(Instruction::Call {
                target: label(ops[0])?,
            })
        }
        Mnemonic::Jmp => {
            if argc != 1 {
                return Err(arity_err("label"));
            }
            RawInstr::Jmp(label(ops[0])?)
        }
        Mnemonic::Jz | Mnemonic::Jnz | Mnemonic::Jlt | Mnemonic::Jge => {
            if argc != 1 {
                return Err(arity_err("label"));
            }
            let cond = match mnemonic {
                Mnemonic::Jz => Cond::Jz,
                Mnemonic::Jnz => Cond::Jnz,
                Mnemonic::Jlt => Cond::Jlt,
                _ => Cond::Jge,
            };
            RawInstr::Branch(cond, label(ops[0])?)
        }
    };
    Ok(instr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program_parses() {
        let p = parse_assembly("fn main {\nentry:\n movi r0, 7\n out r0\n halt\n}\n").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.entry_function, "main");
        let f = &p.functions[0];
        assert_eq!(f.blocks.len(), 1);
        let b = &f.blocks[0];
        assert_eq!(b.body.len(), 2);
        assert_eq!(b.terminator, Terminator::Halt);
        // Three instructions total, counting the terminator.
        assert_eq!(b.instruction_count(), 3);
    }

    #[test]
    fn unknown_mnemonic_rejected() {
        let err = parse_assembly("fn main {\nentry:\n bogus r0\n}\n").unwrap_err();
        assert!(
            matches!(err, ParseError::UnknownMnemonic { ref mnemonic, .. } if mnemonic == "bogus")
        );
        assert!(err.to_string().contains("unknown mnemonic"));
    }

    #[test]
    fn arity_errors_rejected() {
        assert!(parse_assembly("fn main {\ne:\n mov r0\n halt\n}\n").is_err());
        assert!(parse_assembly("fn main {\ne:\n movi r0, r1\n halt\n}\n").is_err());
        assert!(parse_assembly("fn main {\ne:\n push r0, r1\n halt\n}\n").is_err());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let err = parse_assembly("fn main {\na:\n nop\na:\n halt\n}\n").unwrap_err();
        assert!(matches!(err, ParseError::DuplicateSymbol { .. }));
        let err = parse_assembly("fn f {\na:\n halt\n}\nfn f {\na:\n halt\n}\n").unwrap_err();
        assert!(matches!(err, ParseError::DuplicateSymbol { .. }));
    }

    #[test]
    fn unresolved_jump_target_rejected() {
        assert!(parse_assembly("fn main {\ne:\n jmp nowhere\n halt\n}\n").is_err());
    }

    #[test]
    fn conditional_gets_fallthrough_and_synthetic_block() {
        let src = "fn main {\nentry:\n movi r1, 1\n movi r2, 0\n cmp r1, r2\n jz done\n out r1\ndone:\n halt\n}\n";
        let p = parse_assembly(src).unwrap();
        let f = &p.functions[0];
        // entry (jz) -> synthetic fallthrough (out) -> done (halt)
        assert_eq!(f.blocks.len(), 3);
        match &f.blocks[0].terminator {
            Terminator::Branch {
                cond,
                target,
                fallthrough,
            } => {
                assert_eq!(*cond, Cond::Jz);
                assert_eq!(target, "done");
                assert_eq!(fallthrough, &f.blocks[1].label);
            }
            other => panic!("unexpected terminator {other:?}"),
        }
        assert_eq!(
            f.blocks[1].terminator,
            Terminator::FallThrough {
                target: "done".into()
            }
        );
        p.validate().unwrap();
    }

    #[test]
    fn data_blob_and_references() {
        let src = "entry main\nfn main {\ne:\n movi r1, msg\n load r2, [r1+4]\n store r2, [r1-4]\n halt\n}\ndata msg = hex\"DEADBEEF00\"\n";
        let p = parse_assembly(src).unwrap();
        assert_eq!(p.data.len(), 1);
        assert_eq!(p.data[0].bytes, vec![0xDE, 0xAD, 0xBE, 0xEF, 0x00]);
        match &p.functions[0].blocks[0].body[0] {
            Instruction::Movi { imm, .. } => assert_eq!(*imm, Imm::DataAddr("msg".into())),
            other => panic!("unexpected {other:?}"),
        }
        match &p.functions[0].blocks[0].body[2] {
            Instruction::Store { offset, .. } => assert_eq!(*offset, Imm::Const(-4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hex_immediates_cover_the_full_word() {
        let p = parse_assembly("fn main {\ne:\n movi r1, 0xFFFFFFFF\n movi r2, -0x10\n halt\n}\n")
            .unwrap();
        match &p.functions[0].blocks[0].body[0] {
            Instruction::Movi { imm, .. } => assert_eq!(*imm, Imm::Const(-1)),
            other => panic!("unexpected {other:?}"),
        }
        match &p.functions[0].blocks[0].body[1] {
            Instruction::Movi { imm, .. } => assert_eq!(*imm, Imm::Const(-16)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_assembly("fn main {\ne:\n movi r1, 0x1FFFFFFFF\n halt\n}\n").is_err());
    }

    #[test]
    fn missing_final_terminator_rejected() {
        let err = parse_assembly("fn main {\ne:\n movi r0, 1\n}\n").unwrap_err();
        assert!(matches!(err, ParseError::MissingTerminator { .. }));
    }

    #[test]
    fn entry_resolution_rules() {
        // No entry directive and no `main`: rejected.
        let err = parse_assembly("fn other {\ne:\n halt\n}\n").unwrap_err();
        assert!(matches!(err, ParseError::NoEntry));
        // An explicit entry directive picks any function.
        let p = parse_assembly("entry other\nfn other {\ne:\n halt\n}\n").unwrap();
        assert_eq!(p.entry_function, "other");
        // Entry naming a missing function fails validation.
        assert!(parse_assembly("entry ghost\nfn main {\ne:\n halt\n}\n").is_err());
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_assembly("fn main {\nentry:\n nop\n frob r1\n halt\n}\n").unwrap_err();
        match err {
            ParseError::UnknownMnemonic { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
