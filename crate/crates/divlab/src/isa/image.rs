//! Deterministic byte encoding of programs and the `.tbin` container.
//!
//! Encoding: 1 opcode byte, 1 byte per register operand, 4-byte
//! little-endian immediates. Control-transfer targets encode as signed
//! 32-bit displacements relative to the end of the instruction. The
//! image is code region first, then data (blobs 4-byte aligned), then an
//! optional symbol table. The same program always encodes to the same
//! bytes.

use super::{
    AluImmOp, AluOp, BasicBlock, Cond, DataBlob, Function, Imm, Instruction, Mnemonic, Program,
    Reg, Terminator, DATA_BASE, STACK_FLOOR,
};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionKind {
    Code,
    Data,
    Symtab,
}

impl RegionKind {
    pub fn tag(self) -> u8 {
        match self {
            RegionKind::Code => 0,
            RegionKind::Data => 1,
            RegionKind::Symtab => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(RegionKind::Code),
            1 => Some(RegionKind::Data),
            2 => Some(RegionKind::Symtab),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Code => "code",
            RegionKind::Data => "data",
            RegionKind::Symtab => "symtab",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub kind: RegionKind,
    pub offset: u32,
    pub len: u32,
}

/// The flat byte encoding of a program: the object every byte-level
/// metric operates on. Regions are non-overlapping, in order, and cover
/// the byte buffer exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteImage {
    pub bytes: Vec<u8>,
    pub regions: Vec<Region>,
    /// Code offset of the entry function's first instruction.
    pub entry: u32,
}

impl ByteImage {
    pub fn region(&self, kind: RegionKind) -> Option<Region> {
        self.regions.iter().copied().find(|r| r.kind == kind)
    }

    pub fn region_bytes(&self, kind: RegionKind) -> &[u8] {
        match self.region(kind) {
            Some(r) => &self.bytes[r.offset as usize..(r.offset + r.len) as usize],
            None => &[],
        }
    }

    pub fn code(&self) -> &[u8] {
        self.region_bytes(RegionKind::Code)
    }

    pub fn data(&self) -> &[u8] {
        self.region_bytes(RegionKind::Data)
    }

    /// The bytes a scanner sees: code and data, symbol table excluded.
    /// Code and data are laid out back to back, so this is one slice.
    pub fn scan_bytes(&self) -> &[u8] {
        let code = self.region(RegionKind::Code).expect("code region");
        let data_len = self.region(RegionKind::Data).map_or(0, |r| r.len);
        &self.bytes[code.offset as usize..(code.offset + code.len + data_len) as usize]
    }

    /// Region kind at an offset into [`ByteImage::scan_bytes`].
    pub fn scan_region_kind(&self, offset: usize) -> RegionKind {
        let code_len = self.region(RegionKind::Code).map_or(0, |r| r.len) as usize;
        if offset < code_len {
            RegionKind::Code
        } else {
            RegionKind::Data
        }
    }

    /// Offsets of instruction starts in the code region, recovered by
    /// linear sweep. Encode-produced images sweep cleanly from offset 0.
    pub fn instruction_starts(&self) -> Result<Vec<u32>, DecodeError> {
        let code = self.code();
        let mut starts = Vec::new();
        let mut off = 0usize;
        while off < code.len() {
            starts.push(off as u32);
            let (_, next) = decode_one(code, off)?;
            off = next;
        }
        Ok(starts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("invalid program: {0}")]
    Invalid(#[from] super::ValidateError),
    #[error("jump displacement out of 32-bit range at code offset {0:#x}")]
    DisplacementOverflow(u32),
    #[error("immediate for data label `{0}` out of 32-bit range")]
    ImmediateRange(String),
    #[error("data region ({0} bytes) does not fit below the stack floor")]
    DataTooLarge(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unknown opcode {byte:#04x} at code offset {offset:#x}")]
    UnknownOpcode { offset: u32, byte: u8 },
    #[error("truncated instruction at code offset {offset:#x}")]
    Truncated { offset: u32 },
    #[error("bad register byte {value:#04x} at code offset {offset:#x}")]
    BadRegister { offset: u32, value: u8 },
    #[error("control transfer to {target:#x} overruns the code region")]
    RegionOverrun { target: u32 },
}

/// Layout of data blobs within the data region: per-blob offsets (each
/// 4-byte aligned) and the total region length.
pub fn data_layout(blobs: &[DataBlob]) -> (Vec<u32>, u32) {
    let mut offsets = Vec::with_capacity(blobs.len());
    let mut cursor = 0u32;
    for blob in blobs {
        cursor = (cursor + 3) & !3;
        offsets.push(cursor);
        cursor += blob.bytes.len() as u32;
    }
    (offsets, cursor)
}

/// Extra layout facts produced during encoding, for analyses that need
/// to map bytes back to program structure.
#[derive(Debug, Clone, Default)]
pub struct EncodeInfo {
    /// Code-offset span of each function, in layout order.
    pub function_spans: Vec<(String, std::ops::Range<u32>)>,
    /// (label, data-region offset, stored length) of each blob.
    pub blob_offsets: Vec<(String, u32, u32)>,
    /// Code offsets of every encoded instruction.
    pub instr_starts: Vec<u32>,
}

pub fn encode(p: &Program) -> Result<ByteImage, EncodeError> {
    encode_with_info(p).map(|(img, _)| img)
}

pub fn encode_with_info(p: &Program) -> Result<(ByteImage, EncodeInfo), EncodeError> {
    p.validate()?;

    // First pass: code offsets for every block and function.
    let mut block_offsets: BTreeMap<(&str, &str), u32> = BTreeMap::new();
    let mut fn_offsets: BTreeMap<&str, u32> = BTreeMap::new();
    let mut spans = Vec::new();
    let mut cursor = 0u32;
    for f in &p.functions {
        let fn_start = cursor;
        fn_offsets.insert(&f.name, cursor);
        for b in &f.blocks {
            block_offsets.insert((&f.name, &b.label), cursor);
            for ins in &b.body {
                cursor += ins.mnemonic().encoded_len();
            }
            cursor += b.terminator.encoded_len();
        }
        spans.push((f.name.clone(), fn_start..cursor));
    }
    let code_len = cursor;

    let (blob_offsets, data_len) = data_layout(&p.data);
    if DATA_BASE + data_len > STACK_FLOOR {
        return Err(EncodeError::DataTooLarge(data_len));
    }

    // Second pass: emit code.
    let mut code = Vec::with_capacity(code_len as usize);
    let mut instr_starts = Vec::new();
    let resolve_imm = |imm: &Imm| -> Result<i32, EncodeError> {
        match imm {
            Imm::Const(v) => Ok(*v),
            Imm::DataAddr(label) => {
                let idx = p
                    .data
                    .iter()
                    .position(|d| &d.label == label)
                    .expect("validated data label");
                i32::try_from(DATA_BASE + blob_offsets[idx])
                    .map_err(|_| EncodeError::ImmediateRange(label.clone()))
            }
        }
    };
    for f in &p.functions {
        for b in &f.blocks {
            for ins in &b.body {
                instr_starts.push(code.len() as u32);
                emit_instruction(&mut code, ins, &fn_offsets, &resolve_imm)?;
            }
            if b.terminator.mnemonic().is_some() {
                instr_starts.push(code.len() as u32);
            }
            emit_terminator(&mut code, f, &b.terminator, &block_offsets)?;
        }
    }
    debug_assert_eq!(code.len() as u32, code_len);

    // Data region.
    let mut data = vec![0u8; data_len as usize];
    for (blob, &off) in p.data.iter().zip(&blob_offsets) {
        data[off as usize..off as usize + blob.bytes.len()].copy_from_slice(&blob.bytes);
    }

    // Optional symbol table covering every function and blob.
    let symtab = if p.symbols {
        let mut out = Vec::new();
        let count = p.functions.len() + p.data.len();
        out.extend_from_slice(&(count as u32).to_le_bytes());
        for (name, span) in &spans {
            push_symbol(&mut out, name, 0, span.start);
        }
        for (blob, &off) in p.data.iter().zip(&blob_offsets) {
            push_symbol(&mut out, &blob.label, 1, off);
        }
        Some(out)
    } else {
        None
    };

    let mut bytes = code;
    let mut regions = vec![Region {
        kind: RegionKind::Code,
        offset: 0,
        len: code_len,
    }];
    regions.push(Region {
        kind: RegionKind::Data,
        offset: code_len,
        len: data_len,
    });
    bytes.extend_from_slice(&data);
    if let Some(sym) = symtab {
        regions.push(Region {
            kind: RegionKind::Symtab,
            offset: code_len + data_len,
            len: sym.len() as u32,
        });
        bytes.extend_from_slice(&sym);
    }

    let entry = fn_offsets[p.entry_function.as_str()];
    let info = EncodeInfo {
        function_spans: spans,
        blob_offsets: p
            .data
            .iter()
            .zip(&blob_offsets)
            .map(|(b, &off)| (b.label.clone(), off, b.bytes.len() as u32))
            .collect(),
        instr_starts,
    };
    Ok((
        ByteImage {
            bytes,
            regions,
            entry,
        },
        info,
    ))
}

fn push_symbol(out: &mut Vec<u8>, name: &str, kind: u8, offset: u32) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(kind);
    out.extend_from_slice(&offset.to_le_bytes());
}

fn emit_instruction(
    code: &mut Vec<u8>,
    ins: &Instruction,
    fn_offsets: &BTreeMap<&str, u32>,
    resolve_imm: &impl Fn(&Imm) -> Result<i32, EncodeError>,
) -> Result<(), EncodeError> {
    let op = ins.mnemonic().opcode();
    match ins {
        Instruction::Nop => code.push(op),
        Instruction::Mov { dst, src } => code.extend_from_slice(&[op, dst.0, src.0]),
        Instruction::Movi { dst, imm } => {
            code.push(op);
            code.push(dst.0);
            code.extend_from_slice(&resolve_imm(imm)?.to_le_bytes());
        }
        Instruction::Lea { dst, src, imm } => {
            code.extend_from_slice(&[op, dst.0, src.0]);
            code.extend_from_slice(&resolve_imm(imm)?.to_le_bytes());
        }
        Instruction::Alu { dst, src, .. } => code.extend_from_slice(&[op, dst.0, src.0]),
        Instruction::AluImm { dst, imm, .. } => {
            code.push(op);
            code.push(dst.0);
            code.extend_from_slice(&resolve_imm(imm)?.to_le_bytes());
        }
        Instruction::Load { dst, base, offset } => {
            code.extend_from_slice(&[op, dst.0, base.0]);
            code.extend_from_slice(&resolve_imm(offset)?.to_le_bytes());
        }
        Instruction::Store { src, base, offset } => {
            code.extend_from_slice(&[op, src.0, base.0]);
            code.extend_from_slice(&resolve_imm(offset)?.to_le_bytes());
        }
        Instruction::Push { src } | Instruction::Out { src } => {
            code.extend_from_slice(&[op, src.0])
        }
        Instruction::Pop { dst } => code.extend_from_slice(&[op, dst.0]),
        Instruction::Cmp { lhs, rhs } => code.extend_from_slice(&[op, lhs.0, rhs.0]),
        Instruction::Call { target } => {
            let insn_off = code.len() as u32;
            let target_off = fn_offsets[target.as_str()];
            emit_displacement(code, op, insn_off, target_off)?;
        }
    }
    Ok(())
}

fn emit_terminator(
    code: &mut Vec<u8>,
    f: &Function,
    t: &Terminator,
    block_offsets: &BTreeMap<(&str, &str), u32>,
) -> Result<(), EncodeError> {
    match t {
        Terminator::FallThrough { .. } => {}
        Terminator::Ret => code.push(Mnemonic::Ret.opcode()),
        Terminator::Halt => code.push(Mnemonic::Halt.opcode()),
        Terminator::Jmp { target } => {
            let insn_off = code.len() as u32;
            let target_off = block_offsets[&(f.name.as_str(), target.as_str())];
            emit_displacement(code, Mnemonic::Jmp.opcode(), insn_off, target_off)?;
        }
        Terminator::Branch { cond, target, .. } => {
            let insn_off = code.len() as u32;
            let target_off = block_offsets[&(f.name.as_str(), target.as_str())];
            emit_displacement(code, cond.mnemonic().opcode(), insn_off, target_off)?;
        }
    }
    Ok(())
}

fn emit_displacement(
    code: &mut Vec<u8>,
    opcode: u8,
    insn_off: u32,
    target_off: u32,
) -> Result<(), EncodeError> {
    let next = i64::from(insn_off) + 5;
    let disp = i64::from(target_off) - next;
    let disp = i32::try_from(disp).map_err(|_| EncodeError::DisplacementOverflow(insn_off))?;
    code.push(opcode);
    code.extend_from_slice(&disp.to_le_bytes());
    Ok(())
}

/// A decoded instruction with numeric operands; control-transfer targets
/// are absolute code offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RawOp {
    Nop,
    Mov(u8, u8),
    Movi(u8, i32),
    Lea(u8, u8, i32),
    Alu(AluOp, u8, u8),
    AluImm(AluImmOp, u8, i32),
    Load(u8, u8, i32),
    Store(u8, u8, i32),
    Push(u8),
    Pop(u8),
    Cmp(u8, u8),
    Jmp(u32),
    Branch(Cond, u32),
    Call(u32),
    Ret,
    Out(u8),
    Halt,
}

impl RawOp {
    pub(crate) fn mnemonic(&self) -> Mnemonic {
        match self {
            RawOp::Nop => Mnemonic::Nop,
            RawOp::Mov(..) => Mnemonic::Mov,
            RawOp::Movi(..) => Mnemonic::Movi,
            RawOp::Lea(..) => Mnemonic::Lea,
            RawOp::Alu(op, ..) => op.mnemonic(),
            RawOp::AluImm(op, ..) => op.mnemonic(),
            RawOp::Load(..) => Mnemonic::Load,
            RawOp::Store(..) => Mnemonic::Store,
            RawOp::Push(..) => Mnemonic::Push,
            RawOp::Pop(..) => Mnemonic::Pop,
            RawOp::Cmp(..) => Mnemonic::Cmp,
            RawOp::Jmp(..) => Mnemonic::Jmp,
            RawOp::Branch(c, ..) => c.mnemonic(),
            RawOp::Call(..) => Mnemonic::Call,
            RawOp::Ret => Mnemonic::Ret,
            RawOp::Out(..) => Mnemonic::Out,
            RawOp::Halt => Mnemonic::Halt,
        }
    }
}

/// Decodes one instruction at `off`, returning it and the next offset.
pub(crate) fn decode_one(code: &[u8], off: usize) -> Result<(RawOp, usize), DecodeError> {
    let byte = code[off];
    let mnemonic = Mnemonic::from_opcode(byte).ok_or(DecodeError::UnknownOpcode {
        offset: off as u32,
        byte,
    })?;
    let len = mnemonic.encoded_len() as usize;
    if off + len > code.len() {
        return Err(DecodeError::Truncated { offset: off as u32 });
    }
    let reg = |i: usize| -> Result<u8, DecodeError> {
        let v = code[off + i];
        if v as usize >= Reg::COUNT {
            Err(DecodeError::BadRegister {
                offset: off as u32,
                value: v,
            })
        } else {
            Ok(v)
        }
    };
    let imm_at = |i: usize| {
        i32::from_le_bytes([
            code[off + i],
            code[off + i + 1],
            code[off + i + 2],
            code[off + i + 3],
        ])
    };
    let target = |i: usize| -> Result<u32, DecodeError> {
        let disp = i64::from(imm_at(i));
        let t = (off + len) as i64 + disp;
        if t < 0 || t > code.len() as i64 {
            Err(DecodeError::RegionOverrun { target: t as u32 })
        } else {
            Ok(t as u32)
        }
    };

    let op = match mnemonic {
        Mnemonic::Nop => RawOp::Nop,
        Mnemonic::Mov => RawOp::Mov(reg(1)?, reg(2)?),
        Mnemonic::Movi => RawOp::Movi(reg(1)?, imm_at(2)),
        Mnemonic::Lea => RawOp::Lea(reg(1)?, reg(2)?, imm_at(3)),
        Mnemonic::Add => RawOp::Alu(AluOp::Add, reg(1)?, reg(2)?),
        Mnemonic::Sub => RawOp::Alu(AluOp::Sub, reg(1)?, reg(2)?),
        Mnemonic::Mul => RawOp::Alu(AluOp::Mul, reg(1)?, reg(2)?),
        Mnemonic::Xor => RawOp::Alu(AluOp::Xor, reg(1)?, reg(2)?),
        Mnemonic::And => RawOp::Alu(AluOp::And, reg(1)?, reg(2)?),
        Mnemonic::Or => RawOp::Alu(AluOp::Or, reg(1)?, reg(2)?),
        Mnemonic::Addi => RawOp::AluImm(AluImmOp::Addi, reg(1)?, imm_at(2)),
        Mnemonic::Subi => RawOp::AluImm(AluImmOp::Subi, reg(1)?, imm_at(2)),
        Mnemonic::Load => RawOp::Load(reg(1)?, reg(2)?, imm_at(3)),
        Mnemonic::Store => RawOp::Store(reg(1)?, reg(2)?, imm_at(3)),
        Mnemonic::Push => RawOp::Push(reg(1)?),
        Mnemonic::Pop => RawOp::Pop(reg(1)?),
        Mnemonic::Cmp => RawOp::Cmp(reg(1)?, reg(2)?),
        Mnemonic::Jmp => RawOp::Jmp(target(1)?),
        Mnemonic::Jz => RawOp::Branch(Cond::Jz, target(1)?),
        Mnemonic::Jnz => RawOp::Branch(Cond::Jnz, target(1)?),
        Mnemonic::Jlt => RawOp::Branch(Cond::Jlt, target(1)?),
        Mnemonic::Jge => RawOp::Branch(Cond::Jge, target(1)?),
        Mnemonic::Call => RawOp::Call(target(1)?),
        Mnemonic::Ret => RawOp::Ret,
        Mnemonic::Out => RawOp::Out(reg(1)?),
        Mnemonic::Halt => RawOp::Halt,
    };
    Ok((op, off + len))
}

/// Reconstructs a program from an image: synthetic labels and function
/// names, no symbol table. `decode(encode(p))` re-encodes to the same
/// code and data bytes and interprets identically.
pub fn decode(img: &ByteImage) -> Result<Program, DecodeError> {
    let code = img.code();

    // Linear sweep.
    let mut ops: BTreeMap<u32, (RawOp, u32)> = BTreeMap::new();
    let mut off = 0usize;
    while off < code.len() {
        let (op, next) = decode_one(code, off)?;
        ops.insert(off as u32, (op, next as u32));
        off = next;
    }
    let is_start = |t: u32| t == code.len() as u32 || ops.contains_key(&t);

    // Function starts: the entry point plus every call target. Offset 0
    // is always a start so code laid out before the entry function
    // (e.g. never-called helpers) survives the round trip as a synthetic
    // leading function.
    let mut fn_starts = vec![img.entry];
    if !code.is_empty() {
        fn_starts.push(0);
    }
    for (op, _) in ops.values() {
        if let RawOp::Call(t) = op {
            fn_starts.push(*t);
        }
    }
    fn_starts.sort_unstable();
    fn_starts.dedup();
    for &t in &fn_starts {
        if !ops.contains_key(&t) {
            return Err(DecodeError::RegionOverrun { target: t });
        }
    }

    // Block leaders: function starts, jump targets, and the instruction
    // after each control transfer.
    let mut leaders = fn_starts.clone();
    for (op, next) in ops.values() {
        match op {
            RawOp::Jmp(t) | RawOp::Branch(_, t) => {
                if !is_start(*t) {
                    return Err(DecodeError::RegionOverrun { target: *t });
                }
                leaders.push(*t);
                leaders.push(*next);
            }
            RawOp::Ret | RawOp::Halt => leaders.push(*next),
            _ => {}
        }
    }
    leaders.sort_unstable();
    leaders.dedup();
    leaders.retain(|&l| (l as usize) < code.len());

    let fn_name = |start: u32| -> String {
        let idx = fn_starts.binary_search(&start).expect("function start");
        format!("f{idx}")
    };
    let label_name = |off: u32| format!("L{off:05x}");

    let mut functions = Vec::new();
    for (fi, &fstart) in fn_starts.iter().enumerate() {
        let fend = fn_starts.get(fi + 1).copied().unwrap_or(code.len() as u32);
        let fn_leaders: Vec<u32> = leaders
            .iter()
            .copied()
            .filter(|&l| l >= fstart && l < fend)
            .collect();
        let mut blocks = Vec::new();
        for (bi, &bstart) in fn_leaders.iter().enumerate() {
            let bend = fn_leaders.get(bi + 1).copied().unwrap_or(fend);
            let mut body = Vec::new();
            let mut terminator = None;
            let mut at = bstart;
            while at < bend {
                let (op, next) = ops[&at];
                match op {
                    RawOp::Jmp(t) => {
                        terminator = Some(Terminator::Jmp {
                            target: label_name(t),
                        })
                    }
                    RawOp::Branch(cond, t) => {
                        terminator = Some(Terminator::Branch {
                            cond,
                            target: label_name(t),
                            fallthrough: label_name(next),
                        })
                    }
                    RawOp::Ret => terminator = Some(Terminator::Ret),
                    RawOp::Halt => terminator = Some(Terminator::Halt),
                    other => body.push(raw_to_instruction(other, &fn_name)),
                }
                at = next;
            }
            let terminator = terminator.unwrap_or(Terminator::FallThrough {
                target: label_name(bend),
            });
            blocks.push(BasicBlock {
                label: label_name(bstart),
                body,
                terminator,
            });
        }
        functions.push(Function {
            name: fn_name(fstart),
            blocks,
        });
    }

    let data = img.data();
    let blobs = if data.is_empty() {
        Vec::new()
    } else {
        vec![DataBlob::plain("data0", data.to_vec())]
    };

    Ok(Program {
        functions,
        data: blobs,
        symbols: false,
        entry_function: fn_name(img.entry),
    })
}

fn raw_to_instruction(op: RawOp, fn_name: &impl Fn(u32) -> String) -> Instruction {
    let r = |v: u8| Reg(v);
    match op {
        RawOp::Nop => Instruction::Nop,
        RawOp::Mov(d, s) => Instruction::Mov {
            dst: r(d),
            src: r(s),
        },
        RawOp::Movi(d, v) => Instruction::Movi {
            dst: r(d),
            imm: Imm::Const(v),
        },
        RawOp::Lea(d, s, v) => Instruction::Lea {
            dst: r(d),
            src: r(s),
            imm: Imm::Const(v),
        },
        RawOp::Alu(op, d, s) => Instruction::Alu {
            op,
            dst: r(d),
            src: r(s),
        },
        RawOp::AluImm(op, d, v) => Instruction::AluImm {
            op,
            dst: r(d),
            imm: Imm::Const(v),
        },
        RawOp::Load(d, b, v) => Instruction::Load {
            dst: r(d),
            base: r(b),
            offset: Imm::Const(v),
        },
        RawOp::Store(s, b, v) => Instruction::Store {
            src: r(s),
            base: r(b),
            offset: Imm::Const(v),
        },
        RawOp::Push(s) => Instruction::Push { src: r(s) },
        RawOp::Pop(d) => Instruction::Pop { dst: r(d) },
        RawOp::Cmp(a, b) => Instruction::Cmp {
            lhs: r(a),
            rhs: r(b),
        },
        RawOp::Call(t) => Instruction::Call { target: fn_name(t) },
        RawOp::Out(s) => Instruction::Out { src: r(s) },
        RawOp::Jmp(_) | RawOp::Branch(..) | RawOp::Ret | RawOp::Halt => {
            unreachable!("terminators handled by the block builder")
        }
    }
}

// --- .tbin container ---------------------------------------------------

const TBIN_MAGIC: &[u8; 4] = b"TBIN";
const TBIN_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum TbinError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic, not a .tbin file")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u16),
    #[error("malformed container: {0}")]
    Malformed(String),
}

/// Serializes an image: 16-byte header (magic, version u16, entry u32,
/// region count u16, 4 reserved bytes), region table (kind u8, offset
/// u32, length u32 each), then the raw bytes. Little-endian throughout.
pub fn tbin_bytes(img: &ByteImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.regions.len() * 9 + img.bytes.len());
    out.extend_from_slice(TBIN_MAGIC);
    out.extend_from_slice(&TBIN_VERSION.to_le_bytes());
    out.extend_from_slice(&img.entry.to_le_bytes());
    out.extend_from_slice(&(img.regions.len() as u16).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for r in &img.regions {
        out.push(r.kind.tag());
        out.extend_from_slice(&r.offset.to_le_bytes());
        out.extend_from_slice(&r.len.to_le_bytes());
    }
    out.extend_from_slice(&img.bytes);
    out
}

pub fn parse_tbin(raw: &[u8]) -> Result<ByteImage, TbinError> {
    if raw.len() < 16 || &raw[0..4] != TBIN_MAGIC {
        return Err(TbinError::BadMagic);
    }
    let version = u16::from_le_bytes([raw[4], raw[5]]);
    if version != TBIN_VERSION {
        return Err(TbinError::BadVersion(version));
    }
    let entry = u32::from_le_bytes([raw[6], raw[7], raw[8], raw[9]]);
    let region_count = u16::from_le_bytes([raw[10], raw[11]]) as usize;
    let table_end = 16 + region_count * 9;
    if raw.len() < table_end {
        return Err(TbinError::Malformed("region table truncated".into()));
    }
    let mut regions = Vec::with_capacity(region_count);
    for i in 0..region_count {
        let at = 16 + i * 9;
        let kind = RegionKind::from_tag(raw[at])
            .ok_or_else(|| TbinError::Malformed(format!("bad region kind {}", raw[at])))?;
        let offset = u32::from_le_bytes([raw[at + 1], raw[at + 2], raw[at + 3], raw[at + 4]]);
        let len = u32::from_le_bytes([raw[at + 5], raw[at + 6], raw[at + 7], raw[at + 8]]);
        regions.push(Region { kind, offset, len });
    }
    let bytes = raw[table_end..].to_vec();
    // Regions must tile the byte buffer exactly, in order.
    let mut cursor = 0u32;
    for r in &regions {
        if r.offset != cursor {
            return Err(TbinError::Malformed(format!(
                "region {} does not start at {:#x}",
                r.kind.name(),
                cursor
            )));
        }
        cursor = cursor
            .checked_add(r.len)
            .ok_or_else(|| TbinError::Malformed("region length overflow".into()))?;
    }
    if cursor as usize != bytes.len() {
        return Err(TbinError::Malformed(format!(
            "regions cover {:#x} bytes, buffer has {:#x}",
            cursor,
            bytes.len()
        )));
    }
    Ok(ByteImage {
        bytes,
        regions,
        entry,
    })
}

pub fn write_tbin(img: &ByteImage, path: impl AsRef<Path>) -> Result<(), TbinError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&tbin_bytes(img))?;
    Ok(())
}

pub fn read_tbin(path: impl AsRef<Path>) -> Result<ByteImage, TbinError> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    parse_tbin(&raw)
}

#[cfg(test)]
mod tests {
    use super::super::parse_assembly;
    use super::*;

    fn small() -> Program {
        parse_assembly("fn main {\nentry:\n movi r3, 7\n out r3\n halt\n}\n").unwrap()
    }

    #[test]
    fn encoding_is_deterministic() {
        let p = small();
        assert_eq!(encode(&p).unwrap(), encode(&p).unwrap());
    }

    #[test]
    fn nop_encodes_to_single_zero_byte() {
        let p = parse_assembly("fn main {\ne:\n nop\n halt\n}\n").unwrap();
        let img = encode(&p).unwrap();
        assert_eq!(img.code(), &[0x00, Mnemonic::Halt.opcode()]);
    }

    #[test]
    fn movi_encoding_matches_table() {
        // movi r3, 7 -> opcode, register byte 0x03, imm 07 00 00 00.
        let img = encode(&small()).unwrap();
        assert_eq!(&img.code()[..6], &[0x02, 0x03, 0x07, 0x00, 0x00, 0x00]);
    }

    #[test]
    fn unknown_opcode_rejected() {
        let img = ByteImage {
            bytes: vec![0xFF],
            regions: vec![
                Region {
                    kind: RegionKind::Code,
                    offset: 0,
                    len: 1,
                },
                Region {
                    kind: RegionKind::Data,
                    offset: 1,
                    len: 0,
                },
            ],
            entry: 0,
        };
        match decode(&img) {
            Err(DecodeError::UnknownOpcode {
                offset: 0,
                byte: 0xFF,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_instruction_rejected() {
        let img = ByteImage {
            bytes: vec![Mnemonic::Movi.opcode(), 0x01],
            regions: vec![Region {
                kind: RegionKind::Code,
                offset: 0,
                len: 2,
            }],
            entry: 0,
        };
        assert!(matches!(
            decode(&img),
            Err(DecodeError::Truncated { offset: 0 })
        ));
    }

    #[test]
    fn decode_reencode_is_byte_identical() {
        let src = "entry main\nfn helper {\nh0:\n addi r1, 5\n ret\n}\nfn main {\nentry:\n movi r1, 2\n call helper\n movi r2, 0\n cmp r1, r2\n jz done\nloop:\n out r1\n subi r1, 1\n cmp r1, r2\n jnz loop\ndone:\n halt\n}\ndata d = hex\"0102030405\"\n";
        let p = parse_assembly(src).unwrap();
        let img = encode(&p).unwrap();
        let p2 = decode(&img).unwrap();
        p2.validate().unwrap();
        let img2 = encode(&p2).unwrap();
        assert_eq!(img.code(), img2.code());
        assert_eq!(img.data(), img2.data());
        // Symbol table is lost in decode.
        assert!(img.region(RegionKind::Symtab).is_some());
        assert!(img2.region(RegionKind::Symtab).is_none());
    }

    #[test]
    fn stripped_image_has_two_regions() {
        let mut p = small();
        assert_eq!(encode(&p).unwrap().regions.len(), 3);
        p.symbols = false;
        assert_eq!(encode(&p).unwrap().regions.len(), 2);
    }

    #[test]
    fn tbin_round_trip() {
        let img = encode(&small()).unwrap();
        let parsed = parse_tbin(&tbin_bytes(&img)).unwrap();
        assert_eq!(img, parsed);
    }

    #[test]
    fn tbin_rejects_garbage() {
        assert!(matches!(parse_tbin(b"NOPE"), Err(TbinError::BadMagic)));
        let mut raw = tbin_bytes(&encode(&small()).unwrap());
        raw[4] = 9;
        assert!(matches!(parse_tbin(&raw), Err(TbinError::BadVersion(_))));
    }

    #[test]
    fn single_instruction_mutations_change_the_code_bytes() {
        // Injectivity at the instruction level: flipping any one
        // operand, immediate, or mnemonic moves some code byte.
        let src = "entry main\nfn main {\ne:\n movi r1, 7\n mov r2, r1\n addi r2, 3\n out r2\n halt\n}\n";
        let base = parse_assembly(src).unwrap();
        let base_code = encode(&base).unwrap().code().to_vec();
        let mut mutants: Vec<Program> = Vec::new();
        {
            let mut m = base.clone();
            m.functions[0].blocks[0].body[0] = Instruction::Movi {
                dst: Reg(1),
                imm: Imm::Const(8),
            };
            mutants.push(m);
        }
        {
            let mut m = base.clone();
            m.functions[0].blocks[0].body[1] = Instruction::Mov {
                dst: Reg(3),
                src: Reg(1),
            };
            mutants.push(m);
        }
        {
            let mut m = base.clone();
            m.functions[0].blocks[0].body[2] = Instruction::AluImm {
                op: AluImmOp::Subi,
                dst: Reg(2),
                imm: Imm::Const(3),
            };
            mutants.push(m);
        }
        {
            let mut m = base.clone();
            m.functions[0].blocks[0].body.remove(1);
            mutants.push(m);
        }
        for (i, m) in mutants.iter().enumerate() {
            assert_ne!(
                encode(m).unwrap().code(),
                base_code.as_slice(),
                "mutant {i} collided"
            );
        }
    }

    #[test]
    fn oversized_data_region_is_rejected() {
        let mut p = small();
        // The data region must fit between DATA_BASE and the stack floor.
        p.data.push(DataBlob::plain("big", vec![0u8; 0x4001]));
        assert!(matches!(encode(&p), Err(EncodeError::DataTooLarge(_))));
        p.data.clear();
        p.data.push(DataBlob::plain("fits", vec![0u8; 0x4000]));
        assert!(encode(&p).is_ok());
    }

    #[test]
    fn data_layout_aligns_blobs() {
        let blobs = vec![
            DataBlob::plain("a", vec![1, 2, 3]),
            DataBlob::plain("b", vec![4]),
            DataBlob::plain("c", vec![5, 6, 7, 8]),
        ];
        let (offsets, total) = data_layout(&blobs);
        assert_eq!(offsets, vec![0, 4, 8]);
        assert_eq!(total, 12);
    }

    #[test]
    fn instruction_starts_cover_code() {
        let img = encode(&small()).unwrap();
        let starts = img.instruction_starts().unwrap();
        assert_eq!(starts, vec![0, 6, 8]);
    }
}
