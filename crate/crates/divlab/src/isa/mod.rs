//! The toy instruction set: domain types, the opcode/arity tables, and
//! program validation. Sub-modules add the assembly parser, the byte
//! encoding with its `.tbin` container, CFG construction, liveness, and
//! the interpreter.
//!
//! Machine model constants live here too: 32-bit registers r0..r7 plus
//! sp, a flat 64 KiB memory with the data image at [`DATA_BASE`], a
//! downward stack starting at [`STACK_INIT`], and a memory-mapped input
//! port at [`INPUT_PORT`].

mod cfg;
mod image;
mod interp;
mod liveness;
mod parse;

pub use cfg::{build_cfg, Cfg, CfgEdge, EdgeKind};
pub use image::{
    data_layout, decode, encode, encode_with_info, parse_tbin, read_tbin, tbin_bytes, write_tbin,
    ByteImage, DecodeError, EncodeError, EncodeInfo, Region, RegionKind, TbinError,
};
pub(crate) use image::{decode_one, RawOp};
pub use interp::{interpret, FaultKind, Termination, Trace};
pub(crate) use liveness::instruction_uses_defs;
pub use liveness::{liveness, LivenessMap, RegSet};
pub use parse::{parse_assembly, ParseError};

use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Base address the data region is copied to before execution.
pub const DATA_BASE: u32 = 0x8000;
/// Lowest address the stack may grow into; pushing past it faults.
pub const STACK_FLOOR: u32 = 0xC000;
/// Initial stack pointer. The words above it are reserved for I/O.
pub const STACK_INIT: u32 = 0xFFF0;
/// Loading a 32-bit word from this address consumes the next input value.
pub const INPUT_PORT: u32 = 0xFFFC;
/// Size of the flat memory, in bytes.
pub const MEMORY_SIZE: usize = 1 << 16;
/// Default interpreter step budget.
pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000;

/// A machine register: r0..r7 are general purpose, index 8 is sp.
///
/// r0 is the calling-convention return register; sp may only be written
/// by push/pop/call/ret and by addi/subi used for stack adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(pub u8);

pub const R0: Reg = Reg(0);
pub const R1: Reg = Reg(1);
pub const R2: Reg = Reg(2);
pub const R3: Reg = Reg(3);
pub const R4: Reg = Reg(4);
pub const R5: Reg = Reg(5);
pub const R6: Reg = Reg(6);
pub const R7: Reg = Reg(7);
pub const SP: Reg = Reg(8);

impl Reg {
    pub const COUNT: usize = 9;

    pub fn is_sp(self) -> bool {
        self == SP
    }

    /// The seven general registers a whole-program permutation may remap.
    pub fn permutable() -> [Reg; 7] {
        [R1, R2, R3, R4, R5, R6, R7]
    }

    pub fn general() -> [Reg; 8] {
        [R0, R1, R2, R3, R4, R5, R6, R7]
    }

    pub fn all() -> [Reg; 9] {
        [R0, R1, R2, R3, R4, R5, R6, R7, SP]
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_sp() {
            write!(f, "sp")
        } else {
            write!(f, "r{}", self.0)
        }
    }
}

/// Instruction mnemonics, in the fixed order that also assigns opcodes:
/// nop is 0x00 and the rest are numbered 0x01.. in declaration order.
/// Bytes 0xF0..=0xFF are reserved and never valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Mnemonic {
    Nop = 0x00,
    Mov = 0x01,
    Movi = 0x02,
    Lea = 0x03,
    Add = 0x04,
    Sub = 0x05,
    Mul = 0x06,
    Xor = 0x07,
    And = 0x08,
    Or = 0x09,
    Addi = 0x0A,
    Subi = 0x0B,
    Load = 0x0C,
    Store = 0x0D,
    Push = 0x0E,
    Pop = 0x0F,
    Cmp = 0x10,
    Jmp = 0x11,
    Jz = 0x12,
    Jnz = 0x13,
    Jlt = 0x14,
    Jge = 0x15,
    Call = 0x16,
    Ret = 0x17,
    Out = 0x18,
    Halt = 0x19,
}

impl Mnemonic {
    pub const ALL: [Mnemonic; 26] = [
        Mnemonic::Mov,
        Mnemonic::Movi,
        Mnemonic::Lea,
        Mnemonic::Add,
        Mnemonic::Sub,
        Mnemonic::Mul,
        Mnemonic::Xor,
        Mnemonic::And,
        Mnemonic::Or,
        Mnemonic::Addi,
        Mnemonic::Subi,
        Mnemonic::Load,
        Mnemonic::Store,
        Mnemonic::Push,
        Mnemonic::Pop,
        Mnemonic::Cmp,
        Mnemonic::Jmp,
        Mnemonic::Jz,
        Mnemonic::Jnz,
        Mnemonic::Jlt,
        Mnemonic::Jge,
        Mnemonic::Call,
        Mnemonic::Ret,
        Mnemonic::Nop,
        Mnemonic::Out,
        Mnemonic::Halt,
    ];

    pub fn opcode(self) -> u8 {
        self as u8
    }

    pub fn from_opcode(byte: u8) -> Option<Mnemonic> {
        Mnemonic::ALL.iter().copied().find(|m| m.opcode() == byte)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mnemonic::Nop => "nop",
            Mnemonic::Mov => "mov",
            Mnemonic::Movi => "movi",
            Mnemonic::Lea => "lea",
            Mnemonic::Add => "add",
            Mnemonic::Sub => "sub",
            Mnemonic::Mul => "mul",
            Mnemonic::Xor => "xor",
            Mnemonic::And => "and",
            Mnemonic::Or => "or",
            Mnemonic::Addi => "addi",
            Mnemonic::Subi => "subi",
            Mnemonic::Load => "load",
            Mnemonic::Store => "store",
            Mnemonic::Push => "push",
            Mnemonic::Pop => "pop",
            Mnemonic::Cmp => "cmp",
            Mnemonic::Jmp => "jmp",
            Mnemonic::Jz => "jz",
            Mnemonic::Jnz => "jnz",
            Mnemonic::Jlt => "jlt",
            Mnemonic::Jge => "jge",
            Mnemonic::Call => "call",
            Mnemonic::Ret => "ret",
            Mnemonic::Out => "out",
            Mnemonic::Halt => "halt",
        }
    }

    pub fn from_name(name: &str) -> Option<Mnemonic> {
        Mnemonic::ALL.iter().copied().find(|m| m.name() == name)
    }

    /// Encoded size in bytes: 1 opcode byte, 1 byte per register operand,
    /// 4 bytes per immediate or displacement.
    pub fn encoded_len(self) -> u32 {
        match self {
            Mnemonic::Nop | Mnemonic::Ret | Mnemonic::Halt => 1,
            Mnemonic::Push | Mnemonic::Pop | Mnemonic::Out => 2,
            Mnemonic::Mov
            | Mnemonic::Add
            | Mnemonic::Sub
            | Mnemonic::Mul
            | Mnemonic::Xor
            | Mnemonic::And
            | Mnemonic::Or
            | Mnemonic::Cmp => 3,
            Mnemonic::Jmp
            | Mnemonic::Jz
            | Mnemonic::Jnz
            | Mnemonic::Jlt
            | Mnemonic::Jge
            | Mnemonic::Call => 5,
            Mnemonic::Movi | Mnemonic::Addi | Mnemonic::Subi => 6,
            Mnemonic::Lea | Mnemonic::Load | Mnemonic::Store => 7,
        }
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An immediate operand: a literal, or a data label resolved to its
/// absolute address ([`DATA_BASE`] + blob offset) at encode time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Imm {
    Const(i32),
    DataAddr(String),
}

impl Imm {
    pub fn constant(&self) -> Option<i32> {
        match self {
            Imm::Const(v) => Some(*v),
            Imm::DataAddr(_) => None,
        }
    }
}

impl fmt::Display for Imm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Imm::Const(v) => write!(f, "{v}"),
            Imm::DataAddr(l) => write!(f, "{l}"),
        }
    }
}

/// Two-operand register ALU operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    Xor,
    And,
    Or,
}

impl AluOp {
    pub const ALL: [AluOp; 6] = [
        AluOp::Add,
        AluOp::Sub,
        AluOp::Mul,
        AluOp::Xor,
        AluOp::And,
        AluOp::Or,
    ];

    pub fn mnemonic(self) -> Mnemonic {
        match self {
            AluOp::Add => Mnemonic::Add,
            AluOp::Sub => Mnemonic::Sub,
            AluOp::Mul => Mnemonic::Mul,
            AluOp::Xor => Mnemonic::Xor,
            AluOp::And => Mnemonic::And,
            AluOp::Or => Mnemonic::Or,
        }
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Mul => a.wrapping_mul(b),
            AluOp::Xor => a ^ b,
            AluOp::And => a & b,
            AluOp::Or => a | b,
        }
    }
}

/// Register-immediate ALU operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluImmOp {
    Addi,
    Subi,
}

impl AluImmOp {
    pub fn mnemonic(self) -> Mnemonic {
        match self {
            AluImmOp::Addi => Mnemonic::Addi,
            AluImmOp::Subi => Mnemonic::Subi,
        }
    }
}

/// A non-terminating instruction. Control transfers live only in
/// [`Terminator`], so a block can never branch before its end.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// `mov rd, rs` — rd = rs
    Mov { dst: Reg, src: Reg },
    /// `movi rd, imm` — rd = imm
    Movi { dst: Reg, imm: Imm },
    /// `lea rd, rs, imm` — rd = rs + imm
    Lea { dst: Reg, src: Reg, imm: Imm },
    /// `add/sub/mul/xor/and/or rd, rs` — rd = rd op rs
    Alu { op: AluOp, dst: Reg, src: Reg },
    /// `addi/subi rd, imm` — rd = rd op imm
    AluImm { op: AluImmOp, dst: Reg, imm: Imm },
    /// `load rd, [rb+imm]` — `rd = mem32[rb+imm]`; the input port at
    /// [`INPUT_PORT`] reads the next external input instead.
    Load { dst: Reg, base: Reg, offset: Imm },
    /// `store rs, [rb+imm]` — `mem32[rb+imm] = rs`
    Store { src: Reg, base: Reg, offset: Imm },
    /// `push rs` — sp -= 4; `mem32[sp] = rs`
    Push { src: Reg },
    /// `pop rd` — `rd = mem32[sp]`; sp += 4
    Pop { dst: Reg },
    /// `cmp ra, rb` — sets the zero and (signed) less-than flags
    Cmp { lhs: Reg, rhs: Reg },
    /// `call f` — pushes the return offset and enters function `f`
    Call { target: String },
    /// `out rs` — appends rs to the trace outputs
    Out { src: Reg },
    /// `nop`
    Nop,
}

impl Instruction {
    pub fn mnemonic(&self) -> Mnemonic {
        match self {
            Instruction::Mov { .. } => Mnemonic::Mov,
            Instruction::Movi { .. } => Mnemonic::Movi,
            Instruction::Lea { .. } => Mnemonic::Lea,
            Instruction::Alu { op, .. } => op.mnemonic(),
            Instruction::AluImm { op, .. } => op.mnemonic(),
            Instruction::Load { .. } => Mnemonic::Load,
            Instruction::Store { .. } => Mnemonic::Store,
            Instruction::Push { .. } => Mnemonic::Push,
            Instruction::Pop { .. } => Mnemonic::Pop,
            Instruction::Cmp { .. } => Mnemonic::Cmp,
            Instruction::Call { .. } => Mnemonic::Call,
            Instruction::Out { .. } => Mnemonic::Out,
            Instruction::Nop => Mnemonic::Nop,
        }
    }

    /// The register this instruction writes, if any. Push/pop/call also
    /// move sp; see [`liveness`] for the full def/use sets.
    pub fn dst_reg(&self) -> Option<Reg> {
        match self {
            Instruction::Mov { dst, .. }
            | Instruction::Movi { dst, .. }
            | Instruction::Lea { dst, .. }
            | Instruction::Alu { dst, .. }
            | Instruction::AluImm { dst, .. }
            | Instruction::Load { dst, .. }
            | Instruction::Pop { dst } => Some(*dst),
            _ => None,
        }
    }

    /// True for instructions that touch memory, consume the input port,
    /// or are otherwise externally observable; reordering keeps these in
    /// their original relative order.
    pub fn is_effect(&self) -> bool {
        matches!(
            self,
            Instruction::Load { .. }
                | Instruction::Store { .. }
                | Instruction::Push { .. }
                | Instruction::Pop { .. }
                | Instruction::Call { .. }
                | Instruction::Out { .. }
        )
    }

    /// Applies `f` to every register operand.
    pub fn map_regs(&mut self, mut f: impl FnMut(Reg) -> Reg) {
        match self {
            Instruction::Mov { dst, src } | Instruction::Alu { dst, src, .. } => {
                *dst = f(*dst);
                *src = f(*src);
            }
            Instruction::Movi { dst, .. } | Instruction::AluImm { dst, .. } => *dst = f(*dst),
            Instruction::Lea { dst, src, .. } => {
                *dst = f(*dst);
                *src = f(*src);
            }
            Instruction::Load { dst, base, .. } => {
                *dst = f(*dst);
                *base = f(*base);
            }
            Instruction::Store { src, base, .. } => {
                *src = f(*src);
                *base = f(*base);
            }
            Instruction::Push { src } | Instruction::Out { src } => *src = f(*src),
            Instruction::Pop { dst } => *dst = f(*dst),
            Instruction::Cmp { lhs, rhs } => {
                *lhs = f(*lhs);
                *rhs = f(*rhs);
            }
            Instruction::Call { .. } | Instruction::Nop => {}
        }
    }
}

/// Conditional branch kinds; all read the flags set by the nearest
/// preceding `cmp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cond {
    /// Taken when the zero flag is set.
    Jz,
    /// Taken when the zero flag is clear.
    Jnz,
    /// Taken when the signed less-than flag is set.
    Jlt,
    /// Taken when the signed less-than flag is clear.
    Jge,
}

impl Cond {
    pub fn mnemonic(self) -> Mnemonic {
        match self {
            Cond::Jz => Mnemonic::Jz,
            Cond::Jnz => Mnemonic::Jnz,
            Cond::Jlt => Mnemonic::Jlt,
            Cond::Jge => Mnemonic::Jge,
        }
    }
}

/// The final instruction of a basic block, or the implicit fallthrough
/// marker. A conditional branch records its fallthrough successor, which
/// must be the next block in layout order for the program to encode.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Terminator {
    Jmp {
        target: String,
    },
    Branch {
        cond: Cond,
        target: String,
        fallthrough: String,
    },
    Ret,
    Halt,
    /// No encoded bytes; execution continues into `target`, which must be
    /// the next block in layout order.
    FallThrough {
        target: String,
    },
}

impl Terminator {
    /// The mnemonic of the encoded terminator instruction, if any.
    pub fn mnemonic(&self) -> Option<Mnemonic> {
        match self {
            Terminator::Jmp { .. } => Some(Mnemonic::Jmp),
            Terminator::Branch { cond, .. } => Some(cond.mnemonic()),
            Terminator::Ret => Some(Mnemonic::Ret),
            Terminator::Halt => Some(Mnemonic::Halt),
            Terminator::FallThrough { .. } => None,
        }
    }

    pub fn encoded_len(&self) -> u32 {
        self.mnemonic().map_or(0, Mnemonic::encoded_len)
    }
}

/// A straight-line run of instructions ending in a single terminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub body: Vec<Instruction>,
    pub terminator: Terminator,
}

impl BasicBlock {
    /// Mnemonics of the body plus the encoded terminator, the unit all
    /// histogram metrics count.
    pub fn mnemonics(&self) -> impl Iterator<Item = Mnemonic> + '_ {
        self.body
            .iter()
            .map(Instruction::mnemonic)
            .chain(self.terminator.mnemonic())
    }

    /// Number of encoded instructions (body plus explicit terminator).
    pub fn instruction_count(&self) -> usize {
        self.body.len() + usize::from(self.terminator.mnemonic().is_some())
    }
}

/// A named function: an ordered list of blocks, entered at the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    pub fn entry_label(&self) -> &str {
        &self.blocks[0].label
    }

    pub fn block(&self, label: &str) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(BasicBlock::instruction_count).sum()
    }
}

/// A static data blob. `bytes` holds the stored form: when `encoding` is
/// [`DataEncoding::Xored`], stored bytes are the element-wise XOR of the
/// logical bytes with the key, and generated decoder code restores them
/// in memory at runtime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataBlob {
    pub label: String,
    pub bytes: Vec<u8>,
    pub encoding: DataEncoding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataEncoding {
    Plain,
    Xored { key: u8 },
}

impl DataBlob {
    pub fn plain(label: impl Into<String>, bytes: Vec<u8>) -> Self {
        DataBlob {
            label: label.into(),
            bytes,
            encoding: DataEncoding::Plain,
        }
    }

    /// The logical bytes: stored bytes with any XOR encoding undone.
    pub fn logical_bytes(&self) -> Vec<u8> {
        match self.encoding {
            DataEncoding::Plain => self.bytes.clone(),
            DataEncoding::Xored { key } => self.bytes.iter().map(|b| b ^ key).collect(),
        }
    }
}

/// A whole program: functions in layout order, data blobs, and whether
/// the encoded image carries a symbol table naming every function and
/// blob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<Function>,
    pub data: Vec<DataBlob>,
    /// When true, `encode` emits a symtab region covering every function
    /// and data blob; stripping clears it.
    pub symbols: bool,
    pub entry_function: String,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn entry(&self) -> &Function {
        self.function(&self.entry_function)
            .expect("validated program has an entry function")
    }

    pub fn instruction_count(&self) -> usize {
        self.functions.iter().map(Function::instruction_count).sum()
    }

    /// Flat mnemonic stream in layout order, per block.
    pub fn mnemonics(&self) -> impl Iterator<Item = Mnemonic> + '_ {
        self.functions
            .iter()
            .flat_map(|f| f.blocks.iter())
            .flat_map(BasicBlock::mnemonics)
    }

    /// Checks every structural invariant: label resolution, duplicate
    /// names, fallthrough adjacency, call/data references, and the sp
    /// destination rule.
    pub fn validate(&self) -> Result<(), ValidateError> {
        let mut fn_names = BTreeSet::new();
        for f in &self.functions {
            if !fn_names.insert(f.name.as_str()) {
                return Err(ValidateError::DuplicateFunction(f.name.clone()));
            }
        }
        let mut data_names = BTreeSet::new();
        for d in &self.data {
            if !data_names.insert(d.label.as_str()) {
                return Err(ValidateError::DuplicateData(d.label.clone()));
            }
        }
        if self.function(&self.entry_function).is_none() {
            return Err(ValidateError::MissingEntryFunction(
                self.entry_function.clone(),
            ));
        }
        for f in &self.functions {
            if f.blocks.is_empty() {
                return Err(ValidateError::EmptyFunction(f.name.clone()));
            }
            let mut labels = BTreeSet::new();
            for b in &f.blocks {
                if !labels.insert(b.label.as_str()) {
                    return Err(ValidateError::DuplicateLabel {
                        function: f.name.clone(),
                        label: b.label.clone(),
                    });
                }
            }
            for (i, b) in f.blocks.iter().enumerate() {
                for ins in &b.body {
                    self.validate_instruction(f, ins)?;
                }
                let check_target = |label: &str| {
                    if labels.contains(label) {
                        Ok(())
                    } else {
                        Err(ValidateError::UnresolvedLabel {
                            function: f.name.clone(),
                            label: label.to_string(),
                        })
                    }
                };
                let next_label = f.blocks.get(i + 1).map(|n| n.label.as_str());
                match &b.terminator {
                    Terminator::Jmp { target } => check_target(target)?,
                    Terminator::Branch {
                        target,
                        fallthrough,
                        ..
                    } => {
                        check_target(target)?;
                        check_target(fallthrough)?;
                        if next_label != Some(fallthrough.as_str()) {
                            return Err(ValidateError::BrokenFallthrough {
                                function: f.name.clone(),
                                block: b.label.clone(),
                            });
                        }
                    }
                    Terminator::FallThrough { target } => {
                        check_target(target)?;
                        if next_label != Some(target.as_str()) {
                            return Err(ValidateError::BrokenFallthrough {
                                function: f.name.clone(),
                                block: b.label.clone(),
                            });
                        }
                    }
                    Terminator::Ret | Terminator::Halt => {}
                }
            }
        }
        Ok(())
    }

    fn validate_instruction(&self, f: &Function, ins: &Instruction) -> Result<(), ValidateError> {
        // sp is never the destination of arithmetic except addi/subi used
        // for stack adjustment.
        let sp_dst_ok = matches!(ins, Instruction::AluImm { .. } | Instruction::Pop { .. });
        if let Some(dst) = ins.dst_reg() {
            if dst.is_sp() && !sp_dst_ok {
                return Err(ValidateError::SpDestination {
                    function: f.name.clone(),
                    mnemonic: ins.mnemonic(),
                });
            }
        }
        for r in instruction_regs(ins) {
            if r.0 as usize >= Reg::COUNT {
                return Err(ValidateError::BadRegister(r.0));
            }
        }
        match ins {
            Instruction::Call { target } => {
                if self.function(target).is_none() {
                    return Err(ValidateError::UnresolvedCall(target.clone()));
                }
            }
            Instruction::Movi { imm, .. }
            | Instruction::Lea { imm, .. }
            | Instruction::AluImm { imm, .. }
            | Instruction::Load { offset: imm, .. }
            | Instruction::Store { offset: imm, .. } => {
                if let Imm::DataAddr(label) = imm {
                    if !self.data.iter().any(|d| &d.label == label) {
                        return Err(ValidateError::UnresolvedData(label.clone()));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn instruction_regs(ins: &Instruction) -> Vec<Reg> {
    let mut regs = Vec::new();
    let mut probe = ins.clone();
    probe.map_regs(|r| {
        regs.push(r);
        r
    });
    regs
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidateError {
    #[error("duplicate function `{0}`")]
    DuplicateFunction(String),
    #[error("duplicate data blob `{0}`")]
    DuplicateData(String),
    #[error("entry function `{0}` does not exist")]
    MissingEntryFunction(String),
    #[error("function `{0}` has no blocks")]
    EmptyFunction(String),
    #[error("duplicate label `{label}` in function `{function}`")]
    DuplicateLabel { function: String, label: String },
    #[error("unresolved label `{label}` in function `{function}`")]
    UnresolvedLabel { function: String, label: String },
    #[error("block `{block}` in `{function}` falls through to a non-adjacent block")]
    BrokenFallthrough { function: String, block: String },
    #[error("call to unknown function `{0}`")]
    UnresolvedCall(String),
    #[error("reference to unknown data blob `{0}`")]
    UnresolvedData(String),
    #[error("sp used as destination of {mnemonic} in `{function}`")]
    SpDestination {
        function: String,
        mnemonic: Mnemonic,
    },
    #[error("register index {0} out of range")]
    BadRegister(u8),
}
