//! Deterministic interpreter over encoded images; the semantic
//! equivalence oracle for the whole crate. Two programs are considered
//! functionally equivalent when they produce equal `out` traces under
//! equal inputs.
//!
//! Machine state: eight general registers plus sp, zero/less-than flags,
//! and a flat 64 KiB zeroed memory. The data region is copied to
//! [`DATA_BASE`](super::DATA_BASE) before execution, the stack grows down
//! from [`STACK_INIT`](super::STACK_INIT), and a 32-bit load from
//! [`INPUT_PORT`](super::INPUT_PORT) consumes the next external input
//! value (or reads 0 once inputs are exhausted).

use super::{
    decode_one, ByteImage, Cond, RawOp, DATA_BASE, INPUT_PORT, MEMORY_SIZE, SP, STACK_FLOOR,
    STACK_INIT,
};

/// Maximum call nesting before the interpreter faults.
pub const MAX_CALL_DEPTH: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    OutOfBoundsMemory,
    StackOverflow,
    StackUnderflow,
    CallDepthExceeded,
    /// Unknown opcode, truncated instruction, or a control transfer
    /// outside the code region.
    BadInstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Halted,
    StepLimit,
    Fault(FaultKind),
}

impl Termination {
    pub fn name(&self) -> String {
        match self {
            Termination::Halted => "halted".into(),
            Termination::StepLimit => "step-limit".into(),
            Termination::Fault(kind) => format!("fault({kind:?})"),
        }
    }
}

/// The observable result of one execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub outputs: Vec<u32>,
    pub steps: u64,
    pub termination: Termination,
}

impl Trace {
    /// Observational equivalence: equal outputs and termination. Step
    /// counts are allowed to differ (diversified variants execute
    /// inserted nops and garbage).
    pub fn equivalent(&self, other: &Trace) -> bool {
        self.outputs == other.outputs && self.termination == other.termination
    }
}

struct Machine<'a> {
    regs: [u32; 9],
    zero: bool,
    lt: bool,
    memory: Vec<u8>,
    inputs: &'a [u32],
    next_input: usize,
    outputs: Vec<u32>,
    call_depth: u32,
}

impl<'a> Machine<'a> {
    fn read32(&mut self, addr: u32) -> Result<u32, FaultKind> {
        if addr == INPUT_PORT {
            let v = self.inputs.get(self.next_input).copied().unwrap_or(0);
            self.next_input += 1;
            return Ok(v);
        }
        let a = addr as usize;
        if a + 4 > MEMORY_SIZE {
            return Err(FaultKind::OutOfBoundsMemory);
        }
        Ok(u32::from_le_bytes([
            self.memory[a],
            self.memory[a + 1],
            self.memory[a + 2],
            self.memory[a + 3],
        ]))
    }

    fn write32(&mut self, addr: u32, value: u32) -> Result<(), FaultKind> {
        let a = addr as usize;
        if a + 4 > MEMORY_SIZE {
            return Err(FaultKind::OutOfBoundsMemory);
        }
        self.memory[a..a + 4].copy_from_slice(&value.to_le_bytes());
        Ok(())
    }

    fn push(&mut self, value: u32) -> Result<(), FaultKind> {
        let sp = self.regs[SP.0 as usize].wrapping_sub(4);
        if sp < STACK_FLOOR {
            return Err(FaultKind::StackOverflow);
        }
        self.write32(sp, value)?;
        self.regs[SP.0 as usize] = sp;
        Ok(())
    }

    fn pop(&mut self) -> Result<u32, FaultKind> {
        let sp = self.regs[SP.0 as usize];
        if sp.wrapping_add(4) > STACK_INIT {
            return Err(FaultKind::StackUnderflow);
        }
        let value = self.read32(sp)?;
        self.regs[SP.0 as usize] = sp + 4;
        Ok(value)
    }
}

/// Executes an image until halt, fault, or the step budget runs out.
pub fn interpret(img: &ByteImage, inputs: &[u32], step_limit: u64) -> Trace {
    assert!(step_limit > 0, "step_limit must be positive");
    let code = img.code();
    let mut m = Machine {
        regs: [0; 9],
        zero: false,
        lt: false,
        memory: vec![0; MEMORY_SIZE],
        inputs,
        next_input: 0,
        outputs: Vec::new(),
        call_depth: 0,
    };
    m.regs[SP.0 as usize] = STACK_INIT;
    let data = img.data();
    m.memory[DATA_BASE as usize..DATA_BASE as usize + data.len()].copy_from_slice(data);

    let mut pc = img.entry as usize;
    let mut steps = 0u64;
    let termination = loop {
        if steps == step_limit {
            break Termination::StepLimit;
        }
        if pc >= code.len() {
            break Termination::Fault(FaultKind::BadInstruction);
        }
        let (op, next) = match decode_one(code, pc) {
            Ok(v) => v,
            Err(_) => break Termination::Fault(FaultKind::BadInstruction),
        };
        steps += 1;
        let mut jump: Option<usize> = None;
        let result: Result<(), FaultKind> = (|| {
            match op {
                RawOp::Nop => {}
                RawOp::Mov(d, s) => m.regs[d as usize] = m.regs[s as usize],
                RawOp::Movi(d, v) => m.regs[d as usize] = v as u32,
                RawOp::Lea(d, s, v) => {
                    m.regs[d as usize] = m.regs[s as usize].wrapping_add(v as u32)
                }
                RawOp::Alu(alu, d, s) => {
                    m.regs[d as usize] = alu.apply(m.regs[d as usize], m.regs[s as usize])
                }
                RawOp::AluImm(op, d, v) => {
                    let cur = m.regs[d as usize];
                    m.regs[d as usize] = match op {
                        super::AluImmOp::Addi => cur.wrapping_add(v as u32),
                        super::AluImmOp::Subi => cur.wrapping_sub(v as u32),
                    };
                }
                RawOp::Load(d, b, v) => {
                    let addr = m.regs[b as usize].wrapping_add(v as u32);
                    m.regs[d as usize] = m.read32(addr)?;
                }
                RawOp::Store(s, b, v) => {
                    let addr = m.regs[b as usize].wrapping_add(v as u32);
                    m.write32(addr, m.regs[s as usize])?;
                }
                RawOp::Push(s) => m.push(m.regs[s as usize])?,
                RawOp::Pop(d) => m.regs[d as usize] = m.pop()?,
                RawOp::Cmp(a, b) => {
                    let (x, y) = (m.regs[a as usize], m.regs[b as usize]);
                    m.zero = x == y;
                    m.lt = (x as i32) < (y as i32);
                }
                RawOp::Jmp(t) => jump = Some(t as usize),
                RawOp::Branch(cond, t) => {
                    let taken = match cond {
                        Cond::Jz => m.zero,
                        Cond::Jnz => !m.zero,
                        Cond::Jlt => m.lt,
                        Cond::Jge => !m.lt,
                    };
                    if taken {
                        jump = Some(t as usize);
                    }
                }
                RawOp::Call(t) => {
                    if m.call_depth + 1 > MAX_CALL_DEPTH {
                        return Err(FaultKind::CallDepthExceeded);
                    }
                    m.push(next as u32)?;
                    m.call_depth += 1;
                    jump = Some(t as usize);
                }
                RawOp::Ret => {
                    if m.call_depth == 0 {
                        return Err(FaultKind::StackUnderflow);
                    }
                    let ret = m.pop()?;
                    m.call_depth -= 1;
                    jump = Some(ret as usize);
                }
                RawOp::Out(s) => m.outputs.push(m.regs[s as usize]),
                RawOp::Halt => {}
            }
            Ok(())
        })();
        if let Err(fault) = result {
            break Termination::Fault(fault);
        }
        if matches!(op, RawOp::Halt) {
            break Termination::Halted;
        }
        pc = jump.unwrap_or(next);
    };

    Trace {
        outputs: m.outputs,
        steps,
        termination,
    }
}
