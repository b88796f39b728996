//! The diversification engine: seed-driven transformations that map one
//! program to many functionally equivalent variants.
//!
//! Passes run in a fixed order so the generated data decoder is itself
//! diversified and stripping happens last:
//! data obfuscation, instruction substitution, garbage insertion, nop
//! insertion, instruction reordering, register permutation, basic-block
//! randomization, symbol stripping. Every pass draws from its own
//! splitmix64 stream keyed by `(seed, pass name, function index)`, so the
//! whole pipeline is a pure function of `(program, config)`.

mod blocks;
mod data;
mod noise;
mod regs;
mod reorder;
mod subst;

pub use blocks::randomize_blocks;
pub use data::{obfuscate_data, DECODER_STEM};
pub use noise::{insert_garbage, insert_nops};
pub use regs::permute_registers;
pub use reorder::reorder_instructions;
pub use subst::substitute_instructions;

use crate::isa::Program;
use crate::rng::Rng;
use thiserror::Error;

/// Which passes the pipeline runs. Disabling a pass makes it the
/// identity on the instruction stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassToggles {
    pub data: bool,
    pub substitute: bool,
    pub garbage: bool,
    pub nops: bool,
    pub reorder: bool,
    pub registers: bool,
    pub blocks: bool,
}

impl PassToggles {
    pub const ALL_ON: PassToggles = PassToggles {
        data: true,
        substitute: true,
        garbage: true,
        nops: true,
        reorder: true,
        registers: true,
        blocks: true,
    };

    pub const ALL_OFF: PassToggles = PassToggles {
        data: false,
        substitute: false,
        garbage: false,
        nops: false,
        reorder: false,
        registers: false,
        blocks: false,
    };

    /// Pass names as they appear in config files (`enable.<pass>`).
    pub const NAMES: [&'static str; 7] = [
        "data",
        "substitute",
        "garbage",
        "nops",
        "reorder",
        "registers",
        "blocks",
    ];

    pub fn get(&self, name: &str) -> Option<bool> {
        match name {
            "data" => Some(self.data),
            "substitute" => Some(self.substitute),
            "garbage" => Some(self.garbage),
            "nops" => Some(self.nops),
            "reorder" => Some(self.reorder),
            "registers" => Some(self.registers),
            "blocks" => Some(self.blocks),
            _ => None,
        }
    }

    pub fn set(&mut self, name: &str, value: bool) -> bool {
        match name {
            "data" => self.data = value,
            "substitute" => self.substitute = value,
            "garbage" => self.garbage = value,
            "nops" => self.nops = value,
            "reorder" => self.reorder = value,
            "registers" => self.registers = value,
            "blocks" => self.blocks = value,
            _ => return false,
        }
        true
    }
}

/// Tuning knobs for one diversification run. The defaults flip a fair
/// coin at every opportunity; the probabilities are exposed so the
/// garbage mix can be biased deliberately.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityConfig {
    pub seed: u64,
    pub p_substitute: f64,
    pub p_reorder: f64,
    pub p_nop: f64,
    pub p_garbage: f64,
    pub p_split: f64,
    pub max_garbage_len: usize,
    pub strip_symbols: bool,
    pub enable: PassToggles,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        DiversityConfig {
            seed: 0,
            p_substitute: 0.5,
            p_reorder: 0.5,
            p_nop: 0.5,
            p_garbage: 0.5,
            p_split: 0.5,
            max_garbage_len: 3,
            strip_symbols: true,
            enable: PassToggles::ALL_ON,
        }
    }
}

impl DiversityConfig {
    /// Every pass disabled; the pipeline reduces to symbol stripping.
    pub fn identity() -> Self {
        DiversityConfig {
            enable: PassToggles::ALL_OFF,
            ..DiversityConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The same configuration re-seeded for one variant of a population.
    pub fn for_variant(&self, index: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = variant_seed(self.seed, index);
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, p) in [
            ("p_substitute", self.p_substitute),
            ("p_reorder", self.p_reorder),
            ("p_nop", self.p_nop),
            ("p_garbage", self.p_garbage),
            ("p_split", self.p_split),
        ] {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(ConfigError::BadProbability {
                    key: name,
                    value: p,
                });
            }
        }
        if self.max_garbage_len < 1 {
            return Err(ConfigError::BadGarbageLen(self.max_garbage_len));
        }
        Ok(())
    }

    /// The rng stream for `pass` over function `fn_index`.
    pub(crate) fn pass_rng(&self, pass: &str, fn_index: usize) -> Rng {
        Rng::derive(self.seed, pass, fn_index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{key} = {value} is not a probability in [0, 1]")]
    BadProbability { key: &'static str, value: f64 },
    #[error("max_garbage_len must be at least 1, got {0}")]
    BadGarbageLen(usize),
}

/// The seed for variant `index` of a population generated from `seed`.
pub fn variant_seed(seed: u64, index: u64) -> u64 {
    Rng::derive(seed, "variant", index).next_u64()
}

/// Drops the symbol table; the encoded image then carries only code and
/// data regions. Idempotent.
pub fn strip_symbols(p: &Program) -> Program {
    let mut q = p.clone();
    q.symbols = false;
    q
}

/// Runs the full pipeline. Same `(p, cfg)` always yields a bit-identical
/// program (and therefore image).
pub fn diversify(p: &Program, cfg: &DiversityConfig) -> Program {
    debug_assert!(cfg.validate().is_ok());
    let mut q = p.clone();
    if cfg.enable.data {
        q = obfuscate_data(&q, cfg);
    }
    if cfg.enable.substitute {
        q = substitute_instructions(&q, cfg);
    }
    if cfg.enable.garbage {
        q = insert_garbage(&q, cfg);
    }
    if cfg.enable.nops {
        q = insert_nops(&q, cfg);
    }
    if cfg.enable.reorder {
        q = reorder_instructions(&q, cfg);
    }
    if cfg.enable.registers {
        q = permute_registers(&q, cfg);
    }
    if cfg.enable.blocks {
        q = randomize_blocks(&q, cfg);
    }
    if cfg.strip_symbols {
        q = strip_symbols(&q);
    }
    debug_assert_eq!(q.validate(), Ok(()));
    q
}
