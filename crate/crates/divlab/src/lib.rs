//! A self-contained laboratory for studying software diversity against
//! similarity-based matching, built on a small toy instruction set.
//!
//! The crate has two opposing halves. The offensive half ([`diversify`])
//! turns one program into many functionally equivalent but byte-distinct
//! variants: instruction substitution, dependency-aware reordering,
//! register permutation, nop/garbage insertion, basic-block splitting and
//! shuffling, and static-data obfuscation, all driven by a seeded
//! [`rng::Rng`] so every variant is reproducible. The matching half
//! measures how well the variants evade matching: mnemonic and n-gram
//! histograms with the S and Jaccard similarity scores ([`metrics`]),
//! maximal shared-substring and signature extraction over raw bytes
//! ([`signatures`]), and a normalizing [`canon`] pass that maps variants
//! back toward one canonical representative.
//!
//! [`isa`] defines the instruction set itself: assembly parsing, a
//! deterministic byte encoding, CFG construction, liveness, and an
//! interpreter that serves as the semantic-equivalence oracle throughout
//! the test suites. [`harness`] ties everything into populations,
//! experiment drivers and CSV reports; the `divlab` binary is a thin
//! wrapper around it.
//!
//! Batch operations (variant generation, pairwise matrices, suffix
//! sorting, evasion trials) run data-parallel on rayon when the default
//! `parallel` feature is enabled and fall back to equivalent sequential
//! loops without it; results are bit-identical either way.

pub mod canon;
pub mod corpus;
pub mod diversify;
mod exec;
pub mod harness;
pub mod isa;
pub mod metrics;
pub mod rng;
pub mod signatures;
pub mod testgen;

pub use isa::{ByteImage, Program, Trace};
pub use rng::Rng;
