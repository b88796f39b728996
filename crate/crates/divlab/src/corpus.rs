//! Access to the committed `.tasm` corpus at the workspace root and the
//! fixed input vectors every trace-equivalence check runs under.
//!
//! The corpus spans small and large programs (about 30 to 1000
//! instructions) so that experiments see both easy and hard
//! diversification targets: fibonacci, bubble sort, substring search,
//! checksum, a table-driven state machine, an interpreter running inner
//! bytecode, a command-loop service with string data, and a fully
//! unrolled matrix multiply.

use crate::isa::{parse_assembly, Program};
use std::path::PathBuf;

/// The three input vectors used by every trace-equivalence check.
pub const INPUT_VECTORS: [&[u32]; 3] = [
    &[],
    &[1, 2, 3, 4, 5, 6],
    &[0xDEAD_BEEF, 7, 0, 0xFFFF_FFFF, 42, 0x5A5A_5A5A, 9, 1],
];

/// Location of the committed corpus, relative to this crate.
pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Sorted paths of every corpus program.
pub fn corpus_paths() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory exists")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "tasm"))
        .collect();
    paths.sort();
    paths
}

/// Parses the whole corpus as `(stem, program)` pairs, sorted by name.
pub fn load_corpus() -> Vec<(String, Program)> {
    corpus_paths()
        .iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let text = std::fs::read_to_string(p).expect("corpus file readable");
            let program = parse_assembly(&text)
                .unwrap_or_else(|e| panic!("corpus file {} must parse: {e}", p.display()));
            (name, program)
        })
        .collect()
}

/// The corpus member with the most instructions (the diversification
/// stress target used by the substring and evasion experiments).
pub fn largest(corpus: &[(String, Program)]) -> &(String, Program) {
    corpus
        .iter()
        .max_by_key(|(_, p)| p.instruction_count())
        .expect("corpus is non-empty")
}
