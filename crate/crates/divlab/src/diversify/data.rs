//! Static-data obfuscation: every blob is XORed with an independent
//! random key byte, and a generated decoder function — prepended so the
//! later passes diversify it like any other code — XORs the data back in
//! place at its load address before the original entry code runs.
//!
//! The decoder works in 32-bit words. Blobs are 4-byte aligned by the
//! encoder, so whole words are XORed with the key replicated four times;
//! a length remainder is handled with a masked key so bytes past the
//! blob end are written back unchanged.

use super::DiversityConfig;
use crate::isa::{
    data_layout, AluImmOp, AluOp, BasicBlock, Cond, DataEncoding, Function, Imm, Instruction,
    Program, Terminator, DATA_BASE, R1, R2, R3, R4,
};

/// Name stem of the generated decoder function.
pub const DECODER_STEM: &str = "__decode_data";

/// Applies the pass with keys drawn from the config's data stream.
pub fn obfuscate_data(p: &Program, cfg: &DiversityConfig) -> Program {
    let mut rng = cfg.pass_rng("data", 0);
    let keys: Vec<u8> = p
        .data
        .iter()
        .map(|_| (rng.next_u64() & 0xFF) as u8)
        .collect();
    obfuscate_with_keys(p, &keys)
}

/// Deterministic core: XOR-encode each blob with the given key and
/// prepend the matching decoder. Exposed for tests that need fixed keys.
pub(crate) fn obfuscate_with_keys(p: &Program, keys: &[u8]) -> Program {
    assert_eq!(keys.len(), p.data.len());
    let mut q = p.clone();

    for (blob, &key) in q.data.iter_mut().zip(keys) {
        for b in &mut blob.bytes {
            *b ^= key;
        }
        blob.encoding = match blob.encoding {
            DataEncoding::Plain => DataEncoding::Xored { key },
            // XOR composes: the stored bytes are now logical ^ (k ^ key).
            DataEncoding::Xored { key: k } => DataEncoding::Xored { key: k ^ key },
        };
    }

    let decoder_name = {
        let mut name = DECODER_STEM.to_string();
        let mut n = 0;
        while q.function(&name).is_some() {
            n += 1;
            name = format!("{DECODER_STEM}_{n}");
        }
        name
    };

    let decoder = build_decoder(&decoder_name, &q, keys);
    q.functions.insert(0, decoder);
    let entry_name = q.entry_function.clone();
    let entry = q
        .functions
        .iter_mut()
        .find(|f| f.name == entry_name)
        .expect("entry function exists");
    entry.blocks[0].body.insert(
        0,
        Instruction::Call {
            target: decoder_name,
        },
    );
    q
}

fn build_decoder(name: &str, p: &Program, keys: &[u8]) -> Function {
    let (offsets, _) = data_layout(&p.data);
    let mut blocks: Vec<BasicBlock> = Vec::new();
    let fin = "fin".to_string();

    // Per blob: a word loop plus an optional masked-tail fixup.
    let mut sections: Vec<Vec<BasicBlock>> = Vec::new();
    for (i, (blob, &key)) in p.data.iter().zip(keys).enumerate() {
        let addr = DATA_BASE + offsets[i];
        let len = blob.bytes.len() as u32;
        let full_end = addr + 4 * (len / 4);
        let tail = (len % 4) as usize;
        let key32 = u32::from_le_bytes([key; 4]) as i32;

        let pre = format!("b{i}");
        let head = format!("b{i}_loop");
        let body = format!("b{i}_word");
        let tail_label = format!("b{i}_tail");
        let exit = if tail > 0 {
            tail_label.clone()
        } else {
            String::new()
        };

        let mut section = vec![
            BasicBlock {
                label: pre,
                body: vec![
                    Instruction::Movi {
                        dst: R1,
                        imm: Imm::Const(addr as i32),
                    },
                    Instruction::Movi {
                        dst: R2,
                        imm: Imm::Const(full_end as i32),
                    },
                    Instruction::Movi {
                        dst: R3,
                        imm: Imm::Const(key32),
                    },
                ],
                terminator: Terminator::FallThrough {
                    target: head.clone(),
                },
            },
            BasicBlock {
                label: head.clone(),
                body: vec![Instruction::Cmp { lhs: R1, rhs: R2 }],
                terminator: Terminator::Branch {
                    cond: Cond::Jge,
                    // Patched to the next section's first label below.
                    target: exit,
                    fallthrough: body.clone(),
                },
            },
            BasicBlock {
                label: body,
                body: vec![
                    Instruction::Load {
                        dst: R4,
                        base: R1,
                        offset: Imm::Const(0),
                    },
                    Instruction::Alu {
                        op: AluOp::Xor,
                        dst: R4,
                        src: R3,
                    },
                    Instruction::Store {
                        src: R4,
                        base: R1,
                        offset: Imm::Const(0),
                    },
                    Instruction::AluImm {
                        op: AluImmOp::Addi,
                        dst: R1,
                        imm: Imm::Const(4),
                    },
                ],
                terminator: Terminator::Jmp { target: head },
            },
        ];
        if tail > 0 {
            let mut tk = [0u8; 4];
            tk[..tail].fill(key);
            section.push(BasicBlock {
                label: tail_label,
                body: vec![
                    Instruction::Movi {
                        dst: R3,
                        imm: Imm::Const(u32::from_le_bytes(tk) as i32),
                    },
                    Instruction::Load {
                        dst: R4,
                        base: R1,
                        offset: Imm::Const(0),
                    },
                    Instruction::Alu {
                        op: AluOp::Xor,
                        dst: R4,
                        src: R3,
                    },
                    Instruction::Store {
                        src: R4,
                        base: R1,
                        offset: Imm::Const(0),
                    },
                ],
                terminator: Terminator::FallThrough {
                    // Patched below.
                    target: String::new(),
                },
            });
        }
        sections.push(section);
    }

    // Wire each section's exit to the next section (or fin).
    let section_starts: Vec<String> = sections
        .iter()
        .map(|s| s[0].label.clone())
        .chain(std::iter::once(fin.clone()))
        .collect();
    for (i, section) in sections.iter_mut().enumerate() {
        let next = section_starts[i + 1].clone();
        for b in section.iter_mut() {
            if let Terminator::Branch { target, .. } = &mut b.terminator {
                if target.is_empty() {
                    *target = next.clone();
                }
            }
            if let Terminator::FallThrough { target } = &mut b.terminator {
                if target.is_empty() {
                    *target = next.clone();
                }
            }
        }
        blocks.append(section);
    }
    blocks.push(BasicBlock {
        label: fin,
        body: Vec::new(),
        terminator: Terminator::Ret,
    });

    Function {
        name: name.to_string(),
        blocks,
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::assert_trace_equivalent;
    use super::*;
    use crate::isa::{encode, parse_assembly};

    fn blob_reader() -> Program {
        // Reads and emits every word of its blob, including a ragged tail.
        parse_assembly(
            "fn main {\ne:\n movi r1, msg\n movi r2, 3\nloop:\n load r3, [r1]\n out r3\n addi r1, 4\n subi r2, 1\n movi r4, 0\n cmp r2, r4\n jnz loop\nfin:\n halt\n}\ndata msg = hex\"0102030405060708090A\"\n",
        )
        .unwrap()
    }

    #[test]
    fn stored_bytes_are_logical_xor_key() {
        let p = blob_reader();
        let q = obfuscate_with_keys(&p, &[0xAB]);
        let blob = &q.data[0];
        assert_eq!(blob.encoding, DataEncoding::Xored { key: 0xAB });
        for (stored, logical) in blob.bytes.iter().zip(&p.data[0].bytes) {
            assert_eq!(stored ^ 0xAB, *logical);
        }
        assert_eq!(blob.logical_bytes(), p.data[0].bytes);
    }

    #[test]
    fn decoder_restores_memory_before_entry_code_runs() {
        let p = blob_reader();
        for key in [0xABu8, 0x01, 0xFF, 0x5A] {
            let q = obfuscate_with_keys(&p, &[key]);
            assert_trace_equivalent(&p, &q, &format!("key {key:#04x}"));
        }
    }

    #[test]
    fn zero_key_keeps_bytes_and_trace() {
        let p = blob_reader();
        let q = obfuscate_with_keys(&p, &[0]);
        assert_eq!(q.data[0].bytes, p.data[0].bytes);
        assert_eq!(q.data[0].encoding, DataEncoding::Xored { key: 0 });
        assert_trace_equivalent(&p, &q, "identity key");
    }

    #[test]
    fn decoder_function_is_prepended_and_called_first() {
        let p = blob_reader();
        let q = obfuscate_data(&p, &DiversityConfig::default().with_seed(9));
        assert!(q.functions[0].name.starts_with(DECODER_STEM));
        match &q.entry().blocks[0].body[0] {
            Instruction::Call { target } => assert!(target.starts_with(DECODER_STEM)),
            other => panic!("entry does not call the decoder first: {other:?}"),
        }
        q.validate().unwrap();
    }

    #[test]
    fn zero_blob_program_gets_empty_decoder() {
        let p = parse_assembly("fn main {\ne:\n movi r0, 1\n out r0\n halt\n}\n").unwrap();
        let q = obfuscate_data(&p, &DiversityConfig::default());
        assert_eq!(q.functions[0].blocks.len(), 1);
        assert!(q.functions[0].blocks[0].body.is_empty());
        assert_trace_equivalent(&p, &q, "no blobs");
    }

    #[test]
    fn decoder_name_avoids_collisions() {
        let src = format!(
            "entry main\nfn {DECODER_STEM} {{\nd:\n ret\n}}\nfn main {{\ne:\n movi r0, 1\n out r0\n halt\n}}\ndata d0 = hex\"11\"\n"
        );
        let p = parse_assembly(&src).unwrap();
        let q = obfuscate_data(&p, &DiversityConfig::default());
        let names: Vec<&str> = q.functions.iter().map(|f| f.name.as_str()).collect();
        assert!(names.contains(&"__decode_data_1"));
        q.validate().unwrap();
    }

    #[test]
    fn corpus_traces_survive_data_obfuscation() {
        for (name, p) in crate::corpus::load_corpus() {
            for seed in 0..5 {
                let q = obfuscate_data(&p, &DiversityConfig::default().with_seed(seed));
                assert_trace_equivalent(&p, &q, &format!("{name} seed {seed}"));
            }
        }
    }

    #[test]
    fn double_obfuscation_composes() {
        let p = blob_reader();
        let once = obfuscate_with_keys(&p, &[0x3C]);
        let twice = obfuscate_with_keys(&once, &[0xA5]);
        assert_eq!(
            twice.data[0].encoding,
            DataEncoding::Xored { key: 0x3C ^ 0xA5 }
        );
        assert_eq!(twice.data[0].logical_bytes(), p.data[0].bytes);
        assert_trace_equivalent(&p, &twice, "double xor");
    }

    #[test]
    fn strip_after_obfuscation_keeps_code_and_data_regions() {
        let p = blob_reader();
        let q = obfuscate_with_keys(&p, &[0x77]);
        let stripped = super::super::strip_symbols(&q);
        let a = encode(&q).unwrap();
        let b = encode(&stripped).unwrap();
        assert_eq!(a.code(), b.code());
        assert_eq!(a.data(), b.data());
        assert!(b.region(crate::isa::RegionKind::Symtab).is_none());
    }
}
