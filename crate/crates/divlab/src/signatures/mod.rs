//! Byte-level signature analysis over image populations: maximal shared
//! substrings (the candidate signatures a scanner could build), their
//! length histograms and categories, signature extraction and matching,
//! and the sample-and-scan evasion experiment.

mod naive;
mod suffix;

pub use naive::shared_substrings_naive;

use crate::exec;
use crate::isa::{decode_one, ByteImage, Mnemonic, RegionKind};
use crate::rng::Rng;
use std::collections::BTreeMap;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("min_len must be at least 1")]
    BadMinLen,
    #[error("quorum {quorum} out of range for a population of {population}")]
    BadQuorum { quorum: usize, population: usize },
    #[error("population of {population} too small for k = {k}")]
    PopulationTooSmall { k: usize, population: usize },
    #[error("at most 64 documents are supported, got {0}")]
    TooManyDocuments(usize),
}

/// One occurrence of a shared substring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Occurrence {
    pub member: usize,
    pub offset: usize,
}

/// A maximal byte substring with its supporting population members:
/// extending it one byte in either direction would lose a member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedSubstring {
    pub bytes: Vec<u8>,
    /// Sorted member indices containing the substring.
    pub support: Vec<usize>,
    /// Every (member, offset), sorted.
    pub occurrences: Vec<Occurrence>,
}

impl SharedSubstring {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// Region annotation of one occurrence within an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTag {
    Code,
    Data,
    /// Starts in code and runs into the data region.
    Spanning,
}

impl RegionTag {
    pub fn name(self) -> &'static str {
        match self {
            RegionTag::Code => "code",
            RegionTag::Data => "data",
            RegionTag::Spanning => "spanning",
        }
    }
}

/// Region kind an occurrence of `len` bytes covers within `img`.
pub fn region_tag(img: &ByteImage, offset: usize, len: usize) -> RegionTag {
    let code_len = img.region(RegionKind::Code).map_or(0, |r| r.len) as usize;
    if offset + len <= code_len {
        RegionTag::Code
    } else if offset >= code_len {
        RegionTag::Data
    } else {
        RegionTag::Spanning
    }
}

/// Deterministic output order: longest first, then bytes, then support.
pub(crate) fn sort_canonically(subs: &mut [SharedSubstring]) {
    subs.sort_unstable_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.bytes.cmp(&b.bytes))
            .then_with(|| a.support.cmp(&b.support))
    });
}

/// All maximal substrings of length >= min_len shared by >= quorum
/// members, over raw byte documents.
pub fn shared_substrings_bytes(
    docs: &[&[u8]],
    min_len: usize,
    quorum: usize,
) -> Result<Vec<SharedSubstring>, SignatureError> {
    if docs.is_empty() {
        return Err(SignatureError::EmptyPopulation);
    }
    if docs.len() > 64 {
        return Err(SignatureError::TooManyDocuments(docs.len()));
    }
    if min_len == 0 {
        return Err(SignatureError::BadMinLen);
    }
    if quorum < 2 || quorum > docs.len() {
        return Err(SignatureError::BadQuorum {
            quorum,
            population: docs.len(),
        });
    }
    let data = suffix::SuffixData::new(docs);
    let mut out: Vec<SharedSubstring> = data
        .maximal_repeats(min_len, quorum)
        .into_iter()
        .map(|r| SharedSubstring {
            bytes: r.bytes,
            support: (0..docs.len())
                .filter(|d| r.support_mask >> d & 1 == 1)
                .collect(),
            occurrences: r
                .occurrences
                .into_iter()
                .map(|(member, offset)| Occurrence { member, offset })
                .collect(),
        })
        .collect();
    sort_canonically(&mut out);
    Ok(out)
}

/// As [`shared_substrings_bytes`], over the scannable bytes (code plus
/// data, symbol table excluded) of an image population.
pub fn shared_substrings(
    images: &[ByteImage],
    min_len: usize,
    quorum: usize,
) -> Result<Vec<SharedSubstring>, SignatureError> {
    let docs: Vec<&[u8]> = images.iter().map(|i| i.scan_bytes()).collect();
    shared_substrings_bytes(&docs, min_len, quorum)
}

/// Exact-length counts, the raw data behind the log-scale length plots.
pub fn length_histogram(subs: &[SharedSubstring]) -> BTreeMap<usize, u64> {
    let mut hist = BTreeMap::new();
    for s in subs {
        *hist.entry(s.len()).or_insert(0) += 1;
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SubseqCategory {
    NopSled,
    CallSequence,
    MovSequence,
    StartCode,
    PotentialSignature,
}

impl SubseqCategory {
    pub const ALL: [SubseqCategory; 5] = [
        SubseqCategory::NopSled,
        SubseqCategory::CallSequence,
        SubseqCategory::MovSequence,
        SubseqCategory::StartCode,
        SubseqCategory::PotentialSignature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SubseqCategory::NopSled => "nop_sled",
            SubseqCategory::CallSequence => "call_sequence",
            SubseqCategory::MovSequence => "mov_sequence",
            SubseqCategory::StartCode => "start_code",
            SubseqCategory::PotentialSignature => "potential_signature",
        }
    }
}

/// Decoded context for classification: one entry per population member.
pub struct ClassifyContext<'a> {
    pub images: &'a [ByteImage],
    /// Instruction start offsets per member's code region.
    pub instr_starts: Vec<Vec<u32>>,
    /// Code span of the generated entry/decoder function, when known.
    pub start_code_spans: Vec<Option<Range<u32>>>,
}

impl<'a> ClassifyContext<'a> {
    /// Context with instruction boundaries recovered by linear sweep and
    /// no known decoder spans.
    pub fn from_images(images: &'a [ByteImage]) -> Self {
        let instr_starts = images
            .iter()
            .map(|img| img.instruction_starts().unwrap_or_default())
            .collect();
        ClassifyContext {
            images,
            instr_starts,
            start_code_spans: vec![None; images.len()],
        }
    }

    /// Mnemonics of the instructions overlapping [offset, offset+len) in
    /// the member's code region, or None when the span has no decodable
    /// code (data-region occurrence).
    fn instruction_view(&self, member: usize, offset: usize, len: usize) -> Option<Vec<Mnemonic>> {
        let img = &self.images[member];
        let code = img.code();
        let starts = &self.instr_starts[member];
        if starts.is_empty() || offset >= code.len() {
            return None;
        }
        let end = (offset + len).min(code.len());
        // First instruction whose span covers `offset`.
        let first = match starts.binary_search(&(offset as u32)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let mut view = Vec::new();
        for &start in &starts[first..] {
            if start as usize >= end {
                break;
            }
            match decode_one(code, start as usize) {
                Ok((op, _)) => view.push(op.mnemonic()),
                Err(_) => return None,
            }
        }
        (!view.is_empty()).then_some(view)
    }
}

const MOV_FAMILY: [Mnemonic; 5] = [
    Mnemonic::Mov,
    Mnemonic::Movi,
    Mnemonic::Lea,
    Mnemonic::Load,
    Mnemonic::Store,
];

/// Classifies one shared substring. The bool is the undecodable flag:
/// true when no occurrence offered a decodable instruction view and the
/// substring fell through to `potential_signature`.
pub fn classify_subsequence(s: &SharedSubstring, ctx: &ClassifyContext) -> (SubseqCategory, bool) {
    // All-nop bytes form a sled regardless of context.
    if s.bytes.iter().all(|&b| b == Mnemonic::Nop.opcode()) {
        return (SubseqCategory::NopSled, false);
    }

    // The instruction view of the first occurrence that decodes.
    let view = s
        .occurrences
        .iter()
        .find_map(|o| ctx.instruction_view(o.member, o.offset, s.len()));

    if let Some(view) = &view {
        let has_push_then_call = view
            .iter()
            .position(|&m| m == Mnemonic::Call)
            .is_some_and(|call_at| view[..call_at].contains(&Mnemonic::Push));
        if has_push_then_call {
            return (SubseqCategory::CallSequence, false);
        }
        let mov_like = view.iter().filter(|m| MOV_FAMILY.contains(m)).count();
        if mov_like * 5 >= view.len() * 4 {
            return (SubseqCategory::MovSequence, false);
        }
    }

    let overlaps_start_code = s.occurrences.iter().any(|o| {
        ctx.start_code_spans[o.member].as_ref().is_some_and(|span| {
            let end = o.offset + s.len();
            (o.offset as u32) < span.end && span.start < end as u32
        })
    });
    if overlaps_start_code {
        return (SubseqCategory::StartCode, false);
    }

    (SubseqCategory::PotentialSignature, view.is_none())
}

/// A byte signature extracted from a subset of the population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub bytes: Vec<u8>,
    /// The members it was extracted from; it occurs in every one.
    pub origin: Vec<usize>,
}

/// The longest substring of length >= min_len common to every member of
/// the subset; among equal lengths, potential-signature material is
/// preferred over sleds, call/mov boilerplate and start code. None when
/// nothing qualifies.
pub fn extract_signature(
    images: &[ByteImage],
    min_len: usize,
) -> Result<Option<Signature>, SignatureError> {
    let ctx = ClassifyContext::from_images(images);
    extract_signature_with_context(images, min_len, &ctx)
}

pub fn extract_signature_with_context(
    images: &[ByteImage],
    min_len: usize,
    ctx: &ClassifyContext,
) -> Result<Option<Signature>, SignatureError> {
    if images.len() < 2 {
        return Err(SignatureError::PopulationTooSmall {
            k: 2,
            population: images.len(),
        });
    }
    let subs = shared_substrings(images, min_len, images.len())?;
    let best = subs
        .iter()
        .map(|s| {
            let (category, _) = classify_subsequence(s, ctx);
            let preferred = category == SubseqCategory::PotentialSignature;
            (s, preferred)
        })
        .min_by(|(a, pa), (b, pb)| {
            b.len()
                .cmp(&a.len())
                .then_with(|| pb.cmp(pa))
                .then_with(|| a.bytes.cmp(&b.bytes))
        });
    Ok(best.map(|(s, _)| Signature {
        bytes: s.bytes.clone(),
        origin: (0..images.len()).collect(),
    }))
}

/// Sequence-based matching: true iff the signature occurs contiguously
/// anywhere in the image's scannable bytes.
pub fn match_signature(sig: &Signature, img: &ByteImage) -> bool {
    assert!(!sig.bytes.is_empty());
    let hay = img.scan_bytes();
    if hay.len() < sig.bytes.len() {
        return false;
    }
    hay.windows(sig.bytes.len()).any(|w| w == sig.bytes)
}

/// One sample-extract-scan round of the evasion experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvasionTrial {
    pub sampled: Vec<usize>,
    pub signature_len: Option<usize>,
    pub heldout_matches: usize,
    pub heldout_size: usize,
    pub benign_matches: usize,
    pub benign_size: usize,
}

impl EvasionTrial {
    /// Matches among held-out members; None when no signature existed.
    pub fn match_rate(&self) -> Option<f64> {
        self.signature_len
            .map(|_| self.heldout_matches as f64 / self.heldout_size as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvasionReport {
    pub k: usize,
    pub min_len: usize,
    pub seed: u64,
    pub trials: Vec<EvasionTrial>,
}

impl EvasionReport {
    /// Mean held-out match rate; trials without an extractable
    /// signature match nothing and count as 0.
    pub fn mean_match_rate(&self) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .trials
            .iter()
            .map(|t| t.match_rate().unwrap_or(0.0))
            .sum();
        sum / self.trials.len() as f64
    }

    /// Mean over only the trials that produced a signature.
    pub fn mean_match_rate_signature_only(&self) -> Option<f64> {
        let rates: Vec<f64> = self.trials.iter().filter_map(|t| t.match_rate()).collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    pub fn no_signature_count(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.signature_len.is_none())
            .count()
    }

    /// False positives against the benign pool over all signature-bearing
    /// trials.
    pub fn benign_fp_rate(&self) -> f64 {
        let mut hits = 0usize;
        let mut total = 0usize;
        for t in &self.trials {
            if t.signature_len.is_some() {
                hits += t.benign_matches;
                total += t.benign_size;
            }
        }
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

/// Runs `trials` rounds: sample `k` members, extract a signature from
/// them, scan the held-out members and the benign pool. Deterministic in
/// `seed`; trials run in parallel.
pub fn evasion_experiment(
    population: &[ByteImage],
    benign: &[ByteImage],
    k: usize,
    min_len: usize,
    trials: usize,
    seed: u64,
) -> Result<EvasionReport, SignatureError> {
    if population.is_empty() {
        return Err(SignatureError::EmptyPopulation);
    }
    if k < 2 || k >= population.len() {
        return Err(SignatureError::PopulationTooSmall {
            k,
            population: population.len(),
        });
    }
    if min_len == 0 {
        return Err(SignatureError::BadMinLen);
    }

    let outcomes = exec::map_range(trials, |trial| {
        let mut rng = Rng::derive(seed, "evasion", trial as u64);
        let mut indices: Vec<usize> = (0..population.len()).collect();
        rng.shuffle(&mut indices);
        let mut sampled = indices[..k].to_vec();
        sampled.sort_unstable();
        let heldout: Vec<usize> = indices[k..].to_vec();

        let subset: Vec<ByteImage> = sampled.iter().map(|&i| population[i].clone()).collect();
        let signature = extract_signature(&subset, min_len)?;
        let (heldout_matches, benign_matches) = match &signature {
            Some(sig) => (
                heldout
                    .iter()
                    .filter(|&&i| match_signature(sig, &population[i]))
                    .count(),
                benign
                    .iter()
                    .filter(|img| match_signature(sig, img))
                    .count(),
            ),
            None => (0, 0),
        };
        Ok(EvasionTrial {
            sampled,
            signature_len: signature.map(|s| s.bytes.len()),
            heldout_matches,
            heldout_size: heldout.len(),
            benign_matches,
            benign_size: benign.len(),
        })
    });

    let trials = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(EvasionReport {
        k,
        min_len,
        seed,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{encode, parse_assembly};
    use std::collections::BTreeSet;

    fn img(src: &str) -> ByteImage {
        encode(&parse_assembly(src).unwrap()).unwrap()
    }

    fn raw_images(docs: &[&[u8]]) -> Vec<ByteImage> {
        docs.iter()
            .map(|d| ByteImage {
                bytes: d.to_vec(),
                regions: vec![
                    crate::isa::Region {
                        kind: RegionKind::Code,
                        offset: 0,
                        len: d.len() as u32,
                    },
                    crate::isa::Region {
                        kind: RegionKind::Data,
                        offset: d.len() as u32,
                        len: 0,
                    },
                ],
                entry: 0,
            })
            .collect()
    }

    #[test]
    fn identical_images_share_the_whole_region() {
        let a = img("fn main {\ne:\n movi r1, 7\n out r1\n halt\n}\n");
        let subs = shared_substrings(&[a.clone(), a.clone()], 1, 2).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].bytes, a.scan_bytes().to_vec());
        assert_eq!(subs[0].support, vec![0, 1]);
    }

    #[test]
    fn threshold_boundary_matches_spec_example() {
        let images = raw_images(&[b"AAAAABBBBBC", b"XAAAAABBBBB"]);
        let subs = shared_substrings(&images, 10, 2).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].bytes, b"AAAAABBBBB".to_vec());
    }

    #[test]
    fn quorum_bounds_are_enforced() {
        let images = raw_images(&[b"AAAA", b"AAAA"]);
        assert!(matches!(
            shared_substrings(&images, 1, 3),
            Err(SignatureError::BadQuorum { .. })
        ));
        assert!(matches!(
            shared_substrings(&images, 0, 2),
            Err(SignatureError::BadMinLen)
        ));
    }

    #[test]
    fn agrees_with_naive_oracle_on_planted_docs() {
        // Random byte soup with planted shared chunks across subsets.
        let mut rng = Rng::derive(77, "planted", 0);
        let chunk_a: Vec<u8> = (0..24).map(|_| rng.next_u32() as u8).collect();
        let chunk_b: Vec<u8> = (0..15).map(|_| rng.next_u32() as u8).collect();
        let mut docs: Vec<Vec<u8>> = Vec::new();
        for d in 0..5 {
            let mut doc: Vec<u8> = (0..300).map(|_| rng.next_u32() as u8).collect();
            if d != 2 {
                let at = 37 + d * 11;
                doc[at..at + chunk_a.len()].copy_from_slice(&chunk_a);
            }
            if d % 2 == 0 {
                let at = 200 + d * 7;
                doc[at..at + chunk_b.len()].copy_from_slice(&chunk_b);
            }
            docs.push(doc);
        }
        let refs: Vec<&[u8]> = docs.iter().map(|d| d.as_slice()).collect();
        for quorum in 2..=5 {
            let fast = shared_substrings_bytes(&refs, 8, quorum).unwrap();
            let naive = shared_substrings_naive(&refs, 8, quorum);
            assert_eq!(fast, naive, "quorum {quorum}");
        }
    }

    #[test]
    fn agrees_with_naive_oracle_on_periodic_content() {
        // Periodic strings stress the interval traversal: occurrences
        // overlap themselves and nest deeply.
        let docs: Vec<Vec<u8>> = vec![
            b"ABABABABABABABABABAB".to_vec(),
            b"XXABABABABABABABYY".to_vec(),
            b"ABBAABBAABBAABBA".to_vec(),
            b"BABABABABABA".to_vec(),
        ];
        let refs: Vec<&[u8]> = docs.iter().map(|d| d.as_slice()).collect();
        for min_len in [2, 4, 7] {
            for quorum in 2..=4 {
                let fast = shared_substrings_bytes(&refs, min_len, quorum).unwrap();
                let naive = shared_substrings_naive(&refs, min_len, quorum);
                assert_eq!(fast, naive, "min_len {min_len} quorum {quorum}");
            }
        }
    }

    #[test]
    fn agrees_with_naive_oracle_on_many_identical_documents() {
        let mut rng = Rng::derive(4, "identical", 0);
        let doc: Vec<u8> = (0..600).map(|_| rng.next_u32() as u8).collect();
        let docs: Vec<Vec<u8>> = (0..8).map(|_| doc.clone()).collect();
        let refs: Vec<&[u8]> = docs.iter().map(|d| d.as_slice()).collect();
        for quorum in [2, 5, 8] {
            let fast = shared_substrings_bytes(&refs, 10, quorum).unwrap();
            assert_eq!(fast.len(), 1, "quorum {quorum}");
            assert_eq!(fast[0].bytes, doc);
            assert_eq!(fast[0].support.len(), 8);
        }
    }

    #[test]
    fn agrees_with_naive_oracle_on_nop_sled_content() {
        // Long zero runs of different lengths, the alignment-sled shape.
        let docs: Vec<Vec<u8>> = vec![
            [vec![0u8; 40], b"AAA".to_vec(), vec![0u8; 12]].concat(),
            [b"B".to_vec(), vec![0u8; 25], b"AAA".to_vec()].concat(),
            [vec![0u8; 31], b"C".to_vec(), vec![0u8; 18]].concat(),
        ];
        let refs: Vec<&[u8]> = docs.iter().map(|d| d.as_slice()).collect();
        for quorum in 2..=3 {
            let fast = shared_substrings_bytes(&refs, 3, quorum).unwrap();
            let naive = shared_substrings_naive(&refs, 3, quorum);
            assert_eq!(fast, naive, "quorum {quorum}");
        }
    }

    #[test]
    fn quorum_counts_never_increase() {
        let mut rng = Rng::derive(5, "monotone", 0);
        let base: Vec<u8> = (0..400).map(|_| rng.next_u32() as u8).collect();
        let docs: Vec<Vec<u8>> = (0..5)
            .map(|_| {
                let mut d = base.clone();
                // Perturb a few random positions.
                for _ in 0..40 {
                    let at = rng.gen_range(d.len());
                    d[at] = rng.next_u32() as u8;
                }
                d
            })
            .collect();
        let refs: Vec<&[u8]> = docs.iter().map(|d| d.as_slice()).collect();
        let counts: Vec<usize> = (2..=5)
            .map(|q| shared_substrings_bytes(&refs, 10, q).unwrap().len())
            .collect();
        for w in counts.windows(2) {
            assert!(w[0] >= w[1], "counts {counts:?} not monotone");
        }
    }

    #[test]
    fn length_histogram_totals() {
        assert!(length_histogram(&[]).is_empty());
        let subs = vec![
            SharedSubstring {
                bytes: vec![0; 12],
                support: vec![0, 1],
                occurrences: vec![],
            },
            SharedSubstring {
                bytes: vec![1; 12],
                support: vec![0, 1],
                occurrences: vec![],
            },
            SharedSubstring {
                bytes: vec![2; 30],
                support: vec![0, 2],
                occurrences: vec![],
            },
        ];
        let h = length_histogram(&subs);
        assert_eq!(h[&12], 2);
        assert_eq!(h[&30], 1);
        assert_eq!(h.values().sum::<u64>() as usize, subs.len());
    }

    #[test]
    fn nop_sled_classification() {
        let images = raw_images(&[&[0u8; 16], &[0u8; 16]]);
        let ctx = ClassifyContext::from_images(&images);
        let sub = SharedSubstring {
            bytes: vec![0; 12],
            support: vec![0, 1],
            occurrences: vec![Occurrence {
                member: 0,
                offset: 0,
            }],
        };
        assert_eq!(
            classify_subsequence(&sub, &ctx),
            (SubseqCategory::NopSled, false)
        );
    }

    #[test]
    fn call_and_mov_sequences_classify_by_decoded_view() {
        let a = img(
            "entry main\nfn callee {\nc:\n ret\n}\nfn main {\ne:\n movi r1, 5\n push r1\n call callee\n pop r1\n halt\n}\n",
        );
        // Locate the push..call span by decoding.
        let starts = a.instruction_starts().unwrap();
        let mnems: Vec<Mnemonic> = starts
            .iter()
            .map(|&s| {
                crate::isa::decode_one(a.code(), s as usize)
                    .unwrap()
                    .0
                    .mnemonic()
            })
            .collect();
        let push_idx = mnems.iter().position(|&m| m == Mnemonic::Push).unwrap();
        let pop_idx = mnems.iter().position(|&m| m == Mnemonic::Pop).unwrap();
        let push_off = starts[push_idx] as usize;
        let span_len = starts[pop_idx] as usize - push_off;
        let ctx = ClassifyContext::from_images(std::slice::from_ref(&a));
        let sub = SharedSubstring {
            bytes: a.scan_bytes()[push_off..push_off + span_len].to_vec(),
            support: vec![0],
            occurrences: vec![Occurrence {
                member: 0,
                offset: push_off,
            }],
        };
        assert_eq!(
            classify_subsequence(&sub, &ctx).0,
            SubseqCategory::CallSequence
        );

        let b = img(
            "fn main {\ne:\n movi r1, 1\n mov r2, r1\n load r3, [r1]\n store r3, [r1]\n halt\n}\n",
        );
        let ctx = ClassifyContext::from_images(std::slice::from_ref(&b));
        let len = b.code().len() - 1;
        let sub = SharedSubstring {
            bytes: b.scan_bytes()[..len].to_vec(),
            support: vec![0],
            occurrences: vec![Occurrence {
                member: 0,
                offset: 0,
            }],
        };
        assert_eq!(
            classify_subsequence(&sub, &ctx).0,
            SubseqCategory::MovSequence
        );
    }

    #[test]
    fn start_code_overlap_wins_over_fallthrough() {
        let images = raw_images(&[b"\x01\x01\x02\x03\x04\x05\x06\x07"]);
        let mut ctx = ClassifyContext::from_images(&images);
        ctx.start_code_spans[0] = Some(0..4);
        // Bytes that decode to mov-family would classify as MovSequence;
        // use a non-decodable occurrence to reach the start-code rule.
        ctx.instr_starts[0].clear();
        let sub = SharedSubstring {
            bytes: images[0].scan_bytes()[2..6].to_vec(),
            support: vec![0],
            occurrences: vec![Occurrence {
                member: 0,
                offset: 2,
            }],
        };
        assert_eq!(
            classify_subsequence(&sub, &ctx),
            (SubseqCategory::StartCode, false)
        );
    }

    #[test]
    fn undecodable_occurrence_is_flagged_potential() {
        let images = raw_images(&[b"\xAA\xBB\xCC\xDD\xEE\xFF\x11\x22"]);
        let mut ctx = ClassifyContext::from_images(&images);
        ctx.instr_starts[0].clear();
        let sub = SharedSubstring {
            bytes: images[0].scan_bytes()[1..5].to_vec(),
            support: vec![0],
            occurrences: vec![Occurrence {
                member: 0,
                offset: 1,
            }],
        };
        assert_eq!(
            classify_subsequence(&sub, &ctx),
            (SubseqCategory::PotentialSignature, true)
        );
    }

    #[test]
    fn category_partition_covers_population_substrings() {
        let imgs: Vec<ByteImage> = crate::corpus::load_corpus()
            .iter()
            .take(3)
            .map(|(_, p)| encode(p).unwrap())
            .collect();
        let subs = shared_substrings(&imgs, 4, 2).unwrap();
        let ctx = ClassifyContext::from_images(&imgs);
        let mut totals: BTreeMap<SubseqCategory, usize> = BTreeMap::new();
        for s in &subs {
            *totals.entry(classify_subsequence(s, &ctx).0).or_insert(0) += 1;
        }
        assert_eq!(totals.values().sum::<usize>(), subs.len());
    }

    #[test]
    fn signature_extraction_and_matching_closure() {
        let a = img("fn main {\ne:\n movi r1, 7\n out r1\n halt\n}\n");
        // Identical pair: signature is the whole region and matches both.
        let sig = extract_signature(&[a.clone(), a.clone()], 1)
            .unwrap()
            .unwrap();
        assert_eq!(sig.bytes, a.scan_bytes().to_vec());
        assert!(match_signature(&sig, &a));

        // No 10-byte run in common: no signature.
        let images = raw_images(&[b"AAAABBBBCCCC", b"DDDDEEEEFFFF"]);
        assert_eq!(extract_signature(&images, 10).unwrap(), None);
    }

    #[test]
    fn extraction_matches_dp_longest_common_substring_oracle() {
        // Independent oracle: classic dynamic-programming LCS over the
        // first pair, then filter candidates by occurrence in the rest.
        fn dp_lcs_all(docs: &[&[u8]], min_len: usize) -> Option<usize> {
            // Maximal equal runs between the first pair, then every
            // substring of every run checked against all documents.
            let (a, b) = (docs[0], docs[1]);
            let mut candidates: BTreeSet<Vec<u8>> = BTreeSet::new();
            let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
            for i in 1..=a.len() {
                for j in 1..=b.len() {
                    if a[i - 1] == b[j - 1] {
                        dp[i][j] = dp[i - 1][j - 1] + 1;
                        let run_ends = i == a.len() || j == b.len() || a[i] != b[j];
                        if dp[i][j] >= min_len && run_ends {
                            let run = &a[i - dp[i][j]..i];
                            for start in 0..run.len() {
                                for end in start + min_len..=run.len() {
                                    candidates.insert(run[start..end].to_vec());
                                }
                            }
                        }
                    }
                }
            }
            candidates
                .iter()
                .filter(|cand| {
                    docs.iter().all(|d| {
                        d.len() >= cand.len() && d.windows(cand.len()).any(|w| w == cand.as_slice())
                    })
                })
                .map(|c| c.len())
                .max()
        }

        let mut rng = Rng::derive(21, "dp-oracle", 0);
        for round in 0..10 {
            let chunk: Vec<u8> = (0..12 + rng.gen_range(20))
                .map(|_| rng.next_u32() as u8)
                .collect();
            let docs: Vec<Vec<u8>> = (0..3)
                .map(|_| {
                    let mut d: Vec<u8> = (0..200).map(|_| rng.next_u32() as u8).collect();
                    let at = rng.gen_range(d.len() - chunk.len());
                    d[at..at + chunk.len()].copy_from_slice(&chunk);
                    d
                })
                .collect();
            let images = raw_images(&docs.iter().map(|d| d.as_slice()).collect::<Vec<_>>());
            let refs: Vec<&[u8]> = docs.iter().map(|d| d.as_slice()).collect();
            let extracted = extract_signature(&images, 8).unwrap();
            let oracle = dp_lcs_all(&refs, 8);
            assert_eq!(
                extracted.as_ref().map(|s| s.bytes.len()),
                oracle,
                "round {round}: extraction length disagrees with the DP oracle"
            );
            if let Some(sig) = extracted {
                for img in &images {
                    assert!(match_signature(&sig, img), "round {round}: closure broken");
                }
            }
        }
    }

    #[test]
    fn one_byte_flip_defeats_exact_matching() {
        let a = img("fn main {\ne:\n movi r1, 7\n movi r2, 9\n out r1\n halt\n}\n");
        let sig = extract_signature(&[a.clone(), a.clone()], 4)
            .unwrap()
            .unwrap();
        let mut flipped = a.clone();
        // Flip one byte at the (single) match site.
        let pos = sig.bytes.len() / 2;
        flipped.bytes[pos] ^= 0xFF;
        assert!(match_signature(&sig, &a));
        assert!(!match_signature(&sig, &flipped));
    }

    #[test]
    fn random_signature_does_not_match_unrelated_images() {
        let mut rng = Rng::derive(3, "fp", 0);
        let sig = Signature {
            bytes: (0..25).map(|_| rng.next_u32() as u8).collect(),
            origin: vec![],
        };
        for (_, p) in crate::corpus::load_corpus() {
            let image = encode(&p).unwrap();
            // Cross-checked by a naive scan.
            let naive = image
                .scan_bytes()
                .windows(sig.bytes.len())
                .any(|w| w == sig.bytes);
            assert_eq!(match_signature(&sig, &image), naive);
            assert!(!naive, "25 random bytes should not occur");
        }
    }

    #[test]
    fn evasion_on_identical_population_matches_everything() {
        let a = img("fn main {\ne:\n movi r1, 7\n out r1\n halt\n}\n");
        let population: Vec<ByteImage> = (0..6).map(|_| a.clone()).collect();
        let report = evasion_experiment(&population, &[], 2, 4, 5, 1).unwrap();
        assert_eq!(report.mean_match_rate(), 1.0);
        assert_eq!(report.no_signature_count(), 0);
    }

    #[test]
    fn evasion_records_no_signature_trials() {
        // Pairwise-disjoint images: no signature can be extracted.
        let images = raw_images(&[b"AAAAAAAAAAAA", b"BBBBBBBBBBBB", b"CCCCCCCCCCCC"]);
        let report = evasion_experiment(&images, &[], 2, 4, 4, 9).unwrap();
        assert_eq!(report.no_signature_count(), report.trials.len());
        assert_eq!(report.mean_match_rate(), 0.0);
        assert_eq!(report.mean_match_rate_signature_only(), None);
    }

    #[test]
    fn evasion_rejects_bad_parameters() {
        let images = raw_images(&[b"AAAA", b"BBBB"]);
        assert!(matches!(
            evasion_experiment(&images, &[], 2, 4, 1, 0),
            Err(SignatureError::PopulationTooSmall { .. })
        ));
    }

    #[test]
    fn evasion_is_deterministic() {
        let imgs: Vec<ByteImage> = (0..5)
            .map(|i| {
                let p = crate::testgen::random_program(i);
                encode(&p).unwrap()
            })
            .collect();
        let a = evasion_experiment(&imgs, &[], 2, 6, 8, 42).unwrap();
        let b = evasion_experiment(&imgs, &[], 2, 6, 8, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn region_tags_follow_layout() {
        let a = img("fn main {\ne:\n movi r1, msg\n load r2, [r1]\n out r2\n halt\n}\ndata msg = hex\"00112233\"\n");
        let code_len = a.code().len();
        assert_eq!(region_tag(&a, 0, 4), RegionTag::Code);
        assert_eq!(region_tag(&a, code_len, 2), RegionTag::Data);
        assert_eq!(region_tag(&a, code_len - 2, 4), RegionTag::Spanning);
    }
}
