//! CSV renderings of the individual analyses. Every emitter is a pure
//! function of its inputs with stable ordering and fixed float width, so
//! report trees diff cleanly across runs.

use super::HarnessError;
use crate::isa::{ByteImage, Program};
use crate::metrics::mnemonic_histogram;
use crate::signatures::{
    classify_subsequence, length_histogram, region_tag, shared_substrings, ClassifyContext,
    EvasionReport, SharedSubstring,
};
use std::fmt::Write as _;

/// Shared-substring analysis for one quorum.
pub struct SubseqReport {
    pub quorum: usize,
    pub substrings: Vec<SharedSubstring>,
}

pub fn subseq_report(
    images: &[ByteImage],
    min_len: usize,
    quorum: usize,
) -> Result<SubseqReport, HarnessError> {
    Ok(SubseqReport {
        quorum,
        substrings: shared_substrings(images, min_len, quorum)?,
    })
}

/// `length,count` rows, exact lengths ascending.
pub fn length_histogram_csv(substrings: &[SharedSubstring]) -> String {
    let mut out = String::from("length,count\n");
    for (len, count) in length_histogram(substrings) {
        let _ = writeln!(out, "{len},{count}");
    }
    out
}

/// Hex dump of substrings with support, category, and region notes.
pub fn substring_dump(images: &[ByteImage], substrings: &[SharedSubstring]) -> String {
    let ctx = ClassifyContext::from_images(images);
    let mut out = String::from("length,support,category,regions,hex\n");
    for s in substrings {
        let (category, flagged) = classify_subsequence(s, &ctx);
        let support: Vec<String> = s.support.iter().map(|m| m.to_string()).collect();
        let mut regions: Vec<&str> = s
            .occurrences
            .iter()
            .map(|o| region_tag(&images[o.member], o.offset, s.len()).name())
            .collect();
        regions.sort_unstable();
        regions.dedup();
        let hex: String = s.bytes.iter().map(|b| format!("{b:02X}")).collect();
        let category = if flagged {
            format!("{}!", category.name())
        } else {
            category.name().to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.len(),
            support.join("|"),
            category,
            regions.join("|"),
            hex
        );
    }
    out
}

/// Per-member n-gram tables: `member,key,count,freq`.
pub fn histogram_csv(population: &[(String, Program)], n: usize) -> Result<String, HarnessError> {
    let mut out = String::from("member,key,count,freq\n");
    for (label, program) in population {
        let h = mnemonic_histogram(program, n)?;
        for (key, count) in h.counts() {
            let rendered: Vec<&str> = key.iter().map(|m| m.name()).collect();
            let _ = writeln!(
                out,
                "{label},{},{count},{:.6}",
                rendered.join(" "),
                h.freq(key).unwrap_or(0.0)
            );
        }
    }
    Ok(out)
}

/// Canonical digest table: `member,digest`.
pub fn canon_csv(population: &[(String, Program)]) -> String {
    let mut out = String::from("member,digest\n");
    for (label, program) in population {
        let _ = writeln!(
            out,
            "{label},{}",
            crate::canon::canonicalize(program).digest_hex()
        );
    }
    out
}

/// Per-trial evasion rows plus a trailing summary block.
pub fn evasion_csv(report: &EvasionReport) -> String {
    let mut out = String::from(
        "trial,sampled,signature_len,heldout_matches,heldout_size,match_rate,benign_matches,benign_size\n",
    );
    for (i, t) in report.trials.iter().enumerate() {
        let sampled: Vec<String> = t.sampled.iter().map(|m| m.to_string()).collect();
        let sig = t
            .signature_len
            .map(|l| l.to_string())
            .unwrap_or_else(|| "none".into());
        let rate = t
            .match_rate()
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "none".into());
        let _ = writeln!(
            out,
            "{i},{},{sig},{},{},{rate},{},{}",
            sampled.join("|"),
            t.heldout_matches,
            t.heldout_size,
            t.benign_matches,
            t.benign_size
        );
    }
    let _ = writeln!(out, "# mean_match_rate={:.4}", report.mean_match_rate());
    let _ = writeln!(
        out,
        "# mean_match_rate_signature_only={}",
        report
            .mean_match_rate_signature_only()
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "none".into())
    );
    let _ = writeln!(out, "# no_signature_trials={}", report.no_signature_count());
    let _ = writeln!(out, "# benign_fp_rate={:.4}", report.benign_fp_rate());
    out
}
