//! The full experiment driver: for every corpus program it generates a
//! variant population, runs the complete analysis battery, and runs the
//! signature-evasion experiment with every other program's variants as
//! the benign pool. The whole output tree is a pure function of
//! (corpus, seed, config).

use super::analyze::{
    canon_csv, evasion_csv, histogram_csv, length_histogram_csv, subseq_report, substring_dump,
};
use super::{sha256_hex, write_population, HarnessError, Variant};
use crate::diversify::DiversityConfig;
use crate::isa::{parse_assembly, ByteImage, Program};
use crate::metrics::{pairwise_matrix, MetricKind};
use crate::signatures::evasion_experiment;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Experiment parameters; the defaults mirror the population protocol
/// used throughout the suite (10 variants, signature floor 25 bytes,
/// 20 trials of pairs).
#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub variants: usize,
    pub min_len: usize,
    pub quorums: Vec<usize>,
    pub evasion_k: usize,
    pub evasion_min_len: usize,
    pub evasion_trials: usize,
    pub ngrams: Vec<usize>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            variants: 10,
            min_len: 10,
            quorums: vec![2, 3, 4, 5],
            evasion_k: 2,
            evasion_min_len: 25,
            evasion_trials: 20,
            ngrams: vec![1, 2, 3, 4, 5],
        }
    }
}

/// What a finished experiment produced: parameters, CSV paths, and the
/// headline statistics (all recomputable from the CSV payloads).
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: String,
    pub parameters: Vec<(String, String)>,
    pub csv_paths: Vec<PathBuf>,
    pub summary: Vec<(String, String)>,
}

struct ProgramRun {
    name: String,
    program: Program,
    variants: Vec<Variant>,
}

/// Runs everything over a corpus directory of `.tasm` files.
pub fn run_full_experiment(
    corpus_dir: &Path,
    out_dir: &Path,
    cfg: &DiversityConfig,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport, HarnessError> {
    let mut sources: Vec<PathBuf> = std::fs::read_dir(corpus_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "tasm"))
        .collect();
    sources.sort();
    if sources.len() < 2 {
        return Err(HarnessError::Manifest(format!(
            "experiment needs a corpus of at least 2 programs, found {}",
            sources.len()
        )));
    }

    std::fs::create_dir_all(out_dir)?;
    let mut csv_paths = Vec::new();
    let mut runs: Vec<ProgramRun> = Vec::new();

    // Populations first; each program's config derives from the corpus
    // seed and the program name so reordering corpus files cannot shift
    // streams.
    for path in &sources {
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(path)?;
        let program = parse_assembly(&text)?;
        let prog_cfg = cfg
            .clone()
            .with_seed(crate::rng::Rng::derive(cfg.seed, "program", hash_name(&name)).next_u64());
        let prog_dir = out_dir.join(&name);
        std::fs::create_dir_all(&prog_dir)?;
        write_population(&program, &name, &prog_cfg, opts.variants, &prog_dir)?;
        csv_paths.push(prog_dir.join("manifest.txt"));
        let variants = super::generate_variants(&program, &prog_cfg, opts.variants)?;
        runs.push(ProgramRun {
            name,
            program,
            variants,
        });
    }

    let mut summary_rows: Vec<String> = Vec::new();
    for (ri, run) in runs.iter().enumerate() {
        let analysis_dir = out_dir.join(&run.name).join("analysis");
        std::fs::create_dir_all(&analysis_dir)?;
        let images: Vec<ByteImage> = run.variants.iter().map(|v| v.image.clone()).collect();
        let labeled: Vec<(String, Program)> = run
            .variants
            .iter()
            .map(|v| (format!("v{:03}", v.index), v.program.clone()))
            .collect();

        // Shared substrings per quorum.
        let mut quorum_counts = Vec::new();
        for &q in opts.quorums.iter().filter(|&&q| q <= images.len()) {
            let report = subseq_report(&images, opts.min_len, q)?;
            let path = analysis_dir.join(format!("subseq_q{q}.csv"));
            std::fs::write(&path, length_histogram_csv(&report.substrings))?;
            csv_paths.push(path);
            if q == 2 {
                let path = analysis_dir.join("substrings_q2.csv");
                std::fs::write(&path, substring_dump(&images, &report.substrings))?;
                csv_paths.push(path);
            }
            quorum_counts.push((q, report.substrings.len()));
        }

        // Histogram tables and similarity matrices.
        let path = analysis_dir.join("mnemonics.csv");
        std::fs::write(&path, histogram_csv(&labeled, 1)?)?;
        csv_paths.push(path);

        let mut within_means: Vec<(String, f64)> = Vec::new();
        let all: Vec<usize> = (0..labeled.len()).collect();
        for &n in &opts.ngrams {
            let m = pairwise_matrix(&labeled, MetricKind::S, n)?;
            let path = analysis_dir.join(format!("s_n{n}.csv"));
            std::fs::write(&path, m.to_csv())?;
            csv_paths.push(path);
            if let Some(mean) = m.within_group_mean(&all) {
                within_means.push((format!("s_n{n}"), mean));
            }
        }
        for metric in [
            MetricKind::JaccardPairs,
            MetricKind::JaccardWeighted,
            MetricKind::Cfg,
        ] {
            let m = pairwise_matrix(&labeled, metric, 1)?;
            let path = analysis_dir.join(format!("{}.csv", metric.name()));
            std::fs::write(&path, m.to_csv())?;
            csv_paths.push(path);
            if let Some(mean) = m.within_group_mean(&all) {
                within_means.push((metric.name().to_string(), mean));
            }
            if let Some(min) = m.within_group_min(&all) {
                within_means.push((format!("{}_min", metric.name()), min));
            }
        }

        // Canonical digests of the population.
        let path = analysis_dir.join("canon.csv");
        std::fs::write(&path, canon_csv(&labeled))?;
        csv_paths.push(path);

        // Evasion with all other programs' variants as the benign pool.
        let benign: Vec<ByteImage> = runs
            .iter()
            .enumerate()
            .filter(|(rj, _)| *rj != ri)
            .flat_map(|(_, r)| r.variants.iter().map(|v| v.image.clone()))
            .collect();
        let evasion = evasion_experiment(
            &images,
            &benign,
            opts.evasion_k,
            opts.evasion_min_len,
            opts.evasion_trials,
            hash_name(&run.name),
        )?;
        let path = analysis_dir.join("evasion.csv");
        std::fs::write(&path, evasion_csv(&evasion))?;
        csv_paths.push(path);

        let mut row = format!(
            "{},{},{}",
            run.name,
            run.program.instruction_count(),
            run.variants.len()
        );
        for (q, count) in &quorum_counts {
            let _ = write!(row, ",q{q}={count}");
        }
        for (k, v) in &within_means {
            let _ = write!(row, ",{k}={v:.4}");
        }
        let _ = write!(
            row,
            ",evasion_mean={:.4},evasion_fp={:.4},no_signature={}",
            evasion.mean_match_rate(),
            evasion.benign_fp_rate(),
            evasion.no_signature_count()
        );
        summary_rows.push(row);
    }

    // Cross-program similarity over the combined population.
    let combined: Vec<(String, Program)> = runs
        .iter()
        .flat_map(|r| {
            r.variants
                .iter()
                .map(|v| (format!("{}.v{:03}", r.name, v.index), v.program.clone()))
        })
        .collect();
    let groups: Vec<(String, Vec<usize>)> = {
        let mut at = 0usize;
        runs.iter()
            .map(|r| {
                let idx: Vec<usize> = (at..at + r.variants.len()).collect();
                at += r.variants.len();
                (r.name.clone(), idx)
            })
            .collect()
    };
    let mut groups_csv = String::from("group_a,group_b,metric,n,aggregation,value\n");
    for metric in MetricKind::ALL {
        let m = pairwise_matrix(&combined, metric, 1)?;
        let path = out_dir.join(format!("combined_{}.csv", metric.name()));
        std::fs::write(&path, m.to_csv())?;
        csv_paths.push(path);
        for (i, (ga, ia)) in groups.iter().enumerate() {
            if let Some(mean) = m.within_group_mean(ia) {
                let _ = writeln!(groups_csv, "{ga},{ga},{},1,mean,{mean:.4}", metric.name());
            }
            if let Some(min) = m.within_group_min(&ia[..ia.len().min(5)]) {
                let _ = writeln!(groups_csv, "{ga},{ga},{},1,min5,{min:.4}", metric.name());
            }
            for (gb, ib) in &groups[i + 1..] {
                if let Some(mean) = m.cross_group_mean(ia, ib) {
                    let _ = writeln!(groups_csv, "{ga},{gb},{},1,mean,{mean:.4}", metric.name());
                }
            }
        }
    }
    let groups_path = out_dir.join("groups.csv");
    std::fs::write(&groups_path, &groups_csv)?;
    csv_paths.push(groups_path);

    let summary = format!(
        "program,instructions,variants,details\n{}\n",
        summary_rows.join("\n")
    );
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, &summary)?;
    csv_paths.push(summary_path);

    Ok(ExperimentReport {
        kind: "full".into(),
        parameters: vec![
            ("seed".into(), cfg.seed.to_string()),
            ("variants".into(), opts.variants.to_string()),
            ("min_len".into(), opts.min_len.to_string()),
            ("evasion_k".into(), opts.evasion_k.to_string()),
            ("evasion_min_len".into(), opts.evasion_min_len.to_string()),
            ("evasion_trials".into(), opts.evasion_trials.to_string()),
        ],
        csv_paths,
        summary: vec![("programs".into(), runs.len().to_string())],
    })
}

fn hash_name(name: &str) -> u64 {
    let digest = sha256_hex(name.as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// Byte-compare two output trees; returns the first differing relative
/// path, if any.
pub fn compare_trees(a: &Path, b: &Path) -> Result<Option<PathBuf>, HarnessError> {
    fn walk(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, base, out)?;
            } else {
                out.push(path.strip_prefix(base).unwrap().to_path_buf());
            }
        }
        Ok(())
    }
    let mut files_a = Vec::new();
    let mut files_b = Vec::new();
    walk(a, a, &mut files_a)?;
    walk(b, b, &mut files_b)?;
    files_a.sort();
    files_b.sort();
    if files_a != files_b {
        let only: Vec<_> = files_a
            .iter()
            .filter(|f| !files_b.contains(f))
            .chain(files_b.iter().filter(|f| !files_a.contains(f)))
            .collect();
        return Ok(only.first().map(|p| (*p).clone()));
    }
    for rel in &files_a {
        if std::fs::read(a.join(rel))? != std::fs::read(b.join(rel))? {
            return Ok(Some(rel.clone()));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_corpus(dir: &Path) {
        // Two tiny programs keep the driver test fast.
        for name in ["fib", "checksum"] {
            std::fs::copy(
                crate::corpus::corpus_dir().join(format!("{name}.tasm")),
                dir.join(format!("{name}.tasm")),
            )
            .unwrap();
        }
    }

    #[test]
    fn driver_emits_the_full_tree() {
        let corpus = tempfile::tempdir().unwrap();
        small_corpus(corpus.path());
        let out = tempfile::tempdir().unwrap();
        let opts = ExperimentOptions {
            variants: 4,
            evasion_trials: 3,
            ngrams: vec![1, 2],
            ..ExperimentOptions::default()
        };
        let report = run_full_experiment(
            corpus.path(),
            out.path(),
            &DiversityConfig::default().with_seed(5),
            &opts,
        )
        .unwrap();
        for rel in [
            "fib/manifest.txt",
            "fib/variants/v000.tbin",
            "fib/analysis/subseq_q2.csv",
            "fib/analysis/s_n1.csv",
            "fib/analysis/jaccard_pairs.csv",
            "fib/analysis/cfg.csv",
            "fib/analysis/canon.csv",
            "fib/analysis/evasion.csv",
            "combined_jaccard_pairs.csv",
            "groups.csv",
            "summary.csv",
        ] {
            assert!(out.path().join(rel).exists(), "missing {rel}");
        }
        assert!(!report.csv_paths.is_empty());
    }

    #[test]
    fn driver_is_deterministic_across_out_dirs() {
        let corpus = tempfile::tempdir().unwrap();
        small_corpus(corpus.path());
        let opts = ExperimentOptions {
            variants: 3,
            evasion_trials: 2,
            ngrams: vec![1],
            quorums: vec![2, 3],
            ..ExperimentOptions::default()
        };
        let cfg = DiversityConfig::default().with_seed(77);
        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        run_full_experiment(corpus.path(), out_a.path(), &cfg, &opts).unwrap();
        run_full_experiment(corpus.path(), out_b.path(), &cfg, &opts).unwrap();
        assert_eq!(compare_trees(out_a.path(), out_b.path()).unwrap(), None);
    }

    #[test]
    fn rejects_single_program_corpora() {
        let corpus = tempfile::tempdir().unwrap();
        std::fs::copy(
            crate::corpus::corpus_dir().join("fib.tasm"),
            corpus.path().join("fib.tasm"),
        )
        .unwrap();
        let out = tempfile::tempdir().unwrap();
        let err = run_full_experiment(
            corpus.path(),
            out.path(),
            &DiversityConfig::default(),
            &ExperimentOptions::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn group_stats_recompute_from_matrix_csv() {
        // The groups.csv numbers must be derivable from the published
        // combined matrix, per the reproducibility contract.
        let corpus = tempfile::tempdir().unwrap();
        small_corpus(corpus.path());
        let out = tempfile::tempdir().unwrap();
        let opts = ExperimentOptions {
            variants: 3,
            evasion_trials: 2,
            ngrams: vec![1],
            ..ExperimentOptions::default()
        };
        run_full_experiment(
            corpus.path(),
            out.path(),
            &DiversityConfig::default().with_seed(9),
            &opts,
        )
        .unwrap();

        let matrix_text =
            std::fs::read_to_string(out.path().join("combined_jaccard_pairs.csv")).unwrap();
        let rows: Vec<Vec<f64>> = matrix_text
            .lines()
            .skip(1)
            .map(|l| {
                l.split(',')
                    .skip(1)
                    .map(|v| v.parse::<f64>().unwrap())
                    .collect()
            })
            .collect();
        // checksum variants occupy rows 0..3, fib rows 3..6 (sorted).
        let within_fib = (rows[3][4] + rows[3][5] + rows[4][5]) / 3.0;
        let groups = std::fs::read_to_string(out.path().join("groups.csv")).unwrap();
        let line = groups
            .lines()
            .find(|l| l.starts_with("fib,fib,jaccard_pairs,1,mean"))
            .unwrap();
        let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(
            (value - within_fib).abs() < 5e-4,
            "groups.csv {value} vs recomputed {within_fib}"
        );
    }
}
