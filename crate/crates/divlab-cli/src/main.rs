//! `divlab` — command-line surface of the diversification laboratory:
//! assemble toy programs, run them, generate diversified populations,
//! and drive the similarity/signature/canonicalization analyses.

use clap::{Args, Parser, Subcommand};
use divlab::diversify::DiversityConfig;
use divlab::harness::{
    self, apply_config_key, canon_csv, evasion_csv, histogram_csv, length_histogram_csv,
    parse_config, subseq_report, substring_dump, ExperimentOptions, HarnessError,
    PopulationManifest,
};
use divlab::isa::{
    self, decode, encode, interpret, parse_assembly, read_tbin, write_tbin, ByteImage, Termination,
    DEFAULT_STEP_LIMIT,
};
use divlab::metrics::{pairwise_matrix, MetricKind};
use divlab::signatures::evasion_experiment;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "divlab",
    about = "Toy-ISA software diversification laboratory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Diversification seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual config overrides, e.g. --set p_nop=0.8 --set enable.data=false.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<DiversityConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
            None => DiversityConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            apply_config_key(&mut cfg, k.trim(), v.trim()).map_err(CliError::Usage)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a .tasm source file into a .tbin image.
    Assemble {
        input: PathBuf,
        /// Output path; defaults to the input with a .tbin extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute a .tbin image and print its trace.
    Run {
        image: PathBuf,
        /// Comma-separated input words for the input port.
        #[arg(long, value_delimiter = ',')]
        inputs: Vec<u32>,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: u64,
    },
    /// Generate a diversified population with a manifest.
    Diversify {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        variants: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run one analysis over existing populations.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Full experiment over a corpus directory.
    Experiment {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        variants: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct PopulationArgs {
    /// Population manifests (manifest.txt files) to analyze.
    manifests: Vec<PathBuf>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Shared-substring length histograms per quorum.
    Subseq {
        #[command(flatten)]
        pop: PopulationArgs,
        #[arg(long, default_value_t = 10)]
        min_len: usize,
        /// Single quorum; sweeps 2..=5 when omitted.
        #[arg(long)]
        quorum: Option<usize>,
    },
    /// Per-member mnemonic/n-gram tables.
    Histogram {
        #[command(flatten)]
        pop: PopulationArgs,
        #[arg(long, default_value_t = 1)]
        ngram: usize,
    },
    /// S-score similarity matrix.
    SMatrix {
        #[command(flatten)]
        pop: PopulationArgs,
        #[arg(long, default_value_t = 1)]
        ngram: usize,
    },
    /// Jaccard similarity matrix.
    Jaccard {
        #[command(flatten)]
        pop: PopulationArgs,
        /// jaccard_pairs (default) or jaccard_weighted.
        #[arg(long, default_value = "jaccard_pairs")]
        metric: String,
    },
    /// CFG structural similarity matrix.
    Cfg {
        #[command(flatten)]
        pop: PopulationArgs,
    },
    /// Canonical digest table.
    Canon {
        #[command(flatten)]
        pop: PopulationArgs,
        /// Also write the canonical stream dump of every member.
        #[arg(long)]
        dump: bool,
    },
    /// Signature evasion experiment over one population.
    Evasion {
        #[command(flatten)]
        pop: PopulationArgs,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 25)]
        min_len: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Parse(#[from] isa::ParseError),
    #[error(transparent)]
    Encode(#[from] isa::EncodeError),
    #[error(transparent)]
    Decode(#[from] isa::DecodeError),
    #[error(transparent)]
    Tbin(#[from] isa::TbinError),
    #[error(transparent)]
    Metrics(#[from] divlab::metrics::MetricsError),
    #[error(transparent)]
    Signature(#[from] divlab::signatures::SignatureError),
    #[error("{0}")]
    Usage(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("divlab: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Assemble { input, output } => {
            let text = std::fs::read_to_string(&input)?;
            let program = parse_assembly(&text)
                .map_err(|e| CliError::Usage(format!("{}:{e}", input.display())))?;
            let image = encode(&program)?;
            let output = output.unwrap_or_else(|| input.with_extension("tbin"));
            write_tbin(&image, &output)?;
            println!(
                "{}: {} instructions, {} code bytes -> {}",
                input.display(),
                program.instruction_count(),
                image.code().len(),
                output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            image,
            inputs,
            step_limit,
        } => {
            let img = read_tbin(&image)?;
            let trace = interpret(&img, &inputs, step_limit);
            for (i, v) in trace.outputs.iter().enumerate() {
                println!("out[{i}] = {v}");
            }
            println!("steps = {}", trace.steps);
            println!("termination = {}", trace.termination.name());
            Ok(match trace.termination {
                Termination::Halted => ExitCode::SUCCESS,
                Termination::StepLimit => ExitCode::from(2),
                Termination::Fault(_) => ExitCode::from(1),
            })
        }
        Command::Diversify {
            input,
            out,
            variants,
            config,
        } => {
            let cfg = config.build()?;
            let text = std::fs::read_to_string(&input)?;
            let program = parse_assembly(&text)?;
            let manifest = harness::write_population(
                &program,
                &input.display().to_string(),
                &cfg,
                variants,
                &out,
            )?;
            println!(
                "wrote {} variants under {} (config digest {})",
                manifest.entries.len(),
                out.display(),
                harness::config_digest(&cfg)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { what } => analyze(what),
        Command::Experiment {
            corpus,
            out,
            variants,
            config,
        } => {
            let cfg = config.build()?;
            let opts = ExperimentOptions {
                variants,
                ..ExperimentOptions::default()
            };
            let report = harness::run_full_experiment(&corpus, &out, &cfg, &opts)?;
            println!(
                "experiment complete: {} report files under {}",
                report.csv_paths.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Loads every manifest and returns labeled images plus group index
/// ranges, in manifest order.
type Population = (Vec<(String, ByteImage)>, Vec<(String, Vec<usize>)>);

fn load_populations(manifests: &[PathBuf]) -> Result<Population, CliError> {
    if manifests.is_empty() {
        return Err(CliError::Usage("at least one manifest is required".into()));
    }
    let mut images = Vec::new();
    let mut groups = Vec::new();
    for path in manifests {
        let (manifest, imgs) = harness::load_population(path)?;
        let group_name = group_label(path, &manifest);
        let start = images.len();
        for (entry, img) in manifest.entries.iter().zip(imgs) {
            images.push((format!("{group_name}.v{:03}", entry.variant), img));
        }
        groups.push((group_name, (start..images.len()).collect()));
    }
    Ok((images, groups))
}

fn group_label(path: &Path, manifest: &PopulationManifest) -> String {
    Path::new(&manifest.source)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn decode_programs(
    images: &[(String, ByteImage)],
) -> Result<Vec<(String, isa::Program)>, CliError> {
    images
        .iter()
        .map(|(l, img)| Ok((l.clone(), decode(img)?)))
        .collect()
}

fn write_matrix_report(
    out: &Path,
    name: &str,
    population: &[(String, isa::Program)],
    groups: &[(String, Vec<usize>)],
    metric: MetricKind,
    n: usize,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let m = pairwise_matrix(population, metric, n)?;
    std::fs::write(out.join(format!("{name}.csv")), m.to_csv())?;
    let mut stats = String::from("group_a,group_b,metric,n,aggregation,value\n");
    use std::fmt::Write as _;
    for (i, (ga, ia)) in groups.iter().enumerate() {
        if let Some(mean) = m.within_group_mean(ia) {
            let _ = writeln!(stats, "{ga},{ga},{},{n},mean,{mean:.4}", metric.name());
        }
        if let Some(min) = m.within_group_min(ia) {
            let _ = writeln!(stats, "{ga},{ga},{},{n},min,{min:.4}", metric.name());
        }
        for (gb, ib) in &groups[i + 1..] {
            if let Some(mean) = m.cross_group_mean(ia, ib) {
                let _ = writeln!(stats, "{ga},{gb},{},{n},mean,{mean:.4}", metric.name());
            }
        }
    }
    std::fs::write(out.join(format!("{name}_groups.csv")), stats)?;
    println!(
        "wrote {name}.csv and {name}_groups.csv under {}",
        out.display()
    );
    Ok(())
}

fn analyze(cmd: AnalyzeCommand) -> Result<ExitCode, CliError> {
    match cmd {
        AnalyzeCommand::Subseq {
            pop,
            min_len,
            quorum,
        } => {
            let (images, _) = load_populations(&pop.manifests)?;
            let imgs: Vec<ByteImage> = images.iter().map(|(_, i)| i.clone()).collect();
            std::fs::create_dir_all(&pop.out)?;
            let quorums: Vec<usize> = match quorum {
                Some(q) => vec![q],
                None => (2..=5.min(imgs.len())).collect(),
            };
            let mut counts = Vec::new();
            for q in quorums {
                let report = subseq_report(&imgs, min_len, q)?;
                std::fs::write(
                    pop.out.join(format!("subseq_q{q}.csv")),
                    length_histogram_csv(&report.substrings),
                )?;
                std::fs::write(
                    pop.out.join(format!("substrings_q{q}.csv")),
                    substring_dump(&imgs, &report.substrings),
                )?;
                counts.push((q, report.substrings.len()));
            }
            for (q, count) in counts {
                println!("quorum {q}: {count} shared substrings");
            }
            Ok(ExitCode::SUCCESS)
        }
        AnalyzeCommand::Histogram { pop, ngram } => {
            let (images, _) = load_populations(&pop.manifests)?;
            let programs = decode_programs(&images)?;
            std::fs::create_dir_all(&pop.out)?;
            std::fs::write(
                pop.out.join(format!("ngram_{ngram}.csv")),
                histogram_csv(&programs, ngram)?,
            )?;
            println!("wrote ngram_{ngram}.csv under {}", pop.out.display());
            Ok(ExitCode::SUCCESS)
        }
        AnalyzeCommand::SMatrix { pop, ngram } => {
            let (images, groups) = load_populations(&pop.manifests)?;
            let programs = decode_programs(&images)?;
            write_matrix_report(
                &pop.out,
                &format!("s_n{ngram}"),
                &programs,
                &groups,
                MetricKind::S,
                ngram,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        AnalyzeCommand::Jaccard { pop, metric } => {
            let kind = match metric.as_str() {
                "jaccard_pairs" => MetricKind::JaccardPairs,
                "jaccard_weighted" => MetricKind::JaccardWeighted,
                other => return Err(CliError::Usage(format!("unknown jaccard metric `{other}`"))),
            };
            let (images, groups) = load_populations(&pop.manifests)?;
            let programs = decode_programs(&images)?;
            write_matrix_report(&pop.out, kind.name(), &programs, &groups, kind, 1)?;
            Ok(ExitCode::SUCCESS)
        }
        AnalyzeCommand::Cfg { pop } => {
            let (images, groups) = load_populations(&pop.manifests)?;
            let programs = decode_programs(&images)?;
            write_matrix_report(&pop.out, "cfg", &programs, &groups, MetricKind::Cfg, 1)?;
            Ok(ExitCode::SUCCESS)
        }
        AnalyzeCommand::Canon { pop, dump } => {
            let (images, _) = load_populations(&pop.manifests)?;
            let programs = decode_programs(&images)?;
            std::fs::create_dir_all(&pop.out)?;
            if dump {
                let mut text = String::new();
                for (label, program) in &programs {
                    let form = divlab::canon::canonicalize(program);
                    text.push_str(&format!("== {label} {}\n", form.digest_hex()));
                    text.push_str(&form.dump());
                }
                std::fs::write(pop.out.join("canon_streams.txt"), text)?;
            }
            let csv = canon_csv(&programs);
            let unique: std::collections::BTreeSet<&str> = csv
                .lines()
                .skip(1)
                .filter_map(|l| l.rsplit(',').next())
                .collect();
            std::fs::write(pop.out.join("canon.csv"), &csv)?;
            println!(
                "{} members, {} unique canonical digests",
                programs.len(),
                unique.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        AnalyzeCommand::Evasion {
            pop,
            k,
            min_len,
            trials,
            seed,
        } => {
            let (images, groups) = load_populations(&pop.manifests)?;
            if groups.is_empty() {
                return Err(CliError::Usage("no population given".into()));
            }
            // First manifest is the target population; the rest form the
            // benign pool.
            let target: Vec<ByteImage> = groups[0].1.iter().map(|&i| images[i].1.clone()).collect();
            let benign: Vec<ByteImage> = groups[1..]
                .iter()
                .flat_map(|(_, idx)| idx.iter().map(|&i| images[i].1.clone()))
                .collect();
            let report = evasion_experiment(&target, &benign, k, min_len, trials, seed)?;
            std::fs::create_dir_all(&pop.out)?;
            std::fs::write(pop.out.join("evasion.csv"), evasion_csv(&report))?;
            println!(
                "mean held-out match rate {:.4}, benign fp rate {:.4}, {} trial(s) without signature",
                report.mean_match_rate(),
                report.benign_fp_rate(),
                report.no_signature_count()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
