//! Population plumbing shared by the experiment drivers and the CLI:
//! config-file parsing, variant generation, population manifests, and
//! content hashing. Everything written to disk is a pure function of
//! the inputs so reruns produce byte-identical trees.

mod analyze;
mod experiment;

pub use analyze::{
    canon_csv, evasion_csv, histogram_csv, length_histogram_csv, subseq_report, substring_dump,
    SubseqReport,
};
pub use experiment::{compare_trees, run_full_experiment, ExperimentOptions, ExperimentReport};

use crate::diversify::{diversify, DiversityConfig, PassToggles};
use crate::exec;
use crate::isa::{encode, tbin_bytes, ByteImage, EncodeError, ParseError, Program, TbinError};
use crate::metrics::MetricsError;
use crate::signatures::SignatureError;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Tbin(#[from] TbinError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

// --- config files -------------------------------------------------------

/// Canonical `key=value` rendering; also the config-digest preimage.
pub fn serialize_config(cfg: &DiversityConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed={}", cfg.seed);
    let _ = writeln!(out, "p_substitute={}", cfg.p_substitute);
    let _ = writeln!(out, "p_reorder={}", cfg.p_reorder);
    let _ = writeln!(out, "p_nop={}", cfg.p_nop);
    let _ = writeln!(out, "p_garbage={}", cfg.p_garbage);
    let _ = writeln!(out, "p_split={}", cfg.p_split);
    let _ = writeln!(out, "max_garbage_len={}", cfg.max_garbage_len);
    let _ = writeln!(out, "strip_symbols={}", cfg.strip_symbols);
    for name in PassToggles::NAMES {
        let _ = writeln!(
            out,
            "enable.{name}={}",
            cfg.enable.get(name).expect("known")
        );
    }
    out
}

pub fn config_digest(cfg: &DiversityConfig) -> String {
    sha256_hex(serialize_config(cfg).as_bytes())
}

/// Parses `key=value` lines (`#` or `;` comments) over the default
/// config. Unknown keys and malformed values are errors.
pub fn parse_config(text: &str) -> Result<DiversityConfig, HarnessError> {
    let mut cfg = DiversityConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(HarnessError::Config {
            line: lineno + 1,
            msg: format!("expected key=value, found `{line}`"),
        })?;
        apply_config_key(&mut cfg, key.trim(), value.trim()).map_err(|msg| {
            HarnessError::Config {
                line: lineno + 1,
                msg,
            }
        })?;
    }
    cfg.validate().map_err(|e| HarnessError::Config {
        line: 0,
        msg: e.to_string(),
    })?;
    Ok(cfg)
}

/// Applies one `key=value` override; used by both config files and CLI
/// `--set` flags.
pub fn apply_config_key(cfg: &mut DiversityConfig, key: &str, value: &str) -> Result<(), String> {
    let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number `{v}`"));
    let parse_bool = |v: &str| match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(format!("bad boolean `{v}`")),
    };
    match key {
        "seed" => cfg.seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?,
        "p_substitute" => cfg.p_substitute = parse_f64(value)?,
        "p_reorder" => cfg.p_reorder = parse_f64(value)?,
        "p_nop" => cfg.p_nop = parse_f64(value)?,
        "p_garbage" => cfg.p_garbage = parse_f64(value)?,
        "p_split" => cfg.p_split = parse_f64(value)?,
        "max_garbage_len" => {
            cfg.max_garbage_len = value
                .parse()
                .map_err(|_| format!("bad max_garbage_len `{value}`"))?
        }
        "strip_symbols" => cfg.strip_symbols = parse_bool(value)?,
        _ => match key.strip_prefix("enable.") {
            Some(pass) => {
                let v = parse_bool(value)?;
                if !cfg.enable.set(pass, v) {
                    return Err(format!("unknown pass `{pass}`"));
                }
            }
            None => return Err(format!("unknown key `{key}`")),
        },
    }
    Ok(())
}

// --- populations and manifests ------------------------------------------

/// One diversified variant: its derived seed, the transformed program,
/// and the encoded image.
pub struct Variant {
    pub index: usize,
    pub seed: u64,
    pub program: Program,
    pub image: ByteImage,
}

/// Diversifies `n` variants in parallel; variant `i` runs under the
/// config re-seeded for index `i`.
pub fn generate_variants(
    program: &Program,
    cfg: &DiversityConfig,
    n: usize,
) -> Result<Vec<Variant>, HarnessError> {
    let results = exec::map_range(n, |i| {
        let vcfg = cfg.for_variant(i as u64);
        let transformed = diversify(program, &vcfg);
        encode(&transformed).map(|image| Variant {
            index: i,
            seed: vcfg.seed,
            program: transformed,
            image,
        })
    });
    results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(HarnessError::from)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub variant: usize,
    pub seed: u64,
    /// Image path relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to reproduce a population bit-for-bit: the source
/// label, the full config, and per-variant seeds and image hashes.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationManifest {
    pub source: String,
    pub config: DiversityConfig,
    pub entries: Vec<ManifestEntry>,
}

impl PopulationManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# divlab population manifest v1\n");
        let _ = writeln!(out, "source={}", self.source);
        let _ = writeln!(out, "config_digest={}", config_digest(&self.config));
        for line in serialize_config(&self.config).lines() {
            let _ = writeln!(out, "config.{line}");
        }
        out.push_str("variant,seed,path,bytes,sha256\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.variant, e.seed, e.path, e.bytes, e.sha256
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<PopulationManifest, HarnessError> {
        let mut source = None;
        let mut cfg = DiversityConfig::default();
        let mut declared_digest = None;
        let mut entries = Vec::new();
        let mut in_table = false;
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "variant,seed,path,bytes,sha256" {
                in_table = true;
                continue;
            }
            if in_table {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 5 {
                    return Err(HarnessError::Manifest(format!("bad row `{line}`")));
                }
                entries.push(ManifestEntry {
                    variant: cols[0].parse().map_err(|_| {
                        HarnessError::Manifest(format!("bad variant `{}`", cols[0]))
                    })?,
                    seed: cols[1]
                        .parse()
                        .map_err(|_| HarnessError::Manifest(format!("bad seed `{}`", cols[1])))?,
                    path: cols[2].to_string(),
                    bytes: cols[3]
                        .parse()
                        .map_err(|_| HarnessError::Manifest(format!("bad size `{}`", cols[3])))?,
                    sha256: cols[4].to_string(),
                });
            } else if let Some(v) = line.strip_prefix("source=") {
                source = Some(v.to_string());
            } else if let Some(v) = line.strip_prefix("config_digest=") {
                declared_digest = Some(v.to_string());
            } else if let Some(kv) = line.strip_prefix("config.") {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| HarnessError::Manifest(format!("bad config line `{line}`")))?;
                apply_config_key(&mut cfg, k, v).map_err(HarnessError::Manifest)?;
            } else {
                return Err(HarnessError::Manifest(format!("unexpected line `{line}`")));
            }
        }
        let manifest = PopulationManifest {
            source: source.ok_or_else(|| HarnessError::Manifest("missing source".into()))?,
            config: cfg,
            entries,
        };
        if let Some(d) = declared_digest {
            let actual = config_digest(&manifest.config);
            if d != actual {
                return Err(HarnessError::Manifest(format!(
                    "config digest mismatch: declared {d}, computed {actual}"
                )));
            }
        }
        Ok(manifest)
    }
}

/// Generates a population on disk: `variants/v###.tbin` plus
/// `manifest.txt` under `out_dir`.
pub fn write_population(
    program: &Program,
    source: &str,
    cfg: &DiversityConfig,
    n: usize,
    out_dir: &Path,
) -> Result<PopulationManifest, HarnessError> {
    let variants = generate_variants(program, cfg, n)?;
    std::fs::create_dir_all(out_dir.join("variants"))?;
    let mut entries = Vec::with_capacity(n);
    for v in &variants {
        let rel = format!("variants/v{:03}.tbin", v.index);
        let raw = tbin_bytes(&v.image);
        std::fs::write(out_dir.join(&rel), &raw)?;
        entries.push(ManifestEntry {
            variant: v.index,
            seed: v.seed,
            path: rel,
            bytes: raw.len() as u64,
            sha256: sha256_hex(&raw),
        });
    }
    let manifest = PopulationManifest {
        source: source.to_string(),
        config: cfg.clone(),
        entries,
    };
    std::fs::write(out_dir.join("manifest.txt"), manifest.render())?;
    Ok(manifest)
}

/// Loads the images a manifest points at, verifying sizes and hashes.
pub fn load_population(
    manifest_path: &Path,
) -> Result<(PopulationManifest, Vec<ByteImage>), HarnessError> {
    let text = std::fs::read_to_string(manifest_path)?;
    let manifest = PopulationManifest::parse(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut images = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let raw = std::fs::read(base.join(&e.path))?;
        if raw.len() as u64 != e.bytes || sha256_hex(&raw) != e.sha256 {
            return Err(HarnessError::Manifest(format!(
                "image {} does not match its manifest entry",
                e.path
            )));
        }
        images.push(crate::isa::parse_tbin(&raw)?);
    }
    Ok((manifest, images))
}

/// Re-runs generation from the manifest's source text and config and
/// checks every image hash; the reproducibility contract of manifests.
pub fn verify_reproducibility(
    manifest: &PopulationManifest,
    source_text: &str,
) -> Result<(), HarnessError> {
    let program = crate::isa::parse_assembly(source_text)?;
    let regenerated = generate_variants(&program, &manifest.config, manifest.entries.len())?;
    for (v, e) in regenerated.iter().zip(&manifest.entries) {
        let raw = tbin_bytes(&v.image);
        if sha256_hex(&raw) != e.sha256 {
            return Err(HarnessError::Manifest(format!(
                "variant {} does not reproduce its manifest hash",
                e.variant
            )));
        }
    }
    Ok(())
}

/// Output-directory paths used by the experiment driver and the CLI.
pub fn population_dir(out_dir: &Path, program: &str) -> PathBuf {
    out_dir.join(program)
}
