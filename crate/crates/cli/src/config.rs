//! Run configuration: command-line flags layered over an optional
//! `key=value` file. Keys are the long flag names without dashes.

use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::Args;
use tsvd_core::identification::DEFAULT_BINS;
use tsvd_core::mnist::Normalization;
use tsvd_core::Parallelism;

use crate::exit::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Plain-text `key=value` file; flags given on the command line win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub train_images: Option<PathBuf>,

    #[arg(long, global = true)]
    pub train_labels: Option<PathBuf>,

    #[arg(long, global = true)]
    pub test_images: Option<PathBuf>,

    #[arg(long, global = true)]
    pub test_labels: Option<PathBuf>,

    /// Truncation level, or a comma-separated list for a sweep
    #[arg(long = "k", visible_alias = "ks", global = true, value_name = "K[,K...]")]
    pub ks: Option<String>,

    /// Pixel scaling: `none` keeps 0..255, `unit` divides by 255
    #[arg(long, global = true, value_name = "none|unit")]
    pub normalize: Option<String>,

    /// Worker threads (defaults to all available cores)
    #[arg(long, global = true)]
    pub threads: Option<String>,

    /// Output directory (bases are read from and written to here)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Histogram bins for ROC curves
    #[arg(long, global = true)]
    pub bins: Option<String>,

    /// Seed for the synthetic self-test data
    #[arg(long, global = true)]
    pub seed: Option<String>,

    /// Heatmap rows as `start..end` in digit-ordered test indices
    #[arg(long, global = true, value_name = "START..END")]
    pub rows: Option<String>,

    /// Heatmap columns as `start..end` in digit-ordered test indices
    #[arg(long, global = true, value_name = "START..END")]
    pub cols: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub ks: Vec<usize>,
    /// `None` when neither flag nor file set it.
    pub normalize: Option<Normalization>,
    pub par: Parallelism,
    pub out: PathBuf,
    pub bins: usize,
    pub seed: u64,
    pub rows: Option<Range<usize>>,
    pub cols: Option<Range<usize>>,
}

impl RunConfig {
    pub fn normalization(&self) -> Normalization {
        self.normalize.unwrap_or(Normalization::Unit)
    }

    pub fn train_paths(&self) -> Result<(&Path, &Path), CliError> {
        Ok((
            required(&self.train_images, "train-images")?,
            required(&self.train_labels, "train-labels")?,
        ))
    }

    pub fn test_paths(&self) -> Result<(&Path, &Path), CliError> {
        Ok((
            required(&self.test_images, "test-images")?,
            required(&self.test_labels, "test-labels")?,
        ))
    }

    pub fn require_ks(&self) -> Result<&[usize], CliError> {
        if self.ks.is_empty() {
            return Err(CliError::usage("--k is required"));
        }
        Ok(&self.ks)
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    match p {
        Some(p) if !p.as_os_str().is_empty() => Ok(p),
        _ => Err(CliError::usage(format!("--{flag} is required"))),
    }
}

const KEYS: [&str; 13] = [
    "train-images",
    "train-labels",
    "test-images",
    "test-labels",
    "k",
    "ks",
    "normalize",
    "threads",
    "out",
    "bins",
    "seed",
    "rows",
    "cols",
];

/// Fills every flag left unset from the config file.
fn overlay(flags: &mut Flags, text: &str, path: &Path) -> Result<(), CliError> {
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::parse(format!("{}:{}: expected key=value", path.display(), lineno + 1))
        })?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim().to_string());
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!(
                "{}:{}: unknown key `{key}`",
                path.display(),
                lineno + 1
            )));
        }
        let path_value = || Some(PathBuf::from(&value));
        match key.as_str() {
            "train-images" => fill(&mut flags.train_images, path_value()),
            "train-labels" => fill(&mut flags.train_labels, path_value()),
            "test-images" => fill(&mut flags.test_images, path_value()),
            "test-labels" => fill(&mut flags.test_labels, path_value()),
            "out" => fill(&mut flags.out, path_value()),
            "k" | "ks" => fill(&mut flags.ks, Some(value)),
            "normalize" => fill(&mut flags.normalize, Some(value)),
            "threads" => fill(&mut flags.threads, Some(value)),
            "bins" => fill(&mut flags.bins, Some(value)),
            "seed" => fill(&mut flags.seed, Some(value)),
            "rows" => fill(&mut flags.rows, Some(value)),
            _ => fill(&mut flags.cols, Some(value)),
        }
    }
    Ok(())
}

fn fill<T>(slot: &mut Option<T>, value: Option<T>) {
    if slot.is_none() {
        *slot = value;
    }
}

fn parse_ks(s: &str) -> Result<Vec<usize>, CliError> {
    let ks = s
        .split(',')
        .map(|part| {
            let k: usize = part
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("invalid truncation `{part}`")))?;
            if k == 0 {
                return Err(CliError::usage("truncation k must be at least 1"));
            }
            Ok(k)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = ks.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != ks.len() {
        return Err(CliError::usage(format!("repeated truncation in `{s}`")));
    }
    Ok(ks)
}

fn parse_number<T: std::str::FromStr>(s: &str, flag: &str) -> Result<T, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value `{s}` for --{flag}")))
}

pub fn parse_range(s: &str, flag: &str) -> Result<Range<usize>, CliError> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| CliError::usage(format!("--{flag} expects START..END, got `{s}`")))?;
    let range = parse_number(a, flag)?..parse_number(b, flag)?;
    if range.is_empty() {
        return Err(CliError::usage(format!("--{flag} range `{s}` is empty")));
    }
    Ok(range)
}

impl Flags {
    pub fn resolve(mut self) -> Result<RunConfig, CliError> {
        if let Some(path) = self.config.clone() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            overlay(&mut self, &text, &path)?;
        }
        let normalize = self
            .normalize
            .as_deref()
            .map(|s| s.parse::<Normalization>().map_err(|_| {
                CliError::usage(format!("--normalize expects none or unit, got `{s}`"))
            }))
            .transpose()?;
        let par = match self.threads.as_deref() {
            None => Parallelism::available(),
            Some(s) => Parallelism::new(parse_number(s, "threads")?)
                .map_err(|_| CliError::usage("--threads must be at least 1"))?,
        };
        let bins = match self.bins.as_deref() {
            None => DEFAULT_BINS,
            Some(s) => parse_number(s, "bins")?,
        };
        if bins < 2 {
            return Err(CliError::usage("--bins must be at least 2"));
        }
        Ok(RunConfig {
            train_images: self.train_images,
            train_labels: self.train_labels,
            test_images: self.test_images,
            test_labels: self.test_labels,
            ks: self.ks.as_deref().map(parse_ks).transpose()?.unwrap_or_default(),
            normalize,
            par,
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            bins,
            seed: self.seed.as_deref().map(|s| parse_number(s, "seed")).transpose()?.unwrap_or(7),
            rows: self.rows.as_deref().map(|s| parse_range(s, "rows")).transpose()?,
            cols: self.cols.as_deref().map(|s| parse_range(s, "cols")).transpose()?,
        })
    }
}
