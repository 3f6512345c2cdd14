//! Run configuration from flags and an optional JSON file; flags win.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Algebraic,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Number of users and relays.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Relays per user.
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Field modulus; defaults to the smallest prime the construction needs.
    #[arg(long = "q")]
    pub q: Option<u64>,
    /// Input length per user; must be a multiple of the block size.
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub level: Option<Level>,
    #[arg(long = "max-states")]
    pub max_states: Option<u64>,
    /// Smallest K of a rate table.
    #[arg(long = "k-min")]
    pub k_min: Option<usize>,
    /// Largest K of a rate table.
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Use the hard-coded K=3, B=2, q=3 reference scheme.
    #[arg(long = "golden-example1")]
    pub golden_example1: bool,
    /// JSON file with the same keys as the flags plus "version": 1.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    version: u32,
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "B")]
    b: Option<usize>,
    q: Option<u64>,
    #[serde(rename = "L")]
    l: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    level: Option<Level>,
    max_states: Option<u64>,
    k_min: Option<usize>,
    k_max: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
    #[serde(default)]
    golden_example1: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub k: Option<usize>,
    pub b: Option<usize>,
    pub q: Option<u64>,
    pub l: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub level: Level,
    pub max_states: u64,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub golden_example1: bool,
}

fn load(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file: FileConfig =
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
    if file.version != CONFIG_VERSION {
        return Err(format!(
            "unsupported config version {}, expected {CONFIG_VERSION}",
            file.version
        ));
    }
    Ok(file)
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self, String> {
        let file = match &flags.config {
            Some(path) => load(path)?,
            None => FileConfig::default(),
        };
        let cfg = RunConfig {
            k: flags.k.or(file.k),
            b: flags.b.or(file.b),
            q: flags.q.or(file.q),
            l: flags.l.or(file.l),
            trials: flags.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            level: flags.level.or(file.level).unwrap_or(Level::Algebraic),
            max_states: flags
                .max_states
                .or(file.max_states)
                .unwrap_or(hsa_core::audit::DEFAULT_MAX_STATES),
            k_min: flags.k_min.or(file.k_min),
            k_max: flags.k_max.or(file.k_max),
            out: flags.out.clone().or(file.out),
            format: flags.format.or(file.format).unwrap_or(Format::Json),
            golden_example1: flags.golden_example1 || file.golden_example1,
        };
        if let (Some(k), Some(b)) = (cfg.k, cfg.b) {
            if b == 0 || b > k {
                return Err(format!("need 1 <= B <= K, got K={k}, B={b}"));
            }
        }
        if let Some(q) = cfg.q {
            if !hsa_core::gf::is_prime(q) {
                return Err(format!("q={q} is not prime"));
            }
        }
        Ok(cfg)
    }

    /// `(K, B)`, both required.
    pub fn params(&self) -> Result<(usize, usize), String> {
        match (self.k, self.b) {
            (Some(k), Some(b)) => Ok((k, b)),
            _ => Err("--K and --B are required".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_override_file() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(
            file,
            r#"{{"version": 1, "K": 5, "B": 2, "seed": 9, "level": "exhaustive"}}"#
        )
        .unwrap();
        let flags = Flags {
            b: Some(3),
            config: Some(file.path().to_path_buf()),
            ..Flags::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!((cfg.k, cfg.b, cfg.seed), (Some(5), Some(3), 9));
        assert_eq!(cfg.level, Level::Exhaustive);
        assert_eq!(cfg.trials, DEFAULT_TRIALS);
    }

    #[test]
    fn rejects_bad_values() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, r#"{{"version": 2}}"#).unwrap();
        let flags = Flags {
            config: Some(file.path().to_path_buf()),
            ..Flags::default()
        };
        assert!(RunConfig::resolve(&flags).unwrap_err().contains("version"));
        let flags = Flags {
            k: Some(3),
            b: Some(4),
            ..Flags::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
        let flags = Flags {
            q: Some(9),
            ..Flags::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
    }
}
