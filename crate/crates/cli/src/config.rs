//! Experiment configuration: JSON file schema, flag merging, and validation.
//!
//! Every CLI flag has a config-file equivalent; flags override the file.
//! All referenced parameters are validated before any computation starts.

use std::path::PathBuf;

use anyhow::Result;
use serde::{Deserialize, Serialize};

/// Parameter or configuration problem: exits with code 2 before any
/// computation or output.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

macro_rules! usage_bail {
    ($($arg:tt)*) => {
        return Err(anyhow::Error::new($crate::config::UsageError(format!($($arg)*))))
    };
}
pub(crate) use usage_bail;

/// Output format for tables and reports printed to stdout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Md,
}

/// On-disk configuration; any subset of fields may be present.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: Option<String>,
    pub n: Option<u32>,
    pub d: Option<u32>,
    pub p: Option<f64>,
    pub k: Option<u32>,
    pub count: Option<u64>,
    pub signature: Option<Vec<f64>>,
    pub flavor: Option<String>,
    pub delta_min: Option<String>,
    pub delta_max: Option<String>,
    pub n_min: Option<u64>,
    pub n_max: Option<u64>,
    pub data: Option<String>,
    pub interval: Option<f64>,
    pub tolerance: Option<f64>,
    pub slope_min: Option<f64>,
    pub slope_max: Option<f64>,
    pub trials: Option<u32>,
    pub dims: Option<Vec<u32>>,
    pub spacing_factor: Option<f64>,
    pub grid_h: Option<f64>,
    pub nu: Option<f64>,
    pub critical: Option<bool>,
    pub table: Option<bool>,
    pub p_values: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
}

impl FileConfig {
    pub fn load(path: &PathBuf) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => usage_bail!("cannot read config {}: {e}", path.display()),
        };
        match serde_json::from_str(&text) {
            Ok(cfg) => Ok(cfg),
            Err(e) => usage_bail!("config {} is not valid: {e}", path.display()),
        }
    }

    /// Rejects a config whose `experiment` field disagrees with the invoked
    /// subcommand.
    pub fn check_experiment(&self, expected: &str) -> Result<()> {
        if let Some(e) = &self.experiment {
            if e != expected {
                usage_bail!(
                    "config is for experiment '{e}', but the '{expected}' subcommand was invoked"
                );
            }
        }
        Ok(())
    }
}

/// Parses a dyadic scale: `2^-K` (also accepted as `2e-K`), or a float that
/// is exactly a power of two.
pub fn parse_dyadic(text: &str) -> Result<f64> {
    let t = text.trim();
    for prefix in ["2^", "2e", "2E"] {
        if let Some(rest) = t.strip_prefix(prefix) {
            if let Ok(exp) = rest.parse::<i32>() {
                return Ok(2f64.powi(exp));
            }
        }
    }
    if let Ok(v) = t.parse::<f64>() {
        if v > 0.0 {
            let e = v.log2().round();
            if 2f64.powi(e as i32) == v {
                return Ok(v);
            }
        }
    }
    usage_bail!("'{text}' is not a dyadic scale; write 2^-K (or an exact power of two)")
}

/// Parses a rational like `6`, `13/2`.
pub fn parse_rational(text: &str) -> Result<declab_core::Rational> {
    let t = text.trim();
    if let Some((a, b)) = t.split_once('/') {
        let (Ok(num), Ok(den)) = (a.trim().parse::<i64>(), b.trim().parse::<i64>()) else {
            usage_bail!("'{text}' is not a rational of the form a/b");
        };
        if den == 0 {
            usage_bail!("rational denominator is zero");
        }
        return Ok(declab_core::Rational::new(num, den));
    }
    match t.parse::<i64>() {
        Ok(v) => Ok(declab_core::Rational::from_integer(v)),
        Err(_) => usage_bail!("'{text}' is not an integer or a/b"),
    }
}

/// Parses a comma- or semicolon-separated signature like `1,-1`.
pub fn parse_signature(text: &str) -> Result<Vec<f64>> {
    text.split([',', ';'])
        .map(|s| match s.trim().parse::<f64>() {
            Ok(v) => Ok(v),
            Err(_) => usage_bail!("bad signature entry '{s}'"),
        })
        .collect()
}

/// Dyadic sweep between two scales (inclusive), coarse to fine, restricted
/// to exponents admissible for hypersurface partitions (even powers of 1/2).
pub fn dyadic_sweep(min: f64, max: f64) -> Result<Vec<f64>> {
    if !(min > 0.0 && max <= 1.0 && min <= max) {
        usage_bail!("need 0 < delta-min <= delta-max <= 1");
    }
    let lo = (-max.log2()).ceil() as i32;
    let hi = (-min.log2()).floor() as i32;
    let mut out = Vec::new();
    for e in lo..=hi {
        if e % 2 == 0 && e >= 0 {
            out.push(2f64.powi(-e));
        }
    }
    if out.is_empty() {
        usage_bail!("no admissible dyadic scales 4^-k in [{min:e}, {max:e}]");
    }
    Ok(out)
}

/// Power-of-two sweep for cutoffs, `n_min..=n_max` inclusive.
pub fn pow2_sweep(min: u64, max: u64) -> Result<Vec<u64>> {
    if min < 1 || min > max {
        usage_bail!("need 1 <= N-min <= N-max");
    }
    if !min.is_power_of_two() || !max.is_power_of_two() {
        usage_bail!("cutoff sweep endpoints must be powers of two");
    }
    let mut out = Vec::new();
    let mut v = min;
    while v <= max {
        out.push(v);
        v *= 2;
    }
    Ok(out)
}
