//! Experiment configuration: a versioned JSON file merged with command-line
//! flags; flags win.

use std::path::{Path, PathBuf};

use adtail_core::additive::AdditiveFunction;
use adtail_core::error::{Error, Result};
use adtail_core::psi::PsiDistribution;
use adtail_core::sieve::Normalization;
use serde::Deserialize;

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk experiment config. Unknown fields are rejected so typos fail loudly.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: Option<u32>,
    #[serde(rename = "fn")]
    pub fn_spec: Option<String>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub deltas: Option<String>,
    pub psi: Option<String>,
    pub normalize: Option<String>,
    pub method: Option<String>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub grid_step: Option<f64>,
    pub level: Option<String>,
    pub k: Option<usize>,
    pub p_limit: Option<u64>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: FileConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?;
        match cfg.schema_version {
            Some(SCHEMA_VERSION) => Ok(cfg),
            Some(v) => Err(Error::Config(format!(
                "unsupported schema_version {v}; this build reads {SCHEMA_VERSION}"
            ))),
            None => Err(Error::Config(
                "config file must declare schema_version".into(),
            )),
        }
    }
}

/// Flag value wins over config-file value.
pub fn merge<T: Clone>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

pub fn parse_function(spec: &str) -> Result<AdditiveFunction> {
    if spec == "omega" {
        return Ok(AdditiveFunction::omega());
    }
    if let Some(rest) = spec.strip_prefix("frac:") {
        let (num, den) = rest
            .split_once('/')
            .ok_or_else(|| Error::Config(format!("expected frac:NUM/DEN, got {spec:?}")))?;
        let num: u64 = num
            .parse()
            .map_err(|_| Error::Config(format!("bad numerator in {spec:?}")))?;
        let den: u64 = den
            .parse()
            .map_err(|_| Error::Config(format!("bad denominator in {spec:?}")))?;
        return AdditiveFunction::frac_alpha(num, den);
    }
    if let Some(path) = spec.strip_prefix("table:") {
        return AdditiveFunction::from_table_file(Path::new(path));
    }
    Err(Error::Config(format!(
        "unknown function {spec:?}; expected omega, frac:NUM/DEN or table:PATH"
    )))
}

/// Ψ source: `atom:T` (closed form), `empirical` (from the prime values of f
/// up to x), or a path to a distribution file.
pub fn parse_psi(
    spec: &str,
    f: Option<&AdditiveFunction>,
    x: Option<u64>,
) -> Result<PsiDistribution> {
    if let Some(t) = spec.strip_prefix("atom:") {
        let t: f64 = t
            .parse()
            .map_err(|_| Error::Config(format!("bad atom position {t:?}")))?;
        if !(t > 0.0) {
            return Err(Error::Config(format!("atom position must be > 0, got {t}")));
        }
        return Ok(PsiDistribution::atom_at(t));
    }
    if spec == "empirical" {
        let f = f.ok_or_else(|| Error::Config("psi=empirical requires --fn".into()))?;
        let x = x.ok_or_else(|| Error::Config("psi=empirical requires --x".into()))?;
        return adtail_core::psi::psi_from_prime_data(f, x);
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| Error::Config(format!("cannot read psi file {spec}: {e}")))?;
    PsiDistribution::from_json(&text)
}

/// Grid `a:b:step`, both endpoints included.
pub fn parse_deltas(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "expected deltas a:b:step, got {spec:?}"
        )));
    }
    let a: f64 = parts[0]
        .parse()
        .map_err(|_| Error::Config(format!("bad start in {spec:?}")))?;
    let b: f64 = parts[1]
        .parse()
        .map_err(|_| Error::Config(format!("bad end in {spec:?}")))?;
    let step: f64 = parts[2]
        .parse()
        .map_err(|_| Error::Config(format!("bad step in {spec:?}")))?;
    if !(step > 0.0) || b < a {
        return Err(Error::Config(format!(
            "need a <= b and step > 0 in {spec:?}"
        )));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

pub fn parse_x(x: f64) -> Result<u64> {
    if !(x >= 2.0) || x > 9e15 {
        return Err(Error::Config(format!("x must lie in [2, 9e15], got {x}")));
    }
    Ok(x as u64)
}

pub fn parse_normalization(spec: &str) -> Result<Normalization> {
    match spec {
        "sigma" => Ok(Normalization::Sigma),
        "B" => Ok(Normalization::B),
        other => Err(Error::Config(format!(
            "normalize must be sigma or B, got {other:?}"
        ))),
    }
}
