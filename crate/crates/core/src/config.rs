//! Experiment configuration files.
//!
//! A config is a JSON object with a flat `params` map, an optional `sweep`
//! map from a parameter name to a list of values, and optional run settings:
//!
//! ```json
//! {
//!   "params": { "lambda_c": 0.002, "sir_threshold_db": -5 },
//!   "sweep": { "lambda_c": [0.0005, 0.001, 0.002] },
//!   "seed": 7,
//!   "trials": 20000,
//!   "mode": "exact",
//!   "blockage": "probabilistic",
//!   "assoc": "table1"
//! }
//! ```
//!
//! Keys ending in `_db` are converted to linear units once, here. The file is
//! kept as written (including `_db` spellings) so it serializes back to the
//! same document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::LaplaceMode;
use crate::error::{Error, Result};
use crate::pathloss::{db_to_linear, NetworkParams};
use crate::simulate::{Association, BlockageMode};

pub const DEFAULT_SEED: u64 = 20_170_101;
pub const DEFAULT_TRIALS: usize = 20_000;

/// Parameter keys accepted in `params` and `sweep`, in linear units.
pub const PARAM_KEYS: [&str; 9] = [
    "lambda_b",
    "lambda_c",
    "l",
    "w",
    "phi",
    "alpha_los",
    "alpha_nlos",
    "p_t",
    "sir_threshold",
];

/// Keys that may also be given in dB with a `_db` suffix.
const DB_KEYS: [&str; 2] = ["p_t", "sir_threshold"];

/// Sweep-only axes that are not model parameters.
pub const AXIS_KEYS: [&str; 2] = ["k", "r"];

/// The document as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blockage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assoc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Split `key` into its base parameter name and whether it is in dB.
fn resolve_key(key: &str) -> Result<(&'static str, bool)> {
    if let Some(&k) = PARAM_KEYS.iter().find(|&&k| k == key) {
        return Ok((k, false));
    }
    if let Some(base) = key.strip_suffix("_db") {
        if let Some(&k) = DB_KEYS.iter().find(|&&k| k == base) {
            return Ok((k, true));
        }
    }
    Err(Error::Config(format!(
        "unknown parameter {key:?}; expected one of {PARAM_KEYS:?} (p_t and sir_threshold also accept a _db suffix)"
    )))
}

/// Set one named parameter, converting from dB if the key says so.
pub fn set_param(params: &mut NetworkParams, key: &str, value: f64) -> Result<()> {
    let (name, db) = resolve_key(key)?;
    let v = if db { db_to_linear(value) } else { value };
    let slot = match name {
        "lambda_b" => &mut params.lambda_b,
        "lambda_c" => &mut params.lambda_c,
        "l" => &mut params.l,
        "w" => &mut params.w,
        "phi" => &mut params.phi,
        "alpha_los" => &mut params.alpha_los,
        "alpha_nlos" => &mut params.alpha_nlos,
        "p_t" => &mut params.p_t,
        "sir_threshold" => &mut params.sir_threshold,
        _ => unreachable!("resolve_key returns a known name"),
    };
    *slot = v;
    Ok(())
}

/// Everything a run needs, after defaults, file and flag overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub file: ConfigFile,
    pub params: NetworkParams,
    /// Sweep axes in linear units, keyed by base name (`_db` resolved).
    pub sweep: BTreeMap<String, Vec<f64>>,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
    pub trials: usize,
    pub mode: LaplaceMode,
    pub blockage_mode: BlockageMode,
    pub association: Association,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub output: Option<PathBuf>,
    pub mode: Option<String>,
    pub blockage: Option<String>,
    pub assoc: Option<String>,
}

impl ExperimentConfig {
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        Self::resolve(file, Overrides::default())
    }

    /// Apply `overrides` on top of `file` and validate the result.
    pub fn resolve(mut file: ConfigFile, overrides: Overrides) -> Result<Self> {
        file.seed = overrides.seed.or(file.seed);
        file.trials = overrides.trials.or(file.trials);
        file.output = overrides.output.or(file.output);
        file.mode = overrides.mode.or(file.mode);
        file.blockage = overrides.blockage.or(file.blockage);
        file.assoc = overrides.assoc.or(file.assoc);

        let mut params = NetworkParams::default();
        let mut seen = BTreeMap::new();
        for (key, &value) in &file.params {
            let (name, _) = resolve_key(key)?;
            if let Some(prev) = seen.insert(name, key) {
                return Err(Error::Config(format!(
                    "parameter {name} given twice ({prev} and {key})"
                )));
            }
            set_param(&mut params, key, value)?;
        }
        params
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;

        let mut sweep = BTreeMap::new();
        for (key, values) in &file.sweep {
            if values.is_empty() {
                return Err(Error::Config(format!("sweep {key:?} has no values")));
            }
            let name = if AXIS_KEYS.contains(&key.as_str()) {
                key.clone()
            } else {
                let (name, _) = resolve_key(key)?;
                // Each value must make a valid parameter set on its own.
                for &v in values {
                    let mut p = params;
                    set_param(&mut p, key, v)?;
                    p.validate()
                        .map_err(|e| Error::Config(format!("sweep {key:?}: {e}")))?;
                }
                name.to_string()
            };
            let linear: Vec<f64> = match resolve_key(key) {
                Ok((_, true)) => values.iter().map(|&v| db_to_linear(v)).collect(),
                _ => values.clone(),
            };
            if key == "k" && values.iter().any(|&k| !(k >= 1.0 && k.fract() == 0.0)) {
                return Err(Error::Config("sweep k must hold integers >= 1".into()));
            }
            if key == "r" && values.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
                return Err(Error::Config(
                    "sweep r must hold finite distances >= 0".into(),
                ));
            }
            if sweep.insert(name.clone(), linear).is_some() {
                return Err(Error::Config(format!("sweep axis {name} given twice")));
            }
        }

        let trials = file.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        let mode = match &file.mode {
            Some(m) => m.parse()?,
            None => LaplaceMode::ExactAngular,
        };
        let blockage_mode = match &file.blockage {
            Some(b) => b.parse()?,
            None => BlockageMode::Probabilistic,
        };
        let association = match &file.assoc {
            Some(a) => a.parse()?,
            None => Association::Table1,
        };
        Ok(Self {
            params,
            sweep,
            output_path: file.output.clone(),
            seed: file.seed.unwrap_or(DEFAULT_SEED),
            trials,
            mode,
            blockage_mode,
            association,
            file,
        })
    }

    /// Values of a sweep axis, or `default` when the config does not sweep it.
    pub fn axis(&self, name: &str, default: &[f64]) -> Vec<f64> {
        self.sweep
            .get(name)
            .cloned()
            .unwrap_or_else(|| default.to_vec())
    }

    /// SHA-256 of the effective config document, hex encoded.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&self.file).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_file(ConfigFile::default()).expect("defaults are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "params": { "lambda_c": 0.001, "sir_threshold_db": 0 },
        "sweep": { "lambda_b": [1e-5, 2e-5], "k": [1, 2] },
        "seed": 3,
        "mode": "bound"
    }"#;

    #[test]
    fn parses_and_converts_db_once() {
        let cfg = ExperimentConfig::from_file(ConfigFile::parse(SAMPLE).unwrap()).unwrap();
        assert_eq!(cfg.params.lambda_c, 0.001);
        assert_eq!(cfg.params.sir_threshold, 1.0);
        assert_eq!(cfg.params.l, 15.0);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.trials, DEFAULT_TRIALS);
        assert_eq!(cfg.mode, LaplaceMode::BesselBound);
        assert_eq!(cfg.axis("lambda_b", &[]), vec![1e-5, 2e-5]);
        assert_eq!(cfg.axis("lambda_c", &[7.0]), vec![7.0]);
    }

    #[test]
    fn round_trips() {
        let file = ConfigFile::parse(SAMPLE).unwrap();
        let again = ConfigFile::parse(&file.to_json()).unwrap();
        assert_eq!(file, again);
        assert_eq!(again.params["sir_threshold_db"], 0.0);
    }

    #[test]
    fn overrides_win_and_change_the_digest() {
        let file = ConfigFile::parse(SAMPLE).unwrap();
        let base = ExperimentConfig::from_file(file.clone()).unwrap();
        let over = ExperimentConfig::resolve(
            file,
            Overrides {
                seed: Some(9),
                trials: Some(5),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((over.seed, over.trials), (9, 5));
        assert_ne!(base.digest(), over.digest());
        assert_eq!(
            base.digest(),
            ExperimentConfig::from_file(ConfigFile::parse(SAMPLE).unwrap())
                .unwrap()
                .digest()
        );
        assert_eq!(base.digest().len(), 64);
    }

    #[test]
    fn rejects_bad_documents() {
        for bad in [
            r#"{"params": {"lambda_x": 1}}"#,
            r#"{"params": {"lambda_b_db": 1}}"#,
            r#"{"params": {"lambda_c": -1}}"#,
            r#"{"params": {"sir_threshold": 1, "sir_threshold_db": 0}}"#,
            r#"{"sweep": {"lambda_c": []}}"#,
            r#"{"sweep": {"lambda_c": [0.001, -2]}}"#,
            r#"{"sweep": {"k": [0.5]}}"#,
            r#"{"mode": "approximate"}"#,
            r#"{"trials": 0}"#,
            r#"{"colour": "blue"}"#,
            r#"not json"#,
        ] {
            let r = ConfigFile::parse(bad).and_then(ExperimentConfig::from_file);
            assert!(matches!(r, Err(Error::Config(_))), "{bad}: {r:?}");
        }
    }
}
