//! Experiment configuration: a JSON document whose fields the command-line
//! flags override.
//!
//! ```json
//! {
//!   "scenario": ["uniform-n3", {"name": "mine", "platforms": [{"family": "linear"}], "n": 2}],
//!   "n_samples": 50000,
//!   "repeats": 10,
//!   "seed": 7,
//!   "output_path": "out",
//!   "format": "csv",
//!   "bundle": "fits.json"
//! }
//! ```

use std::path::{Path, PathBuf};

use attribution_core::metrics::{DEFAULT_REPEATS, DEFAULT_SAMPLES};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechKind {
    Pvm,
    Lcm,
    Tree,
}

impl MechKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MechKind::Pvm => "pvm",
            MechKind::Lcm => "lcm",
            MechKind::Tree => "tree",
        }
    }
}

/// One click-time law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistSpec {
    Uniform { lo: f64, hi: f64 },
    Linear,
    Fm { m: f64 },
    Exponential {
        rate: f64,
        #[serde(default)]
        hi: f64,
    },
    /// `(lo, hi, mass)` triples.
    Piecewise { segments: Vec<(f64, f64, f64)> },
    /// A platform from the fitted bundle.
    Fitted { platform: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<MechKind>,
    /// One law per platform, or a single law repeated `n` times.
    pub platforms: Vec<DistSpec>,
    #[serde(default)]
    pub n: Option<usize>,
    /// LCM delays to certify instead of solving for an equilibrium.
    #[serde(default)]
    pub lcm_delays: Option<Vec<f64>>,
}

fn default_mechanisms() -> Vec<MechKind> {
    vec![MechKind::Pvm, MechKind::Lcm]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Inline(ScenarioSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(ScenarioRef),
    Many(Vec<ScenarioRef>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<ScenarioRef> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: OneOrMany,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    /// Fitted bundle consulted by `fitted` laws and bundle scenarios.
    #[serde(default)]
    pub bundle: Option<PathBuf>,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenarios: Vec<String>,
    pub n_samples: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub output_path: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub bundle: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| CliError::Config { path: path.to_path_buf(), source })
    }

    /// File (if any) with flags applied on top.
    pub fn resolve(file: Option<&Path>, o: Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => {
                if o.scenarios.is_empty() {
                    return Err(CliError::Usage("give --scenario or --config".into()));
                }
                ExperimentConfig {
                    scenario: OneOrMany::Many(Vec::new()),
                    n_samples: DEFAULT_SAMPLES,
                    repeats: DEFAULT_REPEATS,
                    seed: 0,
                    output_path: None,
                    format: OutputFormat::Csv,
                    bundle: None,
                }
            }
        };
        if !o.scenarios.is_empty() {
            cfg.scenario = OneOrMany::Many(o.scenarios.into_iter().map(ScenarioRef::Named).collect());
        }
        if let Some(v) = o.n_samples {
            cfg.n_samples = v;
        }
        if let Some(v) = o.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if o.output_path.is_some() {
            cfg.output_path = o.output_path;
        }
        if let Some(v) = o.format {
            cfg.format = v;
        }
        if o.bundle.is_some() {
            cfg.bundle = o.bundle;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(CliError::Usage("repeats must be at least 1".into()));
        }
        if self.n_samples < 1 {
            return Err(CliError::Usage("n_samples must be at least 1".into()));
        }
        if matches!(&self.scenario, OneOrMany::Many(v) if v.is_empty()) {
            return Err(CliError::Usage("no scenario given".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_scenarios() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"scenario": ["uniform-n3", {"name": "x", "platforms": [{"family": "fm", "m": 10}], "n": 2,
                 "mechanisms": ["lcm"]}], "seed": 3}"#,
        )
        .unwrap();
        let v = cfg.scenario.into_vec();
        assert_eq!(v[0], ScenarioRef::Named("uniform-n3".into()));
        match &v[1] {
            ScenarioRef::Inline(s) => {
                assert_eq!(s.platforms, vec![DistSpec::Fm { m: 10.0 }]);
                assert_eq!(s.mechanisms, vec![MechKind::Lcm]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.n_samples, DEFAULT_SAMPLES);
        assert_eq!(cfg.repeats, DEFAULT_REPEATS);
    }

    #[test]
    fn flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"scenario": "linear-n2", "repeats": 4, "seed": 1}"#).unwrap();
        let cfg = ExperimentConfig::resolve(
            Some(&p),
            Overrides { seed: Some(9), n_samples: Some(1000), ..Default::default() },
        )
        .unwrap();
        assert_eq!((cfg.seed, cfg.repeats, cfg.n_samples), (9, 4, 1000));
        std::fs::write(&p, r#"{"scenario": "linear-n2", "repeats": 0}"#).unwrap();
        assert!(ExperimentConfig::resolve(Some(&p), Overrides::default()).is_err());
        std::fs::write(&p, r#"{"scenario": "linear-n2", "typo": 0}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(CliError::Config { .. })));
    }
}
