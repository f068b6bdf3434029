use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::KernelParams;
use crate::metrics::PairSelection;
use crate::model::{TrainConfig, Variant};
use crate::reweight::PropensityConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    IidCv,
    CovariateShift,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::IidCv => "iid_cv",
            ExperimentKind::CovariateShift => "covariate_shift",
        })
    }
}

/// Source/target split for the covariate-shift experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    /// Encoded column that defines the domains.
    pub split_column: String,
    /// Rows with this value form the source; all others the target.
    pub source_value: f64,
    /// Leave the split column out of the domain classifier. It separates the
    /// domains perfectly, which would push every propensity to the clip.
    #[serde(default = "yes")]
    pub exclude_split_from_propensity: bool,
}

fn yes() -> bool {
    true
}

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_folds() -> usize {
    5
}

fn default_confidence() -> f64 {
    0.95
}

fn default_significance() -> f64 {
    0.05
}

/// Everything needed to run one experiment, read from TOML.
///
/// Relative paths are resolved against the directory of the config file and
/// stored as absolute paths, so a serialized config runs from anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Z-score the schema's continuous columns with training statistics.
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Names of schema sensitive declarations used for prediction consistency.
    /// Empty means all of them.
    #[serde(default)]
    pub sensitive: Vec<String>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// ANOVA level below which Tukey tables are produced.
    #[serde(default = "default_significance")]
    pub significance: f64,
    /// Produce Tukey tables for every metric regardless of the ANOVA outcome.
    #[serde(default)]
    pub tukey_all: bool,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub selection: PairSelection,
    #[serde(default)]
    pub propensity: PropensityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    /// Reads, resolves relative paths against the file's directory, and validates.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let base = std::path::absolute(base.join(".")).map_err(|e| Error::io(base, e))?;
        config.resolve_paths(&base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.dataset, &mut self.schema, &mut self.output] {
            if p.is_relative() {
                *p = normalize(&base.join(&*p));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("variant list is empty".into()));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                return Err(Error::Config(format!("variant {v} listed twice")));
            }
        }
        for (what, p) in [("dataset", &self.dataset), ("schema", &self.schema)] {
            if !p.is_file() {
                return Err(Error::Config(format!("{what} file {} does not exist", p.display())));
            }
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config(format!("confidence must be in (0, 1), got {}", self.confidence)));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::Config(format!(
                "significance must be in (0, 1), got {}",
                self.significance
            )));
        }
        self.train.validate()?;
        self.kernel.validate()?;
        self.selection.validate()?;
        match self.kind {
            ExperimentKind::IidCv => {
                if self.folds < 2 {
                    return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
                }
            }
            ExperimentKind::CovariateShift => {
                if self.shift.is_none() {
                    return Err(Error::Config("covariate_shift needs a [shift] section".into()));
                }
                self.propensity.validate()?;
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serializing config: {e}")))
    }
}

/// Drops `.` components and folds `dir/..` without touching the filesystem.
fn normalize(path: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if matches!(out.components().next_back(), Some(Component::Normal(_))) {
                    out.pop();
                } else {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}
