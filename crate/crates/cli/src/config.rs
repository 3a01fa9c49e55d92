//! Experiment configuration files (TOML).
//!
//! Parsing happens in two passes. Syntax and type errors stop at the first
//! problem and carry a line and column; the semantic pass then collects
//! every violation it finds so a config can be fixed in one go.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use doclab::{Arch, GaussianProblem};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Store per-trial wall time. Off by default because timings make
    /// otherwise identical runs differ byte for byte.
    #[serde(default)]
    pub record_timing: bool,
    pub problem: ProblemConfig,
    pub arch: ArchConfig,
    pub doc: DocConfig,
    pub qn: QnConfig,
    #[serde(default)]
    pub volumes: Option<VolumesConfig>,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Gaussian {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_offset")]
        center_offset: f64,
        #[serde(default = "default_std")]
        class_std: f64,
        test_size: usize,
        /// Replace every label (training and test) with a coin flip.
        #[serde(default)]
        random_labels: bool,
    },
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        digits: [u8; 2],
        /// Per-digit cap on the training pool, taken in file order.
        train_per_class: usize,
        test_per_class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub layer_widths: Vec<usize>,
    #[serde(default = "default_leakiness")]
    pub leakiness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EminChoice {
    /// Bayes error of the problem; only available for synthetic problems.
    Analytic,
    /// Left edge of the lowest non-empty DOC bin.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocConfig {
    pub samples: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Defaults to `analytic` for Gaussian problems, `estimated` otherwise.
    #[serde(default)]
    pub e_min: Option<EminChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QnConfig {
    pub n_values: Vec<usize>,
    pub trials_per_n: usize,
    #[serde(default = "default_max_trials")]
    pub max_trials_each: u64,
    #[serde(default = "default_qn_epsilons")]
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumesConfig {
    pub n_values: Vec<usize>,
    pub training_sets: usize,
    pub probes: u64,
    #[serde(default = "default_qn_epsilons")]
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "default_bound_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_a_values")]
    pub a_values: Vec<f64>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Curves cover `n = 0..=n_max`; defaults to the largest `qn.n_values`.
    #[serde(default)]
    pub n_max: Option<usize>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            epsilons: default_bound_epsilons(),
            a_values: default_a_values(),
            gammas: default_gammas(),
            n_max: None,
        }
    }
}

fn default_workers() -> usize {
    1
}
fn default_dim() -> usize {
    10
}
fn default_offset() -> f64 {
    1.0
}
fn default_std() -> f64 {
    0.5
}
fn default_leakiness() -> f64 {
    0.1
}
fn default_bins() -> usize {
    doclab::doc::DEFAULT_BINS
}
fn default_max_trials() -> u64 {
    doclab::erm::DEFAULT_MAX_TRIALS
}
fn default_qn_epsilons() -> Vec<f64> {
    vec![0.2]
}
fn default_bound_epsilons() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}
fn default_a_values() -> Vec<f64> {
    vec![2.0]
}
fn default_gammas() -> Vec<f64> {
    vec![0.5]
}

#[derive(Debug)]
pub enum ConfigError {
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse { line, column, message } => {
                write!(f, "parse error at line {line}, column {column}: {}", message.trim_end())
            }
            ConfigError::Invalid(violations) => {
                write!(f, "{} violation(s):", violations.len())?;
                for v in violations {
                    write!(f, "\n  - {v}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

/// Reads, parses and validates a config file. Relative data paths are
/// resolved against the directory holding the file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::from_toml(&text, base)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let ProblemConfig::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut self.problem
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            v.push(format!("name {:?} must be a non-empty plain directory name", self.name));
        }
        if self.workers == 0 {
            v.push("workers must be ≥ 1".into());
        }
        let input_dim = match &self.problem {
            ProblemConfig::Gaussian {
                dim,
                center_offset,
                class_std,
                test_size,
                ..
            } => {
                if *dim == 0 {
                    v.push("problem.dim must be ≥ 1".into());
                }
                if !(*center_offset >= 0.0 && center_offset.is_finite()) {
                    v.push(format!(
                        "problem.center_offset must be finite and ≥ 0, got {center_offset}"
                    ));
                }
                if !(*class_std > 0.0 && class_std.is_finite()) {
                    v.push(format!("problem.class_std must be finite and > 0, got {class_std}"));
                }
                if *test_size == 0 {
                    v.push("problem.test_size must be ≥ 1".into());
                }
                Some(*dim)
            }
            ProblemConfig::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                digits,
                train_per_class,
                test_per_class,
            } => {
                for (key, p) in [
                    ("train_images", train_images),
                    ("train_labels", train_labels),
                    ("test_images", test_images),
                    ("test_labels", test_labels),
                ] {
                    if !p.is_file() {
                        v.push(format!("problem.{key}: file not found: {}", p.display()));
                    }
                }
                if digits[0] > 9 || digits[1] > 9 || digits[0] == digits[1] {
                    v.push(format!(
                        "problem.digits must be two distinct digits 0-9, got {digits:?}"
                    ));
                }
                if *train_per_class == 0 {
                    v.push("problem.train_per_class must be ≥ 1".into());
                }
                if *test_per_class == 0 {
                    v.push("problem.test_per_class must be ≥ 1".into());
                }
                None
            }
        };
        if let Err(e) = Arch::new(self.arch.layer_widths.clone(), self.arch.leakiness) {
            v.push(format!("arch: {e}"));
        }
        if let (Some(d), Some(&first)) = (input_dim, self.arch.layer_widths.first()) {
            if d != first {
                v.push(format!(
                    "arch.layer_widths[0] = {first} does not match problem.dim = {d}"
                ));
            }
        }
        if self.doc.samples == 0 {
            v.push("doc.samples must be ≥ 1".into());
        }
        if self.doc.bins < 2 {
            v.push("doc.bins must be ≥ 2".into());
        }
        if self.doc.e_min == Some(EminChoice::Analytic) && matches!(self.problem, ProblemConfig::Mnist { .. }) {
            v.push("doc.e_min = \"analytic\" needs a synthetic problem".into());
        }
        check_n_values("qn.n_values", &self.qn.n_values, &mut v);
        if self.qn.trials_per_n == 0 {
            v.push("qn.trials_per_n must be ≥ 1".into());
        }
        if self.qn.max_trials_each == 0 {
            v.push("qn.max_trials_each must be ≥ 1".into());
        }
        check_fractions("qn.epsilons", &self.qn.epsilons, &mut v);
        if let Some(vol) = &self.volumes {
            check_n_values("volumes.n_values", &vol.n_values, &mut v);
            if vol.training_sets == 0 {
                v.push("volumes.training_sets must be ≥ 1".into());
            }
            if vol.probes == 0 {
                v.push("volumes.probes must be ≥ 1".into());
            }
            check_fractions("volumes.epsilons", &vol.epsilons, &mut v);
        }
        check_fractions("bounds.epsilons", &self.bounds.epsilons, &mut v);
        for a in &self.bounds.a_values {
            if !(*a > 1.0 && a.is_finite()) {
                v.push(format!("bounds.a_values entries must be > 1, got {a}"));
            }
        }
        for g in &self.bounds.gammas {
            if !(*g > 0.0 && *g <= 1.0) {
                v.push(format!("bounds.gammas entries must lie in (0, 1], got {g}"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn arch(&self) -> Arch {
        Arch::new(self.arch.layer_widths.clone(), self.arch.leakiness).expect("validated")
    }

    pub fn gaussian_problem(&self) -> Option<GaussianProblem> {
        match self.problem {
            ProblemConfig::Gaussian {
                dim,
                center_offset,
                class_std,
                ..
            } => Some(GaussianProblem {
                dim,
                center_offset,
                class_std,
            }),
            ProblemConfig::Mnist { .. } => None,
        }
    }

    pub fn e_min_choice(&self) -> EminChoice {
        self.doc.e_min.unwrap_or(match self.problem {
            ProblemConfig::Gaussian { .. } => EminChoice::Analytic,
            ProblemConfig::Mnist { .. } => EminChoice::Estimated,
        })
    }

    pub fn bound_n_max(&self) -> usize {
        self.bounds
            .n_max
            .unwrap_or_else(|| self.qn.n_values.iter().copied().max().unwrap_or(0))
    }
}

fn check_n_values(key: &str, ns: &[usize], v: &mut Vec<String>) {
    if ns.is_empty() {
        v.push(format!("{key} must not be empty"));
    } else if ns.windows(2).any(|w| w[0] >= w[1]) {
        v.push(format!("{key} must be strictly ascending, got {ns:?}"));
    }
}

fn check_fractions(key: &str, xs: &[f64], v: &mut Vec<String>) {
    for x in xs {
        if !(*x > 0.0 && *x < 1.0) {
            v.push(format!("{key} entries must lie in (0, 1), got {x}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_GAUSSIAN: &str = r#"
name = "gaussian-shallow"
seed = 1

[problem]
kind = "gaussian"
dim = 10
center_offset = 1.0
class_std = 0.5
test_size = 10000

[arch]
layer_widths = [10, 10, 2]

[doc]
samples = 1000000

[qn]
n_values = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30]
trials_per_n = 1000
"#;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml(text, Path::new("."))
    }

    fn violations(text: &str) -> Vec<String> {
        match parse(text) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn full_protocol_config_is_valid() {
        let c = parse(PAPER_GAUSSIAN).unwrap();
        assert_eq!(c.arch().weight_count(), 120);
        assert_eq!(c.doc.bins, 100);
        assert_eq!(c.qn.max_trials_each, 10_000_000);
        assert_eq!(c.e_min_choice(), EminChoice::Analytic);
        assert_eq!(c.bound_n_max(), 30);
        assert!(c.volumes.is_none());
        assert_eq!(parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn zero_trials_is_reported() {
        let text = PAPER_GAUSSIAN.replace("trials_per_n = 1000", "trials_per_n = 0");
        assert_eq!(violations(&text), vec!["qn.trials_per_n must be ≥ 1"]);
    }

    #[test]
    fn all_violations_are_listed() {
        let text = PAPER_GAUSSIAN
            .replace("trials_per_n = 1000", "trials_per_n = 0")
            .replace("samples = 1000000", "samples = 0")
            .replace("[10, 10, 2]", "[9, 10, 3]")
            .replace("[2, 4, 6,", "[4, 2, 6,");
        let v = violations(&text);
        assert_eq!(v.len(), 5, "{v:#?}");
        assert!(v.iter().any(|s| s.starts_with("arch:")));
        assert!(v.iter().any(|s| s.contains("does not match problem.dim")));
        assert!(v
            .iter()
            .any(|s| s.starts_with("qn.n_values must be strictly ascending")));
    }

    #[test]
    fn missing_mnist_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a", "b", "c"] {
            fs::write(dir.path().join(f), b"").unwrap();
        }
        let text = r#"
name = "mnist"
seed = 3
[problem]
kind = "mnist"
train_images = "a"
train_labels = "b"
test_images = "c"
test_labels = "missing-labels"
digits = [1, 2]
train_per_class = 500
test_per_class = 400
[arch]
layer_widths = [784, 2]
[doc]
samples = 100
[qn]
n_values = [2]
trials_per_n = 5
"#;
        let v = match ExperimentConfig::from_toml(text, dir.path()) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("{other:?}"),
        };
        assert_eq!(v.len(), 1);
        assert!(v[0].starts_with("problem.test_labels: file not found"));
        assert!(v[0].contains("missing-labels"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = PAPER_GAUSSIAN.replace("seed = 1", "seed = \"one\"");
        match parse(&text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = PAPER_GAUSSIAN.replace("[doc]", "[doc]\nsampels = 3");
        match parse(&text) {
            Err(ConfigError::Parse { message, .. }) => assert!(message.contains("sampels"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn line_and_column() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
