//! Experiment configuration: a JSON document with unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use aae_core::estimation::Backend;
use aae_core::quadrature::MAX_RULE_ORDER;
use aae_core::toys::TOY_PATHS;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Aae,
    Operator,
    EnergyDiff,
    Sweep,
    Weights,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Aae => "aae",
            Mode::Operator => "operator",
            Mode::EnergyDiff => "energy-diff",
            Mode::Sweep => "sweep",
            Mode::Weights => "weights",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Qpe,
    Exact,
}

impl BackendTag {
    pub fn backend(self) -> Backend {
        match self {
            BackendTag::Qpe => Backend::Qpe,
            BackendTag::Exact => Backend::ExactSubspace,
        }
    }
}

/// Estimator used by `mode = "aae"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Aae,
    Standard,
    Classical,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Aae => "aae",
            Method::Standard => "standard",
            Method::Classical => "classical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSpec {
    One(u32),
    Many(Vec<u32>),
}

impl MuSpec {
    pub fn values(&self) -> Vec<u32> {
        match self {
            MuSpec::One(m) => vec![*m],
            MuSpec::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// `single-qubit` or `random` for aae mode, `random` for operator mode,
    /// a toy path id for energy-diff mode.
    pub builtin: Option<String>,
    pub qubits: Option<usize>,
    pub rank: Option<usize>,
    pub probability: Option<f64>,
    pub orbitals: Option<usize>,
    pub hamiltonian_file: Option<PathBuf>,
    pub operator_file: Option<PathBuf>,
    /// Seed for random builtin instances; defaults to the run seed.
    pub instance_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub mu: Option<MuSpec>,
    pub upper_bound: Option<f64>,
    /// JSON array with one list of `[projector index, value]` pairs per group.
    pub classical_file: Option<PathBuf>,
    /// Projectors with exact expectation above this are treated as known
    /// classically when priors are derived by exact diagonalization.
    pub classical_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_failure")]
    pub failure: f64,
    #[serde(default)]
    pub backend: Option<BackendTag>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub method: Option<Method>,
    /// Sweep grid of target errors.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// Repetitions of every sweep point.
    #[serde(default)]
    pub trials: Option<u32>,
    /// Newton-Cotes order for weights mode.
    #[serde(default)]
    pub rule_order: Option<usize>,
}

fn default_failure() -> f64 {
    0.05
}

/// A configuration problem located by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Parse a config document. Errors carry the path of the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, FieldError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path.is_empty() || path == "." { "<root>".to_string() } else { path };
        FieldError::new(&path, e.into_inner().to_string())
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, FieldError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FieldError::new("--config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn experiment_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.mode.as_str().to_string())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn backend_tag(&self) -> BackendTag {
        self.backend.unwrap_or(BackendTag::Qpe)
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::Aae)
    }

    /// Resolve a referenced file against the config's directory.
    pub fn resolve(&self, base: &Path, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            base.join(file)
        }
    }

    /// Check mode-required fields, value ranges and file references.
    pub fn validate(&self, base: &Path) -> Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                errs.push(FieldError::new("epsilon", format!("must be positive, got {e}")));
            }
        }
        if !(self.failure > 0.0 && self.failure < 1.0) {
            errs.push(FieldError::new("failure", format!("must lie in (0, 1), got {}", self.failure)));
        }
        if let Some(grid) = &self.grid {
            for (i, e) in grid.iter().enumerate() {
                if !(*e > 0.0 && e.is_finite()) {
                    errs.push(FieldError::new(&format!("grid[{i}]"), format!("must be positive, got {e}")));
                }
            }
        }
        for (name, file) in [
            ("system.hamiltonian_file", &self.system.hamiltonian_file),
            ("system.operator_file", &self.system.operator_file),
            ("prior.classical_file", &self.prior.classical_file),
        ] {
            if let Some(f) = file {
                let p = self.resolve(base, f);
                if !p.is_file() {
                    errs.push(FieldError::new(name, format!("file not found: {}", p.display())));
                }
            }
        }
        if let Some(t) = self.prior.classical_threshold {
            if !(0.0..=1.0).contains(&t) {
                errs.push(FieldError::new("prior.classical_threshold", format!("must lie in [0, 1], got {t}")));
            }
        }
        let need_epsilon = |errs: &mut Vec<FieldError>| {
            if self.epsilon.is_none() {
                errs.push(FieldError::new("epsilon", format!("required for mode {}", self.mode)));
            }
        };
        match self.mode {
            Mode::Aae => {
                need_epsilon(&mut errs);
                self.validate_aae(&mut errs);
            }
            Mode::Operator => {
                need_epsilon(&mut errs);
                self.validate_operator(&mut errs);
            }
            Mode::EnergyDiff => {
                need_epsilon(&mut errs);
                match self.system.builtin.as_deref() {
                    Some(id) if TOY_PATHS.contains(&id) => {}
                    Some(id) => errs.push(FieldError::new(
                        "system.builtin",
                        format!("unknown path {id:?}; available: {}", TOY_PATHS.join(", ")),
                    )),
                    None => errs.push(FieldError::new("system.builtin", "required for mode energy-diff")),
                }
            }
            Mode::Sweep => match &self.grid {
                Some(g) if !g.is_empty() => {}
                Some(_) => errs.push(FieldError::new("grid", "must not be empty")),
                None => errs.push(FieldError::new("grid", "required for mode sweep")),
            },
            Mode::Weights => match self.rule_order {
                Some(n) if (1..=MAX_RULE_ORDER).contains(&n) && n % 2 == 1 => {}
                Some(n) => errs.push(FieldError::new(
                    "rule_order",
                    format!("must be odd and in 1..={MAX_RULE_ORDER}, got {n}"),
                )),
                None => errs.push(FieldError::new("rule_order", "required for mode weights")),
            },
        }
        if let Some(0) = self.trials {
            errs.push(FieldError::new("trials", "must be at least 1"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    fn validate_aae(&self, errs: &mut Vec<FieldError>) {
        let sys = &self.system;
        match sys.builtin.as_deref() {
            Some("single-qubit") => {}
            Some("random") => match sys.qubits {
                Some(n) if (1..=8).contains(&n) => {
                    if let Some(r) = sys.rank {
                        if r == 0 || r >= 1 << n {
                            errs.push(FieldError::new("system.rank", format!("must lie in 1..{}", 1 << n)));
                        }
                    }
                }
                Some(n) => errs.push(FieldError::new("system.qubits", format!("must lie in 1..=8, got {n}"))),
                None => errs.push(FieldError::new("system.qubits", "required for builtin random")),
            },
            Some(other) => errs.push(FieldError::new(
                "system.builtin",
                format!("unknown instance {other:?}; available: single-qubit, random"),
            )),
            None => errs.push(FieldError::new("system.builtin", "required for mode aae")),
        }
        match sys.probability {
            Some(p) if (0.0..=1.0).contains(&p) => {}
            Some(p) => errs.push(FieldError::new("system.probability", format!("must lie in [0, 1], got {p}"))),
            None => errs.push(FieldError::new("system.probability", "required for mode aae")),
        }
        if self.method() == Method::Aae {
            match (&self.prior.mu, self.prior.upper_bound) {
                (Some(MuSpec::One(_)), None) | (None, Some(_)) => {}
                (Some(MuSpec::Many(_)), None) => {
                    errs.push(FieldError::new("prior.mu", "mode aae takes a single value"))
                }
                (Some(_), Some(_)) => errs.push(FieldError::new("prior", "give either mu or upper_bound, not both")),
                (None, None) => errs.push(FieldError::new("prior.mu", "required for method aae (or prior.upper_bound)")),
            }
            if let Some(b) = self.prior.upper_bound {
                if !(b > 0.0 && b <= 0.25) {
                    errs.push(FieldError::new("prior.upper_bound", format!("must lie in (0, 1/4], got {b}")));
                }
            }
        }
    }

    fn validate_operator(&self, errs: &mut Vec<FieldError>) {
        let sys = &self.system;
        let files = (sys.hamiltonian_file.is_some(), sys.operator_file.is_some());
        match (sys.builtin.as_deref(), files) {
            (None, (true, true)) => {}
            (None, (true, false)) => errs.push(FieldError::new("system.operator_file", "required with system.hamiltonian_file")),
            (None, (false, true)) => errs.push(FieldError::new("system.hamiltonian_file", "required with system.operator_file")),
            (None, (false, false)) => errs.push(FieldError::new(
                "system",
                "mode operator needs builtin random or hamiltonian_file and operator_file",
            )),
            (Some("random"), (false, false)) => match sys.orbitals {
                Some(n) if (1..=8).contains(&n) => {}
                Some(n) => errs.push(FieldError::new("system.orbitals", format!("must lie in 1..=8, got {n}"))),
                None => errs.push(FieldError::new("system.orbitals", "required for builtin random")),
            },
            (Some("random"), _) => errs.push(FieldError::new("system", "builtin random does not take operator files")),
            (Some(other), _) => errs.push(FieldError::new(
                "system.builtin",
                format!("unknown instance {other:?}; available: random"),
            )),
        }
        if self.prior.classical_file.is_some() && self.prior.mu.is_none() {
            errs.push(FieldError::new("prior.mu", "required with prior.classical_file"));
        }
    }
}
