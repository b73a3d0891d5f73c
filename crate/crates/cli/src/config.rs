//! Run configuration files (TOML, unknown keys rejected).

use std::path::{Path, PathBuf};

use plap::{DomainDescriptor, ProblemDescriptor, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Eval,
    Eigen,
    Solve,
    Verify,
    Study,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub grid: DomainDescriptor,
    pub problem: ProblemDescriptor,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub study: Option<StudyConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Cerami tolerance for `solve`; 1e-8 at `p = 2`, 1e-6 otherwise.
    #[serde(default)]
    pub cerami: Option<f64>,
    #[serde(default = "default_eigen_tol")]
    pub eigen: f64,
}

fn default_eigen_tol() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cerami: None,
            eigen: default_eigen_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Field CSV, relative to the configuration file.
    pub field: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    pub count: usize,
    pub starts: usize,
    pub max_iter: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            count: 3,
            starts: 8,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub path_nodes: usize,
    pub path_max_iter: usize,
    pub samples: usize,
    pub linking_max_iter: usize,
    pub rays: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            path_nodes: 41,
            path_max_iter: 3000,
            samples: 200,
            linking_max_iter: 2000,
            rays: 24,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub gradient_fields: usize,
    pub homogeneity_fields: usize,
    pub monotonicity_pairs: usize,
    pub cone_samples: usize,
    pub flip_fields: usize,
    pub anchor_nodes: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            gradient_fields: 100,
            homogeneity_fields: 100,
            monotonicity_pairs: 1000,
            cone_samples: 200,
            flip_fields: 100,
            anchor_nodes: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    /// Nodes per axis.
    Grid,
    /// Box side or circumference.
    Box,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyTask {
    Eigen,
    Solve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub task: StudyTask,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Builds the problem on the configured grid.
    pub fn spec(&self) -> Result<ProblemSpec<f64>, CliError> {
        ProblemSpec::from_descriptors(&self.problem, &self.grid)
            .map_err(|e| CliError::Config(format!("[problem]/[grid]: {e}")))
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Config(format!("{field}: {msg}")));
        self.spec()?;
        if let Some(c) = self.tolerances.cerami {
            if !(c > 0.0 && c.is_finite()) {
                return bad("tolerances.cerami", "must be positive");
            }
        }
        if !(self.tolerances.eigen > 0.0 && self.tolerances.eigen.is_finite()) {
            return bad("tolerances.eigen", "must be positive");
        }
        if self.eigen.count == 0 {
            return bad("eigen.count", "must be at least 1");
        }
        if self.eigen.starts == 0 {
            return bad("eigen.starts", "must be at least 1");
        }
        if self.solve.path_nodes < 3 {
            return bad("solve.path_nodes", "must be at least 3");
        }
        if self.solve.samples < 4 {
            return bad("solve.samples", "must be at least 4");
        }
        if self.solve.rays == 0 {
            return bad("solve.rays", "must be at least 1");
        }
        match self.command {
            Command::Eval if self.eval.is_none() => return bad("eval.field", "required by command eval"),
            Command::Study => {
                let Some(study) = &self.study else {
                    return bad("study", "required by command study");
                };
                if study.values.is_empty() {
                    return bad("study.values", "must not be empty");
                }
                for (k, _) in study.values.iter().enumerate() {
                    self.study_point(k)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The configuration of study point `k`, with the swept parameter set.
    pub fn study_point(&self, k: usize) -> Result<RunConfig, CliError> {
        let study = self
            .study
            .as_ref()
            .ok_or_else(|| CliError::Config("study: missing".into()))?;
        let value = study.values[k];
        let mut cfg = self.clone();
        cfg.study = None;
        cfg.command = match study.task {
            StudyTask::Eigen => Command::Eigen,
            StudyTask::Solve => Command::Solve,
        };
        match study.kind {
            StudyKind::Grid => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(CliError::Config(format!(
                        "study.values[{k}]: node count must be a positive integer, got {value}"
                    )));
                }
                cfg.grid.nodes = Some(plap::grid::PerAxis::Uniform(value as usize));
            }
            StudyKind::Box => cfg.grid.extent = Some(plap::grid::PerAxis::Uniform(value)),
            StudyKind::Lambda => cfg.problem.lambda = value,
        }
        cfg.spec()
            .map_err(|e| CliError::Config(format!("study.values[{k}] = {value}: {e}")))?;
        Ok(cfg)
    }
}
