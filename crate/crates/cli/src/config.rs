//! Scenario configuration: flat key-value files with `#` comments, merged
//! with command-line flags (flags win). Every numeric field is validated
//! against the preconditions of the operations it feeds before any solve
//! starts, so bad configs fail fast with the offending field named.

use std::fmt;
use std::path::{Path, PathBuf};

use nmpc::dynamics::{self, SyncGenParams};
use nmpc::mpc_loop::Algorithm;
use nmpc::ocp::SolveOptions;
use nmpc::ControlSystem;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum SystemKind {
    SyncGen,
    LinearScalar { a: f64, b: f64, q: f64, r: f64 },
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemKind::SyncGen => write!(f, "syncgen"),
            SystemKind::LinearScalar { a, b, q, r } => {
                write!(f, "linear_scalar(a={a}, b={b}, q={q}, r={r})")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub system: SystemKind,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub alpha_bar: f64,
    pub algorithm: Algorithm,
    pub steps: usize,
    /// Sampling period of the generator benchmark.
    pub sampling: f64,
    /// Control weight of the generator stage cost.
    pub lambda: f64,
    /// RK4 substeps per sampling period.
    pub substeps: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub output: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::SyncGen,
            x0: Vec::new(), // filled per system on finalize
            horizon: 30,
            alpha_bar: 0.1,
            algorithm: Algorithm::Basic,
            steps: 100,
            sampling: 0.1,
            lambda: 1e-6,
            substeps: 10,
            grad_tol: 1e-8,
            max_iter: 500,
            output: PathBuf::from("run.csv"),
        }
    }
}

/// Raw, partially specified configuration prior to merging.
#[derive(Clone, Debug, Default)]
pub struct PartialConfig {
    pub system: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<usize>,
    pub alpha_bar: Option<f64>,
    pub algorithm: Option<String>,
    pub steps: Option<usize>,
    pub sampling: Option<f64>,
    pub lambda: Option<f64>,
    pub substeps: Option<usize>,
    pub grad_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub output: Option<PathBuf>,
}

impl PartialConfig {
    /// Later values win; used to layer flags over a config file.
    pub fn overlaid_with(mut self, other: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            system, a, b, q, r, x0, horizon, alpha_bar, algorithm, steps, sampling, lambda,
            substeps, grad_tol, max_iter, output
        );
        self
    }

    pub fn from_file(path: &Path) -> Result<PartialConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = PartialConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value).map_err(|msg| {
                CliError::usage(format!("{}:{}: {msg}", path.display(), lineno + 1))
            })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("field {key}: cannot parse {value:?}"))
        }
        match key {
            "system" => self.system = Some(value.to_string()),
            "a" => self.a = Some(num(key, value)?),
            "b" => self.b = Some(num(key, value)?),
            "q" => self.q = Some(num(key, value)?),
            "r" => self.r = Some(num(key, value)?),
            "x0" => self.x0 = Some(parse_vector(value).map_err(|e| format!("field x0: {e}"))?),
            "N" => self.horizon = Some(num(key, value)?),
            "alpha_bar" => self.alpha_bar = Some(num(key, value)?),
            "algorithm" => self.algorithm = Some(value.to_string()),
            "steps" => self.steps = Some(num(key, value)?),
            "T" => self.sampling = Some(num(key, value)?),
            "lambda" => self.lambda = Some(num(key, value)?),
            "substeps" => self.substeps = Some(num(key, value)?),
            "grad_tol" => self.grad_tol = Some(num(key, value)?),
            "max_iter" => self.max_iter = Some(num(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            other => return Err(format!("unknown field {other}")),
        }
        Ok(())
    }

    /// Validate and fill defaults.
    pub fn finalize(self) -> Result<ScenarioConfig, CliError> {
        let defaults = ScenarioConfig::default();
        let system = match self.system.as_deref().unwrap_or("syncgen") {
            "syncgen" => {
                for (name, set) in [("a", &self.a), ("b", &self.b), ("q", &self.q), ("r", &self.r)]
                {
                    if set.is_some() {
                        return Err(CliError::usage(format!(
                            "field {name} only applies to system = linear_scalar"
                        )));
                    }
                }
                SystemKind::SyncGen
            }
            "linear_scalar" => SystemKind::LinearScalar {
                a: self.a.unwrap_or(2.0),
                b: self.b.unwrap_or(1.0),
                q: self.q.unwrap_or(1.0),
                r: self.r.unwrap_or(1.0),
            },
            other => {
                return Err(CliError::usage(format!(
                    "field system: expected syncgen or linear_scalar, got {other:?}"
                )))
            }
        };
        let x0 = match self.x0 {
            Some(v) => v,
            None => match system {
                SystemKind::SyncGen => vec![1.02, 0.1, 1.014],
                SystemKind::LinearScalar { .. } => vec![1.0],
            },
        };
        let algorithm = match self.algorithm.as_deref().unwrap_or("basic") {
            "classical" => Algorithm::Classical,
            "basic" => Algorithm::Basic,
            "update_a" => Algorithm::UpdateA,
            "update_b" => Algorithm::UpdateB,
            other => {
                return Err(CliError::usage(format!(
                    "field algorithm: expected classical, basic, update_a or update_b, got {other:?}"
                )))
            }
        };

        let cfg = ScenarioConfig {
            system,
            x0,
            horizon: self.horizon.unwrap_or(defaults.horizon),
            alpha_bar: self.alpha_bar.unwrap_or(defaults.alpha_bar),
            algorithm,
            steps: self.steps.unwrap_or(defaults.steps),
            sampling: self.sampling.unwrap_or(defaults.sampling),
            lambda: self.lambda.unwrap_or(defaults.lambda),
            substeps: self.substeps.unwrap_or(defaults.substeps),
            grad_tol: self.grad_tol.unwrap_or(defaults.grad_tol),
            max_iter: self.max_iter.unwrap_or(defaults.max_iter),
            output: self.output.unwrap_or(defaults.output),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("cannot parse component {t:?}"))
        })
        .collect()
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let state_dim = match self.system {
            SystemKind::SyncGen => 3,
            SystemKind::LinearScalar { b, q, r, .. } => {
                if b == 0.0 {
                    return Err(CliError::usage("field b: must be nonzero"));
                }
                if q <= 0.0 || r <= 0.0 {
                    return Err(CliError::usage("fields q, r: must be positive"));
                }
                1
            }
        };
        if self.x0.len() != state_dim {
            return Err(CliError::usage(format!(
                "field x0: expected {state_dim} components, got {}",
                self.x0.len()
            )));
        }
        if !self.x0.iter().all(|v| v.is_finite()) {
            return Err(CliError::usage("field x0: components must be finite"));
        }
        if self.horizon < 2 {
            return Err(CliError::usage("field N: must be at least 2"));
        }
        if !(self.alpha_bar > 0.0 && self.alpha_bar < 1.0) {
            return Err(CliError::usage("field alpha_bar: must lie in (0, 1)"));
        }
        if self.steps == 0 {
            return Err(CliError::usage("field steps: must be at least 1"));
        }
        if !(self.sampling > 0.0) {
            return Err(CliError::usage("field T: must be positive"));
        }
        if self.lambda < 0.0 {
            return Err(CliError::usage("field lambda: must be nonnegative"));
        }
        if self.substeps == 0 {
            return Err(CliError::usage("field substeps: must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(CliError::usage("field grad_tol: must be positive"));
        }
        if self.max_iter == 0 {
            return Err(CliError::usage("field max_iter: must be at least 1"));
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<ControlSystem, CliError> {
        let sys = match self.system {
            SystemKind::SyncGen => {
                dynamics::sync_generator_with(&SyncGenParams::default(), self.sampling, self.lambda)
                    .and_then(|s| s.with_substeps(self.substeps))
            }
            SystemKind::LinearScalar { a, b, q, r } => dynamics::make_linear_scalar(a, b, q, r),
        };
        sys.map_err(|e| CliError::usage(format!("system construction failed: {e}")))
    }

    pub fn solve_options(&self) -> SolveOptions<f64> {
        SolveOptions {
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
            ..SolveOptions::default()
        }
    }

    /// Output path with the `NMPC_OUTPUT_DIR` override applied to relative
    /// paths.
    pub fn resolved_output(&self) -> PathBuf {
        match std::env::var_os("NMPC_OUTPUT_DIR") {
            Some(dir) if self.output.is_relative() => PathBuf::from(dir).join(&self.output),
            _ => self.output.clone(),
        }
    }
}
