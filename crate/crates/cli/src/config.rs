//! JSON configuration of every subcommand. All fields are optional; unknown
//! fields are rejected.

use std::path::{Path, PathBuf};

use ncm_core::cvstem::{CvstemConfig, Variant};
use ncm_core::experiments::{ControlConfig, ControllerMethod, EstimationConfig, EstimatorMethod};
use ncm_core::neural::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{require, CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Part A of the pipeline: trajectories, line searches and the θ dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// `lorenz`, `spacecraft` or `linear:<a>`.
    pub system: String,
    pub variant: Variant,
    /// Number of sampled trajectories `S`.
    pub trajectories: usize,
    /// Steps per trajectory `N`.
    pub steps: usize,
    pub dt: f64,
    /// RK4 substeps per sampling interval.
    pub substeps: usize,
    /// Uniform initial-condition box; `[-10, 10]` per state when absent.
    pub initial_box: Option<InitialBox>,
    /// Trajectory CSVs used instead of sampling (e.g. a plan).
    pub trajectory_files: Vec<PathBuf>,
    /// Log-spaced over `[0.1, 10]` when absent.
    pub alpha_grid: Option<Vec<f64>>,
    pub gamma_ratio: f64,
    pub lambda: f64,
    pub tol: f64,
    pub max_newton: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for SampleConfig {
    fn default() -> Self {
        let cv = CvstemConfig::default();
        SampleConfig {
            system: "lorenz".into(),
            variant: Variant::Estimator,
            trajectories: 10,
            steps: 50,
            dt: 0.1,
            substeps: 10,
            initial_box: None,
            trajectory_files: Vec::new(),
            alpha_grid: None,
            gamma_ratio: cv.gamma_ratio,
            lambda: cv.lambda,
            tol: cv.tol,
            max_newton: cv.max_newton,
            seed: 0,
            out: "runs/sample".into(),
        }
    }
}

impl SampleConfig {
    pub fn cvstem(&self) -> CvstemConfig {
        let d = CvstemConfig::default();
        CvstemConfig {
            variant: self.variant,
            alpha_grid: self.alpha_grid.clone().unwrap_or(d.alpha_grid),
            delta_t: self.dt,
            gamma_ratio: self.gamma_ratio,
            lambda: self.lambda,
            tol: self.tol,
            max_newton: self.max_newton,
            ..d
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.trajectory_files.is_empty() && (self.trajectories == 0 || self.steps == 0) {
            return Err(CliError::Config("trajectories and steps must be at least 1".into()));
        }
        for p in &self.trajectory_files {
            require("trajectory file", p)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub layers: Vec<usize>,
    pub hidden: Vec<usize>,
}

/// Part B of the pipeline: fit the recurrent model to a θ dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub dataset: PathBuf,
    pub train: TrainConfig,
    /// Architecture sweep; reports the final test loss of every cell.
    pub grid: Option<GridConfig>,
    pub out: PathBuf,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        TrainCommandConfig {
            dataset: "runs/sample/dataset.csv".into(),
            train: TrainConfig::default(),
            grid: None,
            out: "runs/train".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub system: String,
    pub estimation: EstimationConfig,
    pub methods: Vec<EstimatorMethod>,
    /// Trained model, needed by the `ncm` method.
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            system: "lorenz".into(),
            estimation: EstimationConfig::default(),
            methods: vec![EstimatorMethod::Cvstem, EstimatorMethod::Ekf],
            checkpoint: None,
            seed: 0,
            out: "runs/estimate".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub system: String,
    pub control: ControlConfig,
    pub out: PathBuf,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            system: "spacecraft".into(),
            control: ControlConfig::default(),
            out: "runs/plan".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlCommandConfig {
    pub system: String,
    pub control: ControlConfig,
    /// Output directory of `ncm plan`.
    pub design: PathBuf,
    pub methods: Vec<ControllerMethod>,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ControlCommandConfig {
    fn default() -> Self {
        ControlCommandConfig {
            system: "spacecraft".into(),
            control: ControlConfig::default(),
            design: "runs/plan".into(),
            methods: vec![ControllerMethod::Cvstem, ControllerMethod::Lqr],
            checkpoint: None,
            seed: 0,
            out: "runs/control".into(),
        }
    }
}

/// Reads `path`, or the defaults when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    require("config file", path)?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses a comma-separated `--method` list.
pub fn parse_methods<T: std::str::FromStr<Err = ncm_core::Error>>(list: &str) -> CliResult<Vec<T>> {
    let methods = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| CliError::Config(e.to_string())))
        .collect::<CliResult<Vec<T>>>()?;
    if methods.is_empty() {
        return Err(CliError::Config("--method needs at least one method".into()));
    }
    Ok(methods)
}
