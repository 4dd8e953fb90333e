//! Scenario configuration: one JSON document describing a full experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use metctl_core::env::{default_switch_index, generate_reference, BioprocessEnv, Objective, ReferenceTrajectory};
use metctl_core::models::{LactateState, ModelKind};
use metctl_core::reinforce::{OptimizerKind, TrainConfig};
use metctl_core::sim::{IntegratorConfig, StateVector};
use metctl_core::UncertaintySpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    TerminalTiter,
    Tracking,
}

/// Where the enzyme reference of a tracking scenario comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Open-loop rollout: no light before `switch_index`, full light from it on.
    Generated { switch_index: usize },
    /// A `time_h,e_ref` CSV; relative paths resolve against the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    pub horizon_h: f64,
    pub n_intervals: usize,
    pub input_bounds: (f64, f64),
    pub return_kind: ReturnKind,
    pub uncertainty: UncertaintySpec,
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Static-control input; defaults to 40 (fatty acid) or 873 (lactate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_input: Option<f64>,
    /// Overrides of nominal kinetic parameters by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    /// Overrides of nominal initial conditions by state label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_state: BTreeMap<String, f64>,
}

/// A parsed configuration together with the directory relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    /// Default experiment for `kind` with the published training settings.
    pub fn preset(kind: ModelKind) -> Self {
        let (horizon_h, n_intervals, input_bounds, return_kind, reference, epochs_max, learning_rate) = match kind {
            ModelKind::FattyAcid => (25.0, 25, (0.0, 1000.0), ReturnKind::TerminalTiter, None, 350, 0.0075),
            ModelKind::Lactate => (
                9.5,
                11,
                (0.0, 873.0),
                ReturnKind::Tracking,
                Some(ReferenceSpec::Generated { switch_index: default_switch_index(11) }),
                500,
                0.001,
            ),
        };
        Self {
            model: kind,
            horizon_h,
            n_intervals,
            input_bounds,
            return_kind,
            uncertainty: UncertaintySpec::default_for(kind, 0.0),
            train: TrainConfig {
                epochs_max,
                episodes_per_epoch: 500,
                learning_rate,
                patience: 50,
                eps_mach: 1e-8,
                seed: 0,
                optimizer: OptimizerKind::default(),
                workers: 1,
            },
            reference,
            integrator: IntegratorConfig::default(),
            baseline_input: None,
            parameters: BTreeMap::new(),
            initial_state: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingArtifact(format!("config {}", path.display())),
            _ => CliError::Config(format!("cannot read config {}: {e}", path.display())),
        })?;
        let config = Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn baseline_input(&self) -> f64 {
        self.baseline_input.unwrap_or(match self.model {
            ModelKind::FattyAcid => 40.0,
            ModelKind::Lactate => 873.0,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.horizon_h.is_finite() && self.horizon_h > 0.0) {
            return bad(format!("horizon_h must be > 0, got {}", self.horizon_h));
        }
        if self.n_intervals == 0 {
            return bad("n_intervals must be at least 1".into());
        }
        let (lb, ub) = self.input_bounds;
        if !(lb.is_finite() && ub.is_finite() && lb < ub) {
            return bad(format!("input_bounds must satisfy lb < ub, got [{lb}, {ub}]"));
        }
        if lb < 0.0 {
            return bad("input_bounds must be non-negative".into());
        }
        let u0 = self.baseline_input();
        if !(lb..=ub).contains(&u0) {
            return bad(format!("baseline_input {u0} lies outside input_bounds"));
        }
        match (self.return_kind, self.model, &self.reference) {
            (ReturnKind::Tracking, ModelKind::FattyAcid, _) => {
                return bad("return_kind `tracking` requires the lactate model".into())
            }
            (ReturnKind::TerminalTiter, _, Some(_)) => {
                return bad("`reference` is only meaningful with return_kind `tracking`".into())
            }
            (_, _, Some(ReferenceSpec::Generated { switch_index })) if *switch_index > self.n_intervals => {
                return bad(format!("switch_index {switch_index} exceeds n_intervals {}", self.n_intervals))
            }
            _ => {}
        }
        self.uncertainty.validate(self.model).map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        self.integrator.validate().map_err(|e| CliError::Config(format!("integrator: {e}")))?;
        self.model_params()?;
        self.initial_state_vector()?;
        Ok(())
    }

    pub fn model_params(&self) -> Result<metctl_core::ModelParams, CliError> {
        let mut p = self.model.nominal();
        for (name, value) in &self.parameters {
            p.set(name, *value).map_err(|e| CliError::Config(format!("parameters: {e}")))?;
        }
        p.validate().map_err(|e| CliError::Config(format!("parameters: {e}")))?;
        Ok(p)
    }

    pub fn initial_state_vector(&self) -> Result<StateVector, CliError> {
        let mut x = self.model.nominal_initial_state();
        for (label, value) in &self.initial_state {
            let i = x
                .labels()
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| CliError::Config(format!("initial_state: unknown state `{label}`")))?;
            if !(value.is_finite() && *value >= 0.0) {
                return Err(CliError::Config(format!("initial_state: `{label}` must be finite and >= 0")));
            }
            x.values_mut()[i] = *value;
        }
        Ok(x)
    }

    /// Switch index used when generating the reference.
    pub fn switch_index(&self) -> usize {
        match &self.reference {
            Some(ReferenceSpec::Generated { switch_index }) => *switch_index,
            _ => default_switch_index(self.n_intervals),
        }
    }

    /// Generates the open-loop enzyme reference from the deterministic model.
    pub fn generated_reference(&self, switch_index: usize) -> Result<ReferenceTrajectory, CliError> {
        if self.model != ModelKind::Lactate {
            return Err(CliError::Config("reference trajectories are defined for the lactate model".into()));
        }
        if switch_index > self.n_intervals {
            return Err(CliError::Config(format!(
                "switch_index {switch_index} exceeds n_intervals {}",
                self.n_intervals
            )));
        }
        let params = match self.model_params()? {
            metctl_core::ModelParams::Lactate(p) => p,
            _ => unreachable!("model kind checked above"),
        };
        let x0 = LactateState::from_slice(self.initial_state_vector()?.values());
        generate_reference(
            &params,
            &x0,
            self.horizon_h,
            self.n_intervals,
            self.input_bounds,
            switch_index,
            &self.integrator,
        )
        .map_err(CliError::from_env)
    }

    fn objective(&self, base_dir: &Path) -> Result<Objective, CliError> {
        Ok(match self.return_kind {
            ReturnKind::TerminalTiter => Objective::TerminalTiter,
            ReturnKind::Tracking => match &self.reference {
                Some(ReferenceSpec::File { path }) => {
                    let path = base_dir.join(path);
                    if !path.exists() {
                        return Err(CliError::MissingArtifact(format!("reference file {}", path.display())));
                    }
                    Objective::Tracking(ReferenceTrajectory::read_csv(&path).map_err(|e| {
                        CliError::Config(format!("reference file {}: {e}", path.display()))
                    })?)
                }
                _ => Objective::Tracking(self.generated_reference(self.switch_index())?),
            },
        })
    }

    /// Builds the environment at uncertainty `level`.
    pub fn build_env(&self, base_dir: &Path, level: f64) -> Result<BioprocessEnv, CliError> {
        let uncertainty = UncertaintySpec { level, ..self.uncertainty.clone() };
        BioprocessEnv::new(
            self.model_params()?,
            self.initial_state_vector()?,
            uncertainty,
            self.horizon_h,
            self.n_intervals,
            self.input_bounds,
            self.objective(base_dir)?,
            self.integrator,
        )
        .map_err(|e| match e {
            metctl_core::EnvError::BreakpointMismatch => {
                CliError::Config("reference breakpoints do not match the scenario's control grid".into())
            }
            other => CliError::from_env(other),
        })
    }
}
