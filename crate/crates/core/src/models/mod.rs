//! Kinetic models of the two engineered production strains.
//!
//! [`fatty_acid`] couples ACC expression, LacI repression and cytotoxicity to
//! fatty-acid synthesis; [`lactate`] couples light-induced ATPase expression to
//! substrate uptake, growth and lactate formation. [`Model`] wraps either one
//! behind the [`Dynamics`](crate::sim::Dynamics) interface.

pub mod fatty_acid;
pub mod lactate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Dynamics, StateVector, Unit};

pub use fatty_acid::{FattyAcidModel, FattyAcidParams, FattyAcidState};
pub use lactate::{LactateModel, LactateParams, LactateRates, LactateState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParameter { name: String, value: f64, reason: &'static str },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("expected {expected} state values, got {got}")]
    StateLength { expected: usize, got: usize },
}

/// `x^n` for the Hill terms, with every non-positive base mapped to 0 so that
/// fractional exponents are well defined and Hill factors take their base value
/// at zero.
#[inline]
pub(crate) fn pos_pow(x: f64, n: f64) -> f64 {
    if x > 0.0 {
        x.powf(n)
    } else {
        0.0
    }
}

/// `x^n / (x^n + k^n)` given a precomputed `k^n`.
#[inline]
pub(crate) fn hill(x: f64, n: f64, k_pow_n: f64) -> f64 {
    let xn = pos_pow(x, n);
    xn / (xn + k_pow_n)
}

/// Declares a flat parameter record with name-based access.
macro_rules! parameter_set {
    ($(#[$meta:meta])* $name:ident { $($field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[allow(non_snake_case)]
        #[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(pub $field: f64,)*
        }

        impl $name {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn get(&self, name: &str) -> Option<f64> {
                match name {
                    $(stringify!($field) => Some(self.$field),)*
                    _ => None,
                }
            }

            pub fn set(&mut self, name: &str, value: f64) -> Result<(), $crate::models::ModelError> {
                match name {
                    $(stringify!($field) => { self.$field = value; Ok(()) })*
                    _ => Err($crate::models::ModelError::UnknownParameter(name.to_string())),
                }
            }
        }
    };
}
pub(crate) use parameter_set;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FattyAcid,
    Lactate,
}

impl ModelKind {
    pub fn state_labels(self) -> &'static [&'static str] {
        match self {
            ModelKind::FattyAcid => FattyAcidState::LABELS,
            ModelKind::Lactate => LactateState::LABELS,
        }
    }

    pub fn state_units(self) -> &'static [Unit] {
        match self {
            ModelKind::FattyAcid => FattyAcidState::UNITS,
            ModelKind::Lactate => LactateState::UNITS,
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::FattyAcid => FattyAcidParams::NAMES,
            ModelKind::Lactate => LactateParams::NAMES,
        }
    }

    pub fn nominal(self) -> ModelParams {
        match self {
            ModelKind::FattyAcid => ModelParams::FattyAcid(FattyAcidParams::nominal()),
            ModelKind::Lactate => ModelParams::Lactate(LactateParams::nominal()),
        }
    }

    pub fn nominal_initial_state(self) -> StateVector {
        match self {
            ModelKind::FattyAcid => FattyAcidState::nominal().to_state_vector(),
            ModelKind::Lactate => LactateState::nominal().to_state_vector(),
        }
    }

    /// Label of the product state whose final value is the reported titer.
    pub fn product_label(self) -> &'static str {
        match self {
            ModelKind::FattyAcid => "Pstar",
            ModelKind::Lactate => "L",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::FattyAcid => "fatty_acid",
            ModelKind::Lactate => "lactate",
        }
    }
}

/// Kinetic parameter set of either model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParams {
    FattyAcid(FattyAcidParams),
    Lactate(LactateParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::FattyAcid(_) => ModelKind::FattyAcid,
            ModelParams::Lactate(_) => ModelKind::Lactate,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match self {
            ModelParams::FattyAcid(p) => p.get(name),
            ModelParams::Lactate(p) => p.get(name),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        match self {
            ModelParams::FattyAcid(p) => p.set(name, value),
            ModelParams::Lactate(p) => p.set(name, value),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ModelParams::FattyAcid(p) => p.validate(),
            ModelParams::Lactate(p) => p.validate(),
        }
    }
}

/// A parameterised model ready for integration.
#[derive(Debug, Clone)]
pub enum Model {
    FattyAcid(FattyAcidModel),
    Lactate(LactateModel),
}

impl Model {
    pub fn new(params: ModelParams) -> Self {
        match params {
            ModelParams::FattyAcid(p) => Model::FattyAcid(FattyAcidModel::new(p)),
            ModelParams::Lactate(p) => Model::Lactate(LactateModel::new(p)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::FattyAcid(_) => ModelKind::FattyAcid,
            Model::Lactate(_) => ModelKind::Lactate,
        }
    }

    pub fn params(&self) -> ModelParams {
        match self {
            Model::FattyAcid(m) => ModelParams::FattyAcid(*m.params()),
            Model::Lactate(m) => ModelParams::Lactate(*m.params()),
        }
    }

    /// Final product titer in g/L for a state of this model.
    pub fn product_titer(&self, x: &[f64]) -> f64 {
        match self {
            Model::FattyAcid(m) => m.params().H_P * x[FattyAcidState::PSTAR],
            Model::Lactate(_) => x[LactateState::L],
        }
    }

    /// Measured quantities appended to simulation output, as (label, value).
    pub fn measurements(&self, x: &[f64]) -> Vec<(&'static str, f64)> {
        match self {
            Model::FattyAcid(m) => {
                let (xm, pm) = fatty_acid::fatty_acid_measure(&FattyAcidState::from_slice(x), m.params());
                vec![("X", xm), ("P", pm)]
            }
            Model::Lactate(_) => Vec::new(),
        }
    }
}

impl Dynamics for Model {
    fn dim(&self) -> usize {
        match self {
            Model::FattyAcid(m) => m.dim(),
            Model::Lactate(m) => m.dim(),
        }
    }

    #[inline]
    fn rhs(&self, t: f64, x: &[f64], u: f64, dx: &mut [f64]) {
        match self {
            Model::FattyAcid(m) => m.rhs(t, x, u, dx),
            Model::Lactate(m) => m.rhs(t, x, u, dx),
        }
    }

    fn nonnegative(&self) -> bool {
        true
    }
}
