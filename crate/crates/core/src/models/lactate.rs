//! Lactate biosynthesis in *E. coli* with light-inducible ATPase expression.
//!
//! Glucose `S`, biomass `X` and lactate `L` are in g/L; the ATPase level `E`
//! is in virtual units per gram of biomass. More ATPase raises substrate
//! uptake and lactate flux while suppressing growth.

use super::{hill, parameter_set, pos_pow, ModelError};
use crate::sim::{Dynamics, StateVector, Unit};

parameter_set! {
    /// Kinetic parameters; `k_LS` guards lactate maintenance flux under starvation.
    LactateParams {
        q_Smax, k_S, k_SV, n_1, m_S, k_XV, n_2, Y_XS, Y_LX, m_L,
        k_LS, k_LV, n_3, q_E0, q_Emax, k_l, n_4, k_d,
    }
}

impl LactateParams {
    pub fn nominal() -> Self {
        Self {
            q_Smax: 1.731,
            k_S: 5.340e-7,
            k_SV: 1.053e-6,
            n_1: 1.000e-2,
            m_S: 1.232e-6,
            k_XV: 2.605e-4,
            n_2: 1.028e-1,
            Y_XS: 1.083e-1,
            Y_LX: 2.204,
            m_L: 1.910,
            k_LS: 1.0e-10,
            k_LV: 10.02,
            n_3: 10.0,
            q_E0: 1.000e-6,
            q_Emax: 10.0,
            k_l: 3.729e2,
            n_4: 4.718,
            k_d: 0.988,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for name in Self::NAMES {
            let value = self.get(name).unwrap_or(f64::NAN);
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter {
                    name: name.to_string(),
                    value,
                    reason: "must be finite and > 0",
                });
            }
        }
        Ok(())
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LactateState {
    pub S: f64,
    pub X: f64,
    pub L: f64,
    pub E: f64,
}

impl LactateState {
    pub const LABELS: &'static [&'static str] = &["S", "X", "L", "E"];
    pub const UNITS: &'static [Unit] = &[
        Unit::GramsPerLiter,
        Unit::GramsPerLiter,
        Unit::GramsPerLiter,
        Unit::VirtualUnitsPerGram,
    ];
    pub const S: usize = 0;
    pub const X: usize = 1;
    pub const L: usize = 2;
    pub const E: usize = 3;

    pub fn nominal() -> Self {
        Self { S: 4.0, X: 0.075, L: 0.0, E: 0.0 }
    }

    /// Panics if `x` has fewer than four components.
    pub fn from_slice(x: &[f64]) -> Self {
        Self { S: x[0], X: x[1], L: x[2], E: x[3] }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.S, self.X, self.L, self.E]
    }

    pub fn to_state_vector(&self) -> StateVector {
        StateVector::new(self.to_array().to_vec(), Self::LABELS, Self::UNITS)
    }
}

/// Specific rates: uptake `q_s`, growth `mu`, lactate `q_l` (all per gram of
/// biomass per hour) and ATPase expression `q_e` (VU/(g·h)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LactateRates {
    pub q_s: f64,
    pub mu: f64,
    pub q_l: f64,
    pub q_e: f64,
}

pub fn lactate_rates(x: &LactateState, u: f64, p: &LactateParams) -> LactateRates {
    LactateModel::new(*p).rates(x.S, x.E, u)
}

pub fn lactate_rhs(x: &LactateState, u: f64, p: &LactateParams) -> LactateState {
    let mut dx = [0.0; 4];
    LactateModel::new(*p).derivative(&x.to_array(), u, &mut dx);
    LactateState::from_slice(&dx)
}

/// Parameter set with the constant Hill powers folded in.
#[derive(Debug, Clone)]
pub struct LactateModel {
    p: LactateParams,
    k_sv_pow: f64,
    k_xv_pow: f64,
    k_lv_pow: f64,
    k_l_pow: f64,
}

impl LactateModel {
    pub fn new(p: LactateParams) -> Self {
        Self {
            k_sv_pow: p.k_SV.powf(p.n_1),
            k_xv_pow: p.k_XV.powf(p.n_2),
            k_lv_pow: p.k_LV.powf(p.n_3),
            k_l_pow: p.k_l.powf(p.n_4),
            p,
        }
    }

    pub fn params(&self) -> &LactateParams {
        &self.p
    }

    #[inline]
    fn rates(&self, s: f64, e: f64, u: f64) -> LactateRates {
        let p = &self.p;
        // Solver stages may dip marginally below zero; Monod terms see the
        // non-negative part.
        let s = s.max(0.0);
        let q_s = p.q_Smax * (s / (s + p.k_S)) * (1.0 + hill(e, p.n_1, self.k_sv_pow));
        let mu = p.Y_XS * (q_s - p.m_S) * (1.0 - hill(e, p.n_2, self.k_xv_pow));
        let q_l = (p.Y_LX * mu + p.m_L * (s / (s + p.k_LS))) * (1.0 + hill(e, p.n_3, self.k_lv_pow));
        let un = pos_pow(u, p.n_4);
        let q_e = p.q_E0 + p.q_Emax * un / (un + self.k_l_pow);
        LactateRates { q_s, mu, q_l, q_e }
    }

    #[inline]
    fn derivative(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let r = self.rates(x[0], x[3], u);
        let biomass = x[1];
        dx[0] = -r.q_s * biomass;
        dx[1] = r.mu * biomass;
        dx[2] = r.q_l * biomass;
        dx[3] = r.q_e - self.p.k_d * x[3];
    }
}

impl Dynamics for LactateModel {
    fn dim(&self) -> usize {
        4
    }

    #[inline]
    fn rhs(&self, _t: f64, x: &[f64], u: f64, dx: &mut [f64]) {
        self.derivative(x, u, dx)
    }

    fn nonnegative(&self) -> bool {
        true
    }
}
