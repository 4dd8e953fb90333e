//! Fatty-acid biosynthesis in *E. coli* with inducible ACC expression.
//!
//! States are normalised and dimensionless: glucose `S`, biomass `X*`, ACC
//! `E`, malonyl-CoA `M`, LacI `R` and fatty acid `P*`. The inducer relieves
//! LacI repression of ACC; ACC above a threshold is toxic to growth (`T_X`) and
//! to product formation (`T_P`).

use super::{hill, parameter_set, pos_pow, ModelError};
use crate::sim::{Dynamics, StateVector, Unit};

parameter_set! {
    /// Kinetic and measurement parameters. Rates in 1/h, `K_I` in µM, `H_P`
    /// in g/L, everything else dimensionless.
    FattyAcidParams {
        k_X, k_E, k_M, k_P, k_R1, mu_d, T_Xmax, E_tox, d_E, d_R,
        K_TX, K_TP, K_R0, K_I, K_SP, n_TX, n_TP, n_R, n_I, H_X, H_P,
    }
}

impl FattyAcidParams {
    pub fn nominal() -> Self {
        Self {
            k_X: 0.4639,
            k_E: 0.6088,
            k_M: 0.4314,
            k_P: 0.4314,
            k_R1: 17.77,
            mu_d: 0.00763,
            T_Xmax: 0.5081,
            E_tox: 1.0,
            d_E: 0.1131,
            d_R: 1.386,
            K_TX: 0.4587,
            K_TP: 0.3445,
            K_R0: 1.0,
            K_I: 17.61,
            K_SP: 0.01397,
            n_TX: 2.798,
            n_TP: 1.137,
            n_R: 0.5576,
            n_I: 1.034,
            H_X: 1.688,
            H_P: 0.4843,
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
        if self.T_Xmax >= 1.0 {
            return Err(ModelError::InvalidParameter {
                name: "T_Xmax".into(),
                value: self.T_Xmax,
                reason: "must be < 1",
            });
        }
        Ok(())
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FattyAcidState {
    pub S: f64,
    pub Xstar: f64,
    pub E: f64,
    pub M: f64,
    pub R: f64,
    pub Pstar: f64,
}

impl FattyAcidState {
    pub const LABELS: &'static [&'static str] = &["S", "Xstar", "E", "M", "R", "Pstar"];
    pub const UNITS: &'static [Unit] = &[Unit::Dimensionless; 6];
    pub const S: usize = 0;
    pub const XSTAR: usize = 1;
    pub const E: usize = 2;
    pub const M: usize = 3;
    pub const R: usize = 4;
    pub const PSTAR: usize = 5;

    /// Nominal inoculum: `X*0 = 0.1107`, `S0 = 1 - X*0`, `R0 = 0.002`, rest 0.
    pub fn nominal() -> Self {
        let x0 = 0.1107;
        Self { S: 1.0 - x0, Xstar: x0, E: 0.0, M: 0.0, R: 0.002, Pstar: 0.0 }
    }

    /// Panics if `x` has fewer than six components.
    pub fn from_slice(x: &[f64]) -> Self {
        Self { S: x[0], Xstar: x[1], E: x[2], M: x[3], R: x[4], Pstar: x[5] }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.S, self.Xstar, self.E, self.M, self.R, self.Pstar]
    }

    pub fn to_state_vector(&self) -> StateVector {
        StateVector::new(self.to_array().to_vec(), Self::LABELS, Self::UNITS)
    }
}

/// Growth-toxicity factor `T_X = T_Xmax E^n / (K^n + E^n)`.
pub fn toxicity_tx(e: f64, p: &FattyAcidParams) -> f64 {
    p.T_Xmax * hill(e, p.n_TX, p.K_TX.powf(p.n_TX))
}

/// Product-toxicity factor: zero below `E_tox`, Hill activation in `E - E_tox` above.
pub fn toxicity_tp(e: f64, p: &FattyAcidParams) -> f64 {
    if e < p.E_tox {
        0.0
    } else {
        hill(e - p.E_tox, p.n_TP, p.K_TP.powf(p.n_TP))
    }
}

/// Returns `(X, P)`: relative cell density and fatty-acid titer in g/L.
pub fn fatty_acid_measure(x: &FattyAcidState, p: &FattyAcidParams) -> (f64, f64) {
    (p.H_X * x.Xstar, p.H_P * x.Pstar)
}

/// Time derivative of the state at inducer level `u` (µM).
pub fn fatty_acid_rhs(x: &FattyAcidState, u: f64, p: &FattyAcidParams) -> FattyAcidState {
    let model = FattyAcidModel::new(*p);
    let mut dx = [0.0; 6];
    model.derivative(&x.to_array(), u, &mut dx);
    FattyAcidState::from_slice(&dx)
}

/// Parameter set with the constant Hill powers folded in.
#[derive(Debug, Clone)]
pub struct FattyAcidModel {
    p: FattyAcidParams,
    k_tx_pow: f64,
    k_tp_pow: f64,
    k_r0_pow: f64,
}

impl FattyAcidModel {
    pub fn new(p: FattyAcidParams) -> Self {
        Self {
            k_tx_pow: p.K_TX.powf(p.n_TX),
            k_tp_pow: p.K_TP.powf(p.n_TP),
            k_r0_pow: p.K_R0.powf(p.n_R),
            p,
        }
    }

    pub fn params(&self) -> &FattyAcidParams {
        &self.p
    }

    #[inline]
    fn derivative(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let p = &self.p;
        // Solver stages may dip marginally below zero; saturating terms see
        // the non-negative part.
        let s = x[0].max(0.0);
        let (xs, e, m, r) = (x[1], x[2], x[3], x[4]);

        let tx = p.T_Xmax * hill(e, p.n_TX, self.k_tx_pow);
        let tp = if e < p.E_tox { 0.0 } else { hill(e - p.E_tox, p.n_TP, self.k_tp_pow) };
        let mu = p.k_X * s * (1.0 - tx);

        let free_laci = r / (1.0 + pos_pow(u / p.K_I, p.n_I));
        let expression = p.k_E * self.k_r0_pow / (self.k_r0_pow + pos_pow(free_laci, p.n_R));

        dx[0] = -mu * xs;
        dx[1] = mu * xs - p.mu_d * xs;
        dx[2] = expression - (p.d_E + mu) * e;
        dx[3] = p.k_M * e - p.k_P * m - mu * m;
        dx[4] = p.k_R1 - (p.d_R + mu) * r;
        dx[5] = p.k_P * m * xs * (s / (p.K_SP + s)) * (1.0 - tp);
    }
}

impl Dynamics for FattyAcidModel {
    fn dim(&self) -> usize {
        6
    }

    #[inline]
    fn rhs(&self, _t: f64, x: &[f64], u: f64, dx: &mut [f64]) {
        self.derivative(x, u, dx)
    }

    fn nonnegative(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> FattyAcidParams {
        FattyAcidParams::nominal()
    }

    #[test]
    fn nominal_parameters_are_valid() {
        p().validate().unwrap();
        let mut bad = p();
        bad.T_Xmax = 1.0;
        assert!(bad.validate().is_err());
        bad = p();
        bad.n_I = 0.0;
        assert!(bad.validate().is_err());
    }

    // Expected values evaluated by hand from the nominal table:
    //   mu = k_X * S = 0.4639 * 0.8893; dS = -mu * X*0.
    //   R_eff = 0.002, 0.002^0.5576 = 0.031277..., dE = 0.6088 / (1 + 0.031277).
    #[test]
    fn nominal_derivative() {
        let d = fatty_acid_rhs(&FattyAcidState::nominal(), 0.0, &p());
        assert!((d.S - (-0.4639 * 0.8893 * 0.1107)).abs() < 1e-12);
        assert!((d.S + 0.04567).abs() < 1e-5);
        assert!((d.E - 0.5903).abs() < 1e-4);
        assert!((d.E - 0.6088 / (1.0 + 0.002f64.powf(0.5576))).abs() < 1e-12);
        assert_eq!(d.M, 0.0);
        assert_eq!(d.Pstar, 0.0);
    }

    #[test]
    fn no_enzyme_means_untoxified_growth() {
        let x = FattyAcidState { E: 0.0, ..FattyAcidState::nominal() };
        assert_eq!(toxicity_tx(0.0, &p()), 0.0);
        let d = fatty_acid_rhs(&x, 0.0, &p());
        let mu = p().k_X * x.S;
        assert!((d.Xstar - (mu - p().mu_d) * x.Xstar).abs() < 1e-15);
    }

    #[test]
    fn growth_toxicity_shape() {
        let p = p();
        assert_eq!(toxicity_tx(0.0, &p), 0.0);
        assert!((toxicity_tx(p.K_TX, &p) - 0.25405).abs() < 1e-12);
        assert!((toxicity_tx(1e9, &p) - 0.5081).abs() < 1e-9);
    }

    #[test]
    fn product_toxicity_shape() {
        let p = p();
        assert_eq!(toxicity_tp(0.99 * p.E_tox, &p), 0.0);
        assert_eq!(toxicity_tp(p.E_tox, &p), 0.0);
        assert!((toxicity_tp(p.E_tox + p.K_TP, &p) - 0.5).abs() < 1e-12);
        let eps = 1e-8;
        assert!((toxicity_tp(p.E_tox - eps, &p) - toxicity_tp(p.E_tox + eps, &p)).abs() < 1e-6);
    }

    #[test]
    fn measurement_map() {
        let p = p();
        let x = FattyAcidState { Xstar: 0.1107, Pstar: 0.0, ..FattyAcidState::nominal() };
        let (xm, pm) = fatty_acid_measure(&x, &p);
        assert!((xm - 0.18686).abs() < 1e-5);
        assert_eq!(pm, 0.0);
        let (_, pm) = fatty_acid_measure(&FattyAcidState { Pstar: 1.0, ..x }, &p);
        assert_eq!(pm, 0.4843);
    }

    #[test]
    fn induction_raises_expression() {
        let x = FattyAcidState { R: 12.0, ..FattyAcidState::nominal() };
        let mut prev = f64::NEG_INFINITY;
        for u in [0.0, 1.0, 10.0, 40.0, 100.0, 1000.0] {
            let de = fatty_acid_rhs(&x, u, &p()).E;
            assert!(de >= prev);
            prev = de;
        }
    }
}
