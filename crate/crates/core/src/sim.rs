//! Adaptive integration of controlled ODE systems over piecewise-constant inputs.
//!
//! The solver is an embedded Dormand–Prince 4(5) pair with a mixed
//! absolute/relative max-norm error test. Integration always restarts at
//! control breakpoints so an input discontinuity never falls inside a step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("step limit of {limit} exceeded while integrating [{t0}, {t1}] h")]
    StepLimitExceeded { limit: usize, t0: f64, t1: f64 },
    #[error("non-finite or invalid state at t = {t} h: {reason}")]
    NonFiniteState { t: f64, reason: String },
    #[error("segment {segment}: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid control schedule: {0}")]
    InvalidSchedule(String),
    #[error("state dimension {got} does not match system dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid interval: t1 = {t1} must exceed t0 = {t0}")]
    InvalidInterval { t0: f64, t1: f64 },
}

/// Unit tag carried alongside each state component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Dimensionless,
    GramsPerLiter,
    VirtualUnitsPerGram,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Dimensionless => "-",
            Unit::GramsPerLiter => "g/L",
            Unit::VirtualUnitsPerGram => "VU/g",
        }
    }
}

/// A labelled state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    values: Vec<f64>,
    labels: &'static [&'static str],
    units: &'static [Unit],
}

impl StateVector {
    /// Panics if `values`, `labels` and `units` disagree in length.
    pub fn new(values: Vec<f64>, labels: &'static [&'static str], units: &'static [Unit]) -> Self {
        assert_eq!(values.len(), labels.len(), "one label per state component");
        assert_eq!(values.len(), units.len(), "one unit per state component");
        Self { values, labels, units }
    }

    /// An unlabelled vector, for ad-hoc systems.
    pub fn unlabelled(values: Vec<f64>) -> Self {
        const NAMES: [&str; 16] = [
            "x0", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10", "x11", "x12",
            "x13", "x14", "x15",
        ];
        const UNITS: [Unit; 16] = [Unit::Dimensionless; 16];
        assert!(values.len() <= NAMES.len(), "at most 16 unlabelled components");
        let n = values.len();
        Self { values, labels: &NAMES[..n], units: &UNITS[..n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn labels(&self) -> &'static [&'static str] {
        self.labels
    }

    pub fn units(&self) -> &'static [Unit] {
        self.units
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| *l == label).map(|i| self.values[i])
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self { values, labels: self.labels, units: self.units }
    }
}

/// A controlled ODE system `dx/dt = f(t, x, u)` with its parameters bound.
pub trait Dynamics {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, x: &[f64], u: f64, dx: &mut [f64]);

    /// Whether every component is physically non-negative. Enables the
    /// projection of step overshoot below zero (see [`integrate_segment`]).
    fn nonnegative(&self) -> bool {
        false
    }
}

impl<D: Dynamics + ?Sized> Dynamics for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn rhs(&self, t: f64, x: &[f64], u: f64, dx: &mut [f64]) {
        (**self).rhs(t, x, u, dx)
    }
    fn nonnegative(&self) -> bool {
        (**self).nonnegative()
    }
}

/// Adapts a closure into [`Dynamics`].
pub struct FnDynamics<F> {
    dim: usize,
    f: F,
}

impl<F> FnDynamics<F>
where
    F: Fn(f64, &[f64], f64, &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Dynamics for FnDynamics<F>
where
    F: Fn(f64, &[f64], f64, &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, x: &[f64], u: f64, dx: &mut [f64]) {
        (self.f)(t, x, u, dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step_hours: f64,
    pub max_step_hours: f64,
    pub max_steps_per_segment: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step_hours: 1e-3,
            max_step_hours: 0.25,
            max_steps_per_segment: 1_000_000,
        }
    }
}

/// Steps shorter than this are treated as a numerical failure.
pub const MIN_STEP_HOURS: f64 = 1e-12;


impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.rel_tol) || !ok(self.abs_tol) {
            return Err(SimError::InvalidConfig("tolerances must be finite and > 0".into()));
        }
        if !ok(self.initial_step_hours) || !ok(self.max_step_hours) {
            return Err(SimError::InvalidConfig("step sizes must be finite and > 0".into()));
        }
        if self.initial_step_hours > self.max_step_hours {
            return Err(SimError::InvalidConfig(
                "initial_step_hours must not exceed max_step_hours".into(),
            ));
        }
        if self.max_steps_per_segment == 0 {
            return Err(SimError::InvalidConfig("max_steps_per_segment must be > 0".into()));
        }
        Ok(())
    }

    /// Same configuration with both tolerances scaled by `factor`.
    pub fn with_tolerances_scaled(&self, factor: f64) -> Self {
        Self { rel_tol: self.rel_tol * factor, abs_tol: self.abs_tol * factor, ..*self }
    }
}

/// Piecewise-constant input over `n_intervals` control intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    bounds: (f64, f64),
}

impl ControlSchedule {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, bounds: (f64, f64)) -> Result<Self, SimError> {
        let bad = |msg: String| Err(SimError::InvalidSchedule(msg));
        if values.is_empty() {
            return bad("at least one control interval is required".into());
        }
        if breakpoints.len() != values.len() + 1 {
            return bad(format!(
                "{} breakpoints for {} intervals (need intervals + 1)",
                breakpoints.len(),
                values.len()
            ));
        }
        if breakpoints[0] != 0.0 {
            return bad("the first breakpoint must be 0".into());
        }
        // Negated comparisons also reject NaN.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if breakpoints.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return bad("breakpoints must be finite and strictly increasing".into());
        }
        let (lb, ub) = bounds;
        if !(lb.is_finite() && ub.is_finite() && lb <= ub) {
            return bad(format!("invalid bounds ({lb}, {ub})"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= lb && **v <= ub)) {
            return bad(format!("value {v} at interval {i} outside [{lb}, {ub}]"));
        }
        Ok(Self { breakpoints, values, bounds })
    }

    /// Equidistant breakpoints over `[0, horizon]`.
    pub fn uniform(horizon: f64, values: Vec<f64>, bounds: (f64, f64)) -> Result<Self, SimError> {
        if values.is_empty() {
            return Err(SimError::InvalidSchedule("at least one control interval is required".into()));
        }
        Self::new(uniform_breakpoints(horizon, values.len()), values, bounds)
    }

    pub fn constant(horizon: f64, n_intervals: usize, u: f64, bounds: (f64, f64)) -> Result<Self, SimError> {
        Self::uniform(horizon, vec![u; n_intervals], bounds)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn n_intervals(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.values.len()]
    }
}

/// `n + 1` equidistant times from 0 to `horizon`; the last one is exactly `horizon`.
pub fn uniform_breakpoints(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 })
        .collect()
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Integrates `rhs` from `t0` to `t1` with the input held at `u`.
///
/// For systems reporting [`Dynamics::nonnegative`], components that an
/// accepted step leaves below zero are projected back to zero. This absorbs
/// overshoot past a boundary the exact flow cannot cross (such as a Monod
/// uptake term switching off at zero substrate, which the embedded error
/// estimate does not resolve). If the vector field at the projected state
/// still points below zero, the system is not actually non-negative there and
/// [`SimError::NonFiniteState`] is returned.
pub fn integrate_segment<D: Dynamics + ?Sized>(
    rhs: &D,
    x: &StateVector,
    u: f64,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<StateVector, SimError> {
    cfg.validate()?;
    let n = rhs.dim();
    if x.len() != n {
        return Err(SimError::DimensionMismatch { expected: n, got: x.len() });
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(SimError::InvalidInterval { t0, t1 });
    }
    let mut y = x.values().to_vec();
    check_finite(&y, t0)?;
    dopri5(rhs, &mut y, u, t0, t1, cfg)?;
    Ok(x.with_values(y))
}

fn check_finite(y: &[f64], t: f64) -> Result<(), SimError> {
    match y.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SimError::NonFiniteState {
            t,
            reason: format!("component {i} is {}", y[i]),
        }),
        None => Ok(()),
    }
}

/// Sets negative components to zero, recording their indices in `projected`.
fn project_nonnegative(y: &mut [f64], projected: &mut Vec<usize>) {
    projected.clear();
    for (i, v) in y.iter_mut().enumerate() {
        if *v < 0.0 {
            *v = 0.0;
            projected.push(i);
        }
    }
}

fn dopri5<D: Dynamics + ?Sized>(
    rhs: &D,
    y: &mut [f64],
    u: f64,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<(), SimError> {
    let n = y.len();
    let nonnegative = rhs.nonnegative();
    let mut projected = Vec::new();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut t = t0;
    let mut h = cfg.initial_step_hours.min(cfg.max_step_hours);
    rhs.rhs(t, y, u, &mut k1);
    let mut steps = 0usize;

    while t < t1 {
        if steps >= cfg.max_steps_per_segment {
            return Err(SimError::StepLimitExceeded { limit: cfg.max_steps_per_segment, t0, t1 });
        }
        steps += 1;

        // Land exactly on t1 rather than leaving a sliver step.
        let remaining = t1 - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }

        for i in 0..n {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        rhs.rhs(t + C2 * h, &stage, u, &mut k2);
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs.rhs(t + C3 * h, &stage, u, &mut k3);
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs.rhs(t + C4 * h, &stage, u, &mut k4);
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs.rhs(t + C5 * h, &stage, u, &mut k5);
        for i in 0..n {
            stage[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_next = if last { t1 } else { t + h };
        rhs.rhs(t_next, &stage, u, &mut k6);
        for i in 0..n {
            y_new[i] =
                y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        rhs.rhs(t_next, &y_new, u, &mut k7);

        let mut err = 0.0f64;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }

        if !err.is_finite() {
            // A stage left the domain of the right-hand side; retreat.
            h *= MIN_FACTOR;
            if h < MIN_STEP_HOURS {
                return Err(SimError::NonFiniteState {
                    t,
                    reason: "right-hand side produced non-finite values".into(),
                });
            }
            continue;
        }

        if err <= 1.0 {
            t = t_next;
            check_finite(&y_new, t)?;
            y.copy_from_slice(&y_new);
            if nonnegative {
                project_nonnegative(y, &mut projected);
            }
            if projected.is_empty() {
                std::mem::swap(&mut k1, &mut k7);
            } else {
                rhs.rhs(t, y, u, &mut k1);
                if let Some(&i) = projected.iter().find(|&&i| k1[i] < 0.0) {
                    return Err(SimError::NonFiniteState {
                        t,
                        reason: format!("component {i} is driven below zero (rate {:e} at 0)", k1[i]),
                    });
                }
            }
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            h = (h * factor).min(cfg.max_step_hours);
        } else {
            h *= (SAFETY * err.powf(-0.2)).max(MIN_FACTOR);
            if h < MIN_STEP_HOURS {
                return Err(SimError::NonFiniteState {
                    t,
                    reason: format!("step size fell below {MIN_STEP_HOURS:e} h"),
                });
            }
        }
    }
    Ok(())
}

/// Simulates `rhs` over every interval of `schedule`, returning the state at
/// each breakpoint (`n_intervals + 1` entries, the first being `x0`).
pub fn rollout<D: Dynamics + ?Sized>(
    rhs: &D,
    x0: &StateVector,
    schedule: &ControlSchedule,
    cfg: &IntegratorConfig,
) -> Result<Vec<StateVector>, SimError> {
    if x0.len() != rhs.dim() {
        return Err(SimError::DimensionMismatch { expected: rhs.dim(), got: x0.len() });
    }
    let bp = schedule.breakpoints();
    let mut states = Vec::with_capacity(schedule.n_intervals() + 1);
    states.push(x0.clone());
    for (k, &u) in schedule.values().iter().enumerate() {
        let next = integrate_segment(rhs, &states[k], u, bp[k], bp[k + 1], cfg)
            .map_err(|e| SimError::Segment { segment: k, source: Box::new(e) })?;
        states.push(next);
    }
    Ok(states)
}

/// Classical fixed-step fourth-order Runge–Kutta from `t0` to `t1` with the
/// input held at `u`, using `ceil((t1 - t0) / h)` equal steps.
///
/// Slow but free of step-size control; intended as an independent
/// reference for validating [`integrate_segment`]. For non-negative systems
/// each step result is projected onto the non-negative orthant: a fixed step
/// cannot resolve a state collapsing onto an absorbing zero boundary faster
/// than `1 / h`, and would otherwise oscillate below it.
pub fn rk4_fixed<D: Dynamics + ?Sized>(rhs: &D, x: &[f64], u: f64, t0: f64, t1: f64, h: f64) -> Vec<f64> {
    let n = x.len();
    let steps = ((t1 - t0) / h).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut y = x.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        rhs.rhs(t, &y, u, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs.rhs(t + 0.5 * h, &tmp, u, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs.rhs(t + 0.5 * h, &tmp, u, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs.rhs(t + h, &tmp, u, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if rhs.nonnegative() {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::type_complexity)]
    fn decay() -> FnDynamics<impl Fn(f64, &[f64], f64, &mut [f64])> {
        FnDynamics::new(1, |_t, x: &[f64], _u, dx: &mut [f64]| dx[0] = -x[0])
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let x = StateVector::unlabelled(vec![1.0]);
        let out = integrate_segment(&decay(), &x, 0.0, 0.0, 1.0, &IntegratorConfig::default()).unwrap();
        assert!((out.values()[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn constant_dynamics_are_exact() {
        let zero = FnDynamics::new(1, |_t, _x: &[f64], _u, dx: &mut [f64]| dx[0] = 0.0);
        let x = StateVector::unlabelled(vec![3.2]);
        for u in [0.0, 17.0, -4.0] {
            let out = integrate_segment(&zero, &x, u, 0.0, 5.0, &IntegratorConfig::default()).unwrap();
            assert_eq!(out.values()[0], 3.2);
        }
    }

    #[test]
    fn pure_integrator_rollout() {
        let integ = FnDynamics::new(1, |_t, _x: &[f64], u, dx: &mut [f64]| dx[0] = u);
        let sched = ControlSchedule::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0], (0.0, 1.0)).unwrap();
        let states = rollout(&integ, &StateVector::unlabelled(vec![0.0]), &sched, &IntegratorConfig::default()).unwrap();
        let v: Vec<f64> = states.iter().map(|s| s.values()[0]).collect();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0).abs() < 1e-12);
        assert!((v[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_schedule_rejected() {
        assert!(ControlSchedule::new(vec![0.0], vec![], (0.0, 1.0)).is_err());
        assert!(ControlSchedule::uniform(1.0, vec![], (0.0, 1.0)).is_err());
        assert!(ControlSchedule::new(vec![0.0, 1.0, 1.0], vec![0.0, 0.0], (0.0, 1.0)).is_err());
        assert!(ControlSchedule::new(vec![0.5, 1.0], vec![0.0], (0.0, 1.0)).is_err());
        assert!(ControlSchedule::new(vec![0.0, 1.0], vec![2.0], (0.0, 1.0)).is_err());
    }

    #[test]
    fn step_limit_is_reported() {
        let cfg = IntegratorConfig { max_steps_per_segment: 3, ..Default::default() };
        let err = integrate_segment(&decay(), &StateVector::unlabelled(vec![1.0]), 0.0, 0.0, 10.0, &cfg)
            .unwrap_err();
        assert!(matches!(err, SimError::StepLimitExceeded { limit: 3, .. }));
    }

    #[test]
    fn blow_up_is_reported() {
        // dx/dt = x^2 from x = 1 escapes to infinity at t = 1.
        let riccati = FnDynamics::new(1, |_t, x: &[f64], _u, dx: &mut [f64]| dx[0] = x[0] * x[0]);
        let err = integrate_segment(&riccati, &StateVector::unlabelled(vec![1.0]), 0.0, 0.0, 2.0, &IntegratorConfig::default())
            .unwrap_err();
        assert!(matches!(err, SimError::NonFiniteState { .. } | SimError::StepLimitExceeded { .. }), "{err:?}");
    }

    #[test]
    fn segment_errors_carry_index() {
        let cfg = IntegratorConfig { max_steps_per_segment: 20, ..Default::default() };
        let sched = ControlSchedule::new(vec![0.0, 0.001, 10.0], vec![0.0, 0.0], (0.0, 1.0)).unwrap();
        let err = rollout(&decay(), &StateVector::unlabelled(vec![1.0]), &sched, &cfg).unwrap_err();
        assert!(matches!(err, SimError::Segment { segment: 1, .. }), "{err:?}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = IntegratorConfig::default();
        for cfg in [
            IntegratorConfig { rel_tol: 0.0, ..base },
            IntegratorConfig { abs_tol: -1.0, ..base },
            IntegratorConfig { initial_step_hours: 1.0, max_step_hours: 0.5, ..base },
            IntegratorConfig { max_steps_per_segment: 0, ..base },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn overshoot_past_an_absorbing_boundary_is_projected() {
        // Monod drain with a tiny half-saturation constant: the exact flow
        // stops at zero, explicit stages overshoot it.
        struct MonodDrain;
        impl Dynamics for MonodDrain {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, x: &[f64], _u: f64, dx: &mut [f64]) {
                let s = x[0].max(0.0);
                dx[0] = -2.0 * s / (s + 1e-7);
            }
            fn nonnegative(&self) -> bool {
                true
            }
        }
        let cfg = IntegratorConfig::default();
        let out = integrate_segment(&MonodDrain, &StateVector::unlabelled(vec![1.0]), 0.0, 0.0, 1.0, &cfg).unwrap();
        assert!(out.values()[0] >= 0.0 && out.values()[0] < 1e-8);
    }

    #[test]
    fn outward_flow_at_zero_is_an_error() {
        struct Drain;
        impl Dynamics for Drain {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, _x: &[f64], u: f64, dx: &mut [f64]) {
                dx[0] = -u;
            }
            fn nonnegative(&self) -> bool {
                true
            }
        }
        let cfg = IntegratorConfig::default();
        let x = StateVector::unlabelled(vec![1.0]);
        assert!(matches!(
            integrate_segment(&Drain, &x, 1.5, 0.0, 1.0, &cfg),
            Err(SimError::NonFiniteState { .. })
        ));
        let out = integrate_segment(&Drain, &x, 0.5, 0.0, 1.0, &cfg).unwrap();
        assert!((out.values()[0] - 0.5).abs() < 1e-12);
    }
}
