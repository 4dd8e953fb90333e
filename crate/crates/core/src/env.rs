//! Bioprocess models as reinforcement-learning environments.
//!
//! Each episode perturbs the nominal initial conditions and selected kinetic
//! parameters with zero-mean Gaussian noise, then advances the model one
//! control interval per action. Observations are the two most recent
//! (state, input) pairs plus a time embedding, all scaled into `[-1, 1]`.

use std::io;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{LactateModel, LactateParams, LactateState, Model, ModelError, ModelKind, ModelParams};
use crate::reinforce::Environment;
use crate::sim::{integrate_segment, uniform_breakpoints, ControlSchedule, IntegratorConfig, SimError, StateVector};
use crate::streams::{EpisodeRng, StreamId};

/// Value assigned to a perturbed quantity once every resample came out non-positive.
pub const POSITIVITY_FLOOR: f64 = 1e-9;

/// Relative tolerance when comparing breakpoint grids.
const BREAKPOINT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("trajectory is incomplete: {have} of {need} breakpoints simulated")]
    IncompleteTrajectory { have: usize, need: usize },
    #[error("trajectory and reference breakpoints differ")]
    BreakpointMismatch,
    #[error("invalid uncertainty specification: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Invalid(String),
    #[error("reference file: {0}")]
    Csv(#[from] csv::Error),
    #[error("reference file: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceDistribution {
    #[default]
    GaussianZeroMean,
}

/// Which quantities are perturbed per episode, and by how much.
///
/// Each target `q` receives `q + d` with `d ~ N(0, (level * |q|)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySpec {
    pub level: f64,
    pub ic_targets: Vec<String>,
    pub param_targets: Vec<String>,
    #[serde(default)]
    pub distribution: DisturbanceDistribution,
    #[serde(default = "default_resample_attempts")]
    pub resample_attempts: u32,
}

fn default_resample_attempts() -> u32 {
    100
}

impl UncertaintySpec {
    /// Every initial condition plus the expression parameters of `kind`.
    pub fn default_for(kind: ModelKind, level: f64) -> Self {
        let param_targets = match kind {
            ModelKind::FattyAcid => vec!["k_E".to_string(), "k_R1".to_string()],
            ModelKind::Lactate => vec!["q_Emax".to_string()],
        };
        Self {
            level,
            ic_targets: kind.state_labels().iter().map(|s| s.to_string()).collect(),
            param_targets,
            distribution: DisturbanceDistribution::GaussianZeroMean,
            resample_attempts: default_resample_attempts(),
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<(), EnvError> {
        if !(self.level.is_finite() && self.level >= 0.0) {
            return Err(EnvError::InvalidSpec(format!("level {} must be >= 0", self.level)));
        }
        for t in &self.ic_targets {
            if !kind.state_labels().contains(&t.as_str()) {
                return Err(EnvError::InvalidSpec(format!("unknown state `{t}` for {}", kind.as_str())));
            }
        }
        for t in &self.param_targets {
            if !kind.parameter_names().contains(&t.as_str()) {
                return Err(EnvError::InvalidSpec(format!("unknown parameter `{t}` for {}", kind.as_str())));
            }
        }
        Ok(())
    }
}

/// The randomized world one episode runs in.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeContext {
    pub initial_state: StateVector,
    pub params: ModelParams,
    pub stream: StreamId,
}

fn perturb<R: Rng + ?Sized>(nominal: f64, level: f64, attempts: u32, rng: &mut R) -> f64 {
    let sigma = level * nominal.abs();
    if sigma == 0.0 {
        return nominal;
    }
    for _ in 0..=attempts {
        let z: f64 = StandardNormal.sample(rng);
        let q = nominal + sigma * z;
        if q > 0.0 {
            return q;
        }
    }
    POSITIVITY_FLOOR
}

/// Draws the perturbed initial state and parameters for one episode.
///
/// Targets are visited in the order listed in `spec` (states first), one
/// standard-normal draw per accepted or rejected sample.
pub fn randomize<R: Rng + ?Sized>(
    nominal_ics: &StateVector,
    nominal_params: &ModelParams,
    spec: &UncertaintySpec,
    rng: &mut R,
    stream: StreamId,
) -> Result<EpisodeContext, EnvError> {
    let mut ics = nominal_ics.clone();
    let mut params = *nominal_params;
    for name in &spec.ic_targets {
        let i = nominal_ics
            .labels()
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| ModelError::UnknownState(name.clone()))?;
        let v = &mut ics.values_mut()[i];
        *v = perturb(*v, spec.level, spec.resample_attempts, rng);
    }
    for name in &spec.param_targets {
        let nominal = params.get(name).ok_or_else(|| ModelError::UnknownParameter(name.clone()))?;
        params.set(name, perturb(nominal, spec.level, spec.resample_attempts, rng))?;
    }
    Ok(EpisodeContext { initial_state: ics, params, stream })
}

/// Observation vector; every entry lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-state divisors mapping typical trajectory ranges onto `[0, 1]`.
pub fn default_feature_scales(kind: ModelKind) -> Vec<f64> {
    match kind {
        ModelKind::FattyAcid => vec![1.0, 1.0, 3.0, 2.0, 13.0, 5.0],
        ModelKind::Lactate => vec![4.0, 1.0, 5.0, 10.0],
    }
}

#[inline]
fn to_unit_range(v: f64) -> f64 {
    (2.0 * v - 1.0).clamp(-1.0, 1.0)
}

/// Appends the features for one (state, input) pair to `out`.
fn push_pair(out: &mut Vec<f64>, state: &[f64], u: f64, scales: &[f64], bounds: (f64, f64)) {
    out.extend(state.iter().zip(scales).map(|(x, s)| to_unit_range(x / s)));
    out.push(to_unit_range((u - bounds.0) / (bounds.1 - bounds.0)));
}

/// Builds the observation from the previous and current (state, input) pairs.
///
/// A missing previous pair (first decision) is replaced by the current state
/// with a zero input.
pub fn build_features(
    prev_pair: Option<(&[f64], f64)>,
    curr_pair: (&[f64], f64),
    t: f64,
    horizon: f64,
    scales: &[f64],
    bounds: (f64, f64),
) -> FeatureVector {
    let mut out = Vec::with_capacity(2 * (curr_pair.0.len() + 1) + 1);
    build_features_into(&mut out, prev_pair, curr_pair, t, horizon, scales, bounds);
    FeatureVector(out)
}

fn build_features_into(
    out: &mut Vec<f64>,
    prev_pair: Option<(&[f64], f64)>,
    curr_pair: (&[f64], f64),
    t: f64,
    horizon: f64,
    scales: &[f64],
    bounds: (f64, f64),
) {
    out.clear();
    let prev = prev_pair.unwrap_or((curr_pair.0, 0.0));
    push_pair(out, prev.0, prev.1, scales, bounds);
    push_pair(out, curr_pair.0, curr_pair.1, scales, bounds);
    out.push(to_unit_range(t / horizon));
}

/// States at the breakpoints reached so far, with the inputs and rewards
/// of each completed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub breakpoints: Vec<f64>,
    pub states: Vec<StateVector>,
    pub inputs: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn start(breakpoints: Vec<f64>, x0: StateVector) -> Self {
        let n = breakpoints.len();
        let mut states = Vec::with_capacity(n);
        states.push(x0);
        Self { breakpoints, states, inputs: Vec::with_capacity(n), rewards: Vec::with_capacity(n) }
    }

    pub fn n_intervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn is_complete(&self) -> bool {
        self.states.len() == self.breakpoints.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    fn require_complete(&self) -> Result<(), EnvError> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(EnvError::IncompleteTrajectory { have: self.states.len(), need: self.breakpoints.len() })
        }
    }

    /// Values of one labelled state at every breakpoint reached.
    pub fn series(&self, label: &str) -> Option<Vec<f64>> {
        let i = self.states.first()?.labels().iter().position(|l| *l == label)?;
        Some(self.states.iter().map(|s| s.values()[i]).collect())
    }
}

/// Final product titer (g/L) of a complete trajectory.
pub fn reward_terminal_titer(traj: &Trajectory, model: &Model) -> Result<f64, EnvError> {
    traj.require_complete()?;
    let last = traj.states.last().expect("complete trajectory has states");
    Ok(model.product_titer(last.values()))
}

/// Golden-batch enzyme trajectory to be tracked.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub e_ref: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReferenceRow {
    time_h: f64,
    e_ref: f64,
}

impl ReferenceTrajectory {
    pub fn matches_breakpoints(&self, breakpoints: &[f64]) -> bool {
        self.times.len() == breakpoints.len()
            && self
                .times
                .iter()
                .zip(breakpoints)
                .all(|(a, b)| (a - b).abs() <= BREAKPOINT_TOL * (1.0 + b.abs()))
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self, EnvError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: io::Read>(reader: R) -> Result<Self, EnvError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time_h", "e_ref"] {
            return Err(EnvError::Invalid(format!(
                "expected header `time_h,e_ref`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut times, mut e_ref) = (Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: ReferenceRow = row?;
            times.push(row.time_h);
            e_ref.push(row.e_ref);
        }
        if times.len() < 2 {
            return Err(EnvError::Invalid("a reference needs at least two breakpoints".into()));
        }
        Ok(Self { times, e_ref })
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), EnvError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_h", "e_ref"])?;
        for (t, e) in self.times.iter().zip(&self.e_ref) {
            w.write_record([fmt_real(*t), fmt_real(*e)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal text that parses back to exactly `v`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

/// Squared tracking error of enzyme level `e` against `e_ref`, negated.
#[inline]
fn tracking_penalty(e: f64, e_ref: f64) -> f64 {
    let d = e - e_ref;
    -d * d
}

/// `-Σ_{t=1..N} (E_t - E_ref,t)^2` over a complete trajectory.
pub fn reward_tracking(traj: &Trajectory, reference: &ReferenceTrajectory) -> Result<f64, EnvError> {
    traj.require_complete()?;
    if !reference.matches_breakpoints(&traj.breakpoints) {
        return Err(EnvError::BreakpointMismatch);
    }
    let e = traj.series("E").ok_or_else(|| EnvError::Invalid("trajectory has no `E` state".into()))?;
    Ok(e.iter().zip(&reference.e_ref).skip(1).map(|(e, r)| tracking_penalty(*e, *r)).sum())
}

/// Number of the first control interval starting at or after half the horizon.
pub fn default_switch_index(n_intervals: usize) -> usize {
    let bp = uniform_breakpoints(1.0, n_intervals);
    bp.iter().position(|t| *t >= 0.5).unwrap_or(n_intervals)
}

/// Simulates the deterministic lactate model dark until `switch_index`, then at
/// full light, and records the ATPase level at every breakpoint.
pub fn generate_reference(
    params: &LactateParams,
    initial_state: &LactateState,
    horizon: f64,
    n_intervals: usize,
    bounds: (f64, f64),
    switch_index: usize,
    integrator: &IntegratorConfig,
) -> Result<ReferenceTrajectory, EnvError> {
    if switch_index > n_intervals {
        return Err(EnvError::Invalid(format!(
            "switch index {switch_index} exceeds the {n_intervals} control intervals"
        )));
    }
    let values = (0..n_intervals).map(|k| if k < switch_index { bounds.0 } else { bounds.1 }).collect();
    let schedule = ControlSchedule::uniform(horizon, values, bounds)?;
    let model = LactateModel::new(*params);
    let states = crate::sim::rollout(&model, &initial_state.to_state_vector(), &schedule, integrator)?;
    Ok(ReferenceTrajectory {
        times: schedule.breakpoints().to_vec(),
        e_ref: states.iter().map(|s| s.values()[LactateState::E]).collect(),
    })
}

/// What an episode's return measures.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Final product titer, paid as a single terminal reward.
    TerminalTiter,
    /// Negative squared enzyme tracking error, paid every interval.
    Tracking(ReferenceTrajectory),
}

/// Static description of a bioprocess environment.
#[derive(Debug, Clone)]
pub struct BioprocessEnv {
    pub params: ModelParams,
    pub initial_state: StateVector,
    pub uncertainty: UncertaintySpec,
    pub horizon: f64,
    pub n_intervals: usize,
    pub bounds: (f64, f64),
    pub objective: Objective,
    pub scales: Vec<f64>,
    pub integrator: IntegratorConfig,
    breakpoints: Vec<f64>,
}

impl BioprocessEnv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: ModelParams,
        initial_state: StateVector,
        uncertainty: UncertaintySpec,
        horizon: f64,
        n_intervals: usize,
        bounds: (f64, f64),
        objective: Objective,
        integrator: IntegratorConfig,
    ) -> Result<Self, EnvError> {
        let kind = params.kind();
        params.validate()?;
        uncertainty.validate(kind)?;
        integrator.validate()?;
        if initial_state.labels() != kind.state_labels() {
            return Err(EnvError::Invalid("initial state does not match the model".into()));
        }
        if n_intervals == 0 || !(horizon.is_finite() && horizon > 0.0) {
            return Err(EnvError::Invalid("need a positive horizon and at least one interval".into()));
        }
        if !(bounds.0.is_finite() && bounds.1.is_finite() && bounds.0 < bounds.1) {
            return Err(EnvError::Invalid(format!("invalid input bounds {bounds:?}")));
        }
        let breakpoints = uniform_breakpoints(horizon, n_intervals);
        if let Objective::Tracking(reference) = &objective {
            if kind != ModelKind::Lactate {
                return Err(EnvError::Invalid("tracking is defined for the lactate model".into()));
            }
            if !reference.matches_breakpoints(&breakpoints) {
                return Err(EnvError::BreakpointMismatch);
            }
        }
        Ok(Self {
            scales: default_feature_scales(kind),
            params,
            initial_state,
            uncertainty,
            horizon,
            n_intervals,
            bounds,
            objective,
            integrator,
            breakpoints,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn n_states(&self) -> usize {
        self.initial_state.len()
    }

    /// Returns the objective value of a finished trajectory.
    pub fn evaluate_return(&self, episode: &BioprocessEpisode) -> Result<f64, EnvError> {
        match &self.objective {
            Objective::TerminalTiter => reward_terminal_titer(&episode.trajectory, &episode.model),
            Objective::Tracking(r) => reward_tracking(&episode.trajectory, r),
        }
    }
}

/// Mutable per-episode state.
#[derive(Debug, Clone)]
pub struct BioprocessEpisode {
    pub context: EpisodeContext,
    pub model: Model,
    pub trajectory: Trajectory,
}

impl Environment for BioprocessEnv {
    type Episode = BioprocessEpisode;
    type Error = EnvError;

    fn feature_dim(&self) -> usize {
        2 * (self.n_states() + 1) + 1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> (f64, f64) {
        self.bounds
    }

    fn n_steps(&self) -> usize {
        self.n_intervals
    }

    fn reset(&self, stream: StreamId, rng: &mut EpisodeRng) -> Result<BioprocessEpisode, EnvError> {
        let context = randomize(&self.initial_state, &self.params, &self.uncertainty, rng, stream)?;
        let model = Model::new(context.params);
        let trajectory = Trajectory::start(self.breakpoints.clone(), context.initial_state.clone());
        Ok(BioprocessEpisode { context, model, trajectory })
    }

    fn observe(&self, ep: &BioprocessEpisode, out: &mut Vec<f64>) {
        let tr = &ep.trajectory;
        let t = tr.states.len() - 1;
        let input_before = |k: usize| if k == 0 { 0.0 } else { tr.inputs[k - 1] };
        let curr = (tr.states[t].values(), input_before(t));
        let prev = (t > 0).then(|| (tr.states[t - 1].values(), input_before(t - 1)));
        build_features_into(out, prev, curr, tr.breakpoints[t], self.horizon, &self.scales, self.bounds);
    }

    fn step(&self, ep: &mut BioprocessEpisode, action: &[f64]) -> Result<f64, EnvError> {
        let tr = &mut ep.trajectory;
        let t = tr.states.len() - 1;
        if t >= tr.n_intervals() {
            return Err(EnvError::Invalid("episode already finished".into()));
        }
        let u = action[0].clamp(self.bounds.0, self.bounds.1);
        let next = integrate_segment(
            &ep.model,
            &tr.states[t],
            u,
            tr.breakpoints[t],
            tr.breakpoints[t + 1],
            &self.integrator,
        )
        .map_err(|e| SimError::Segment { segment: t, source: Box::new(e) })?;
        let reward = match &self.objective {
            Objective::TerminalTiter if t + 1 == tr.n_intervals() => ep.model.product_titer(next.values()),
            Objective::TerminalTiter => 0.0,
            Objective::Tracking(r) => tracking_penalty(next.values()[LactateState::E], r.e_ref[t + 1]),
        };
        tr.states.push(next);
        tr.inputs.push(u);
        tr.rewards.push(reward);
        Ok(reward)
    }
}
