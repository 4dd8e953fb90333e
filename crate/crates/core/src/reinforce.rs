//! Monte-Carlo policy-gradient training with return normalization.
//!
//! Each epoch rolls out a batch of independently randomized episodes under
//! the current policy, weights every episode's summed score
//! `Σ_t ∇_θ log π(u_t | s_t)` by its normalized return
//! `(J_k - mean J) / (std J + eps)`, averages, and takes one ascent step.
//! Episodes run in parallel, but every reduction happens sequentially in
//! episode order, so results do not depend on the worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{sample, DifferentiablePolicy, PolicyError, StochasticPolicy};
use crate::streams::{EpisodeRng, Purpose, StreamId};

/// A sequential decision problem with a fixed number of steps.
pub trait Environment: Sync {
    type Episode: Send;
    type Error: std::error::Error + Send + Sync + 'static;

    fn feature_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_bounds(&self) -> (f64, f64);
    fn n_steps(&self) -> usize;

    /// Starts a new episode; any randomization draws from `rng`.
    fn reset(&self, stream: StreamId, rng: &mut EpisodeRng) -> Result<Self::Episode, Self::Error>;
    /// Writes the current observation into `out` (cleared first).
    fn observe(&self, episode: &Self::Episode, out: &mut Vec<f64>);
    /// Applies an in-bounds action and returns the step reward.
    fn step(&self, episode: &mut Self::Episode, action: &[f64]) -> Result<f64, Self::Error>;
}

#[derive(Debug, Error)]
pub enum EpisodeError<E: std::error::Error + 'static> {
    #[error(transparent)]
    Env(E),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Error)]
pub enum TrainError<E: std::error::Error + 'static> {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("epoch {epoch}, episode {episode}: {source}")]
    Episode {
        epoch: u32,
        episode: u32,
        #[source]
        source: EpisodeError<E>,
    },
    #[error("epoch {epoch}: policy gradient has non-finite components")]
    NonFiniteGradient { epoch: u32 },
    #[error("could not start worker pool: {0}")]
    WorkerPool(String),
}

/// Ascent rule applied to the estimated gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_max: u32,
    pub episodes_per_epoch: u32,
    pub learning_rate: f64,
    pub patience: u32,
    #[serde(default = "default_eps_mach")]
    pub eps_mach: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_eps_mach() -> f64 {
    1e-8
}

fn default_workers() -> usize {
    1
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.episodes_per_epoch < 2 {
            return Err("episodes_per_epoch must be at least 2".into());
        }
        if self.patience < 1 {
            return Err("patience must be at least 1".into());
        }
        if self.epochs_max < 1 {
            return Err("epochs_max must be at least 1".into());
        }
        if !(self.eps_mach.is_finite() && self.eps_mach > 0.0) {
            return Err(format!("eps_mach must be > 0, got {}", self.eps_mach));
        }
        if self.workers < 1 {
            return Err("workers must be at least 1".into());
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err("adam needs 0 <= beta1, beta2 < 1 and epsilon > 0".into());
            }
        }
        Ok(())
    }
}

/// One step of an episode as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub features: Vec<f64>,
    pub u_raw: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome<Ep> {
    pub episode: Ep,
    pub steps: Vec<StepRecord>,
    /// Sum of the step rewards.
    pub total_return: f64,
}

/// Rolls out one episode on the RNG stream `stream`.
pub fn run_episode<E: Environment, P: StochasticPolicy + ?Sized>(
    env: &E,
    policy: &P,
    stream: StreamId,
) -> Result<EpisodeOutcome<E::Episode>, EpisodeError<E::Error>> {
    let mut rng = stream.rng();
    let mut episode = env.reset(stream, &mut rng).map_err(EpisodeError::Env)?;
    let bounds = env.action_bounds();
    let mut steps = Vec::with_capacity(env.n_steps());
    let mut total_return = 0.0;
    let mut features = Vec::with_capacity(env.feature_dim());
    for _ in 0..env.n_steps() {
        env.observe(&episode, &mut features);
        let out = policy.forward(&features)?;
        let action = sample(&out, bounds, &mut rng);
        let reward = env.step(&mut episode, &action.applied).map_err(EpisodeError::Env)?;
        total_return += reward;
        steps.push(StepRecord { features: features.clone(), u_raw: action.raw, u_applied: action.applied, reward });
    }
    Ok(EpisodeOutcome { episode, steps, total_return })
}

/// `Σ_t ∇_θ log π(u_raw_t | s_t)` over one episode.
pub fn episode_score<P: DifferentiablePolicy>(policy: &P, steps: &[StepRecord]) -> Result<Vec<f64>, PolicyError> {
    let mut g = vec![0.0; policy.params().len()];
    for s in steps {
        policy.accumulate_grad_log_prob(&s.features, &s.u_raw, &mut g)?;
    }
    Ok(g)
}

/// Mean and population standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Returns `(J_k - mean) / (std + eps_mach)`. Identical returns carry no
/// signal and get exactly zero weight.
pub fn normalized_returns(returns: &[f64], eps_mach: f64) -> Vec<f64> {
    if returns.windows(2).all(|w| w[0] == w[1]) {
        return vec![0.0; returns.len()];
    }
    let (mean, std) = mean_and_std(returns);
    returns.iter().map(|j| (j - mean) / (std + eps_mach)).collect()
}

/// Normalized Monte-Carlo policy gradient, reduced in episode order.
pub fn estimate_gradient(scores: &[Vec<f64>], returns: &[f64], eps_mach: f64) -> Vec<f64> {
    assert_eq!(scores.len(), returns.len(), "one score per return");
    assert!(returns.len() >= 2, "normalization needs at least two episodes");
    let n_params = scores[0].len();
    let weights = normalized_returns(returns, eps_mach);
    let mut g = vec![0.0; n_params];
    for (score, w) in scores.iter().zip(&weights) {
        for (gi, si) in g.iter_mut().zip(score) {
            *gi += w * si;
        }
    }
    let n = returns.len() as f64;
    g.iter_mut().for_each(|gi| *gi /= n);
    g
}

/// Optimizer state carried across epochs.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("gradient has non-finite components")]
pub struct NonFiniteGradient;

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        Self { kind, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    /// Moves `params` along the ascent direction given by `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<(), NonFiniteGradient> {
        assert_eq!(params.len(), grad.len(), "gradient shape must match the parameters");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(NonFiniteGradient);
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p += lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}

/// Summary of one training epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: u32,
    pub mean_return: f64,
    pub sd_return: f64,
    pub returns: Vec<f64>,
    /// Best epoch mean return up to and including this epoch.
    pub best_so_far: f64,
    /// Wall-clock duration; informational only.
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone)]
pub struct TrainResult<P> {
    /// Parameters that generated the best epoch's episodes.
    pub best_policy: P,
    pub best_epoch: u32,
    pub best_mean_return: f64,
    pub history: Vec<EpochStats>,
    pub termination: Termination,
}

pub fn build_pool(workers: usize) -> Result<rayon::ThreadPool, rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()
}

/// Episodes of a batch in order, or the first failing episode index and its error.
pub type BatchResult<E> =
    Result<Vec<EpisodeOutcome<<E as Environment>::Episode>>, (u32, EpisodeError<<E as Environment>::Error>)>;

/// Runs episodes `0..n` on streams `(seed, purpose, epoch, k)` in parallel and
/// returns them in episode order. The first failure (by episode index) wins.
pub fn run_batch<E: Environment, P: StochasticPolicy + ?Sized>(
    pool: &rayon::ThreadPool,
    env: &E,
    policy: &P,
    seed: u64,
    purpose: Purpose,
    epoch: u32,
    n: u32,
) -> BatchResult<E> {
    let results: Vec<_> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|k| run_episode(env, policy, StreamId::new(seed, purpose, epoch, k)))
            .collect()
    });
    results.into_iter().enumerate().map(|(k, r)| r.map_err(|e| (k as u32, e))).collect()
}

/// Trains `policy` in place of a fresh copy and returns the best snapshot.
pub fn train<E: Environment, P: DifferentiablePolicy>(
    env: &E,
    policy: P,
    cfg: &TrainConfig,
) -> Result<TrainResult<P>, TrainError<E::Error>> {
    train_with(env, policy, cfg, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with<E: Environment, P: DifferentiablePolicy, F: FnMut(&EpochStats)>(
    env: &E,
    mut policy: P,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainResult<P>, TrainError<E::Error>> {
    cfg.validate().map_err(TrainError::InvalidConfig)?;
    let pool = build_pool(cfg.workers).map_err(|e| TrainError::WorkerPool(e.to_string()))?;
    let mut optimizer = Optimizer::new(cfg.optimizer, policy.params().len());

    let mut best_policy = policy.clone();
    let mut best_epoch = 0;
    let mut best_mean = f64::NEG_INFINITY;
    let mut since_improvement = 0;
    let mut history = Vec::new();
    let mut termination = Termination::MaxEpochs;

    for epoch in 0..cfg.epochs_max {
        let started = Instant::now();
        let policy_ref = &policy;
        type Scored<Err> = Result<(f64, Vec<f64>), EpisodeError<Err>>;
        let scored: Vec<Scored<E::Error>> = pool.install(|| {
            (0..cfg.episodes_per_epoch)
                .into_par_iter()
                .map(|k| {
                    let out = run_episode(env, policy_ref, StreamId::new(cfg.seed, Purpose::Training, epoch, k))?;
                    let score = episode_score(policy_ref, &out.steps)?;
                    Ok((out.total_return, score))
                })
                .collect()
        });
        let mut returns = Vec::with_capacity(scored.len());
        let mut scores = Vec::with_capacity(scored.len());
        for (k, r) in scored.into_iter().enumerate() {
            let (j, s) = r.map_err(|source| TrainError::Episode { epoch, episode: k as u32, source })?;
            returns.push(j);
            scores.push(s);
        }

        let (mean_return, sd_return) = mean_and_std(&returns);
        if mean_return > best_mean {
            best_mean = mean_return;
            best_epoch = epoch;
            best_policy = policy.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        let stop = since_improvement >= cfg.patience;
        if !stop {
            let grad = estimate_gradient(&scores, &returns, cfg.eps_mach);
            optimizer
                .step(policy.params_mut(), &grad, cfg.learning_rate)
                .map_err(|_| TrainError::NonFiniteGradient { epoch })?;
        }
        let stats = EpochStats {
            epoch,
            mean_return,
            sd_return,
            returns,
            best_so_far: best_mean,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        on_epoch(&stats);
        history.push(stats);
        if stop {
            termination = Termination::EarlyStop;
            break;
        }
    }

    Ok(TrainResult { best_policy, best_epoch, best_mean_return: best_mean, history, termination })
}

/// Small analytic problems for exercising the estimator and trainer.
pub mod toy {
    use super::*;
    use crate::policy::PolicyOutput;

    /// One-channel Gaussian policy with mean `θ` and fixed σ, ignoring features.
    #[derive(Debug, Clone, PartialEq)]
    pub struct ScalarGaussianPolicy {
        pub theta: [f64; 1],
        pub sigma: f64,
    }

    impl StochasticPolicy for ScalarGaussianPolicy {
        fn forward(&self, _features: &[f64]) -> Result<PolicyOutput, PolicyError> {
            Ok(PolicyOutput { mean: vec![self.theta[0]], std: vec![self.sigma] })
        }
    }

    impl DifferentiablePolicy for ScalarGaussianPolicy {
        fn params(&self) -> &[f64] {
            &self.theta
        }

        fn params_mut(&mut self) -> &mut [f64] {
            &mut self.theta
        }

        fn accumulate_grad_log_prob(&self, _features: &[f64], u_raw: &[f64], grad: &mut [f64]) -> Result<(), PolicyError> {
            grad[0] += (u_raw[0] - self.theta[0]) / (self.sigma * self.sigma);
            Ok(())
        }
    }

    /// One-step problem with reward `-(u - target)^2`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct QuadraticEnv {
        pub target: f64,
        pub bounds: (f64, f64),
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
    #[error("toy environment misuse")]
    pub struct ToyError;

    impl Environment for QuadraticEnv {
        type Episode = bool;
        type Error = ToyError;

        fn feature_dim(&self) -> usize {
            1
        }

        fn action_dim(&self) -> usize {
            1
        }

        fn action_bounds(&self) -> (f64, f64) {
            self.bounds
        }

        fn n_steps(&self) -> usize {
            1
        }

        fn reset(&self, _stream: StreamId, _rng: &mut EpisodeRng) -> Result<bool, ToyError> {
            Ok(false)
        }

        fn observe(&self, _episode: &bool, out: &mut Vec<f64>) {
            out.clear();
            out.push(0.0);
        }

        fn step(&self, done: &mut bool, action: &[f64]) -> Result<f64, ToyError> {
            if *done {
                return Err(ToyError);
            }
            *done = true;
            Ok(-(action[0] - self.target).powi(2))
        }
    }
}
