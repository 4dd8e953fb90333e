//! The normalized Monte-Carlo estimator against analytic gradients, and the
//! trainer's convergence, stopping and reproducibility contracts.

use metctl_core::env::{BioprocessEnv, Objective, UncertaintySpec};
use metctl_core::models::ModelKind;
use metctl_core::policy::{DifferentiablePolicy, GaussianMlp, StochasticPolicy};
use metctl_core::reinforce::toy::{QuadraticEnv, ScalarGaussianPolicy};
use metctl_core::reinforce::{
    build_pool, episode_score, estimate_gradient, mean_and_std, run_batch, train, Environment, OptimizerKind,
    Termination, TrainConfig, TrainError,
};
use metctl_core::sim::IntegratorConfig;
use metctl_core::streams::{EpisodeRng, Purpose, StreamId};
use thiserror::Error;

/// Returns `(ĝ, σ_J)` for one batch of `n` toy episodes.
fn toy_batch(theta: f64, sigma: f64, n: u32, seed: u64, epoch: u32) -> (f64, f64) {
    let env = QuadraticEnv { target: 0.0, bounds: (-1e9, 1e9) };
    let pol = ScalarGaussianPolicy { theta: [theta], sigma };
    let pool = build_pool(1).unwrap();
    let outs = run_batch(&pool, &env, &pol, seed, Purpose::Training, epoch, n).unwrap();
    let returns: Vec<f64> = outs.iter().map(|o| o.total_return).collect();
    let scores: Vec<Vec<f64>> = outs.iter().map(|o| episode_score(&pol, &o.steps).unwrap()).collect();
    let g = estimate_gradient(&scores, &returns, 1e-8);
    (g[0], mean_and_std(&returns).1)
}

#[test]
fn estimator_matches_analytic_gradient_over_1e5_episodes() {
    // J = -u², u ~ N(θ, σ²): ∇θ E[J] = -2θ. Normalization divides by σ_J,
    // so the rescaled estimate ĝ (σ_J + eps) is compared with -2θ.
    for theta in [1.0, -0.7, 2.5] {
        let (g, sd) = toy_batch(theta, 0.5, 100_000, 1, 0);
        let rescaled = g * (sd + 1e-8);
        let analytic = -2.0 * theta;
        assert_eq!(rescaled.signum(), analytic.signum());
        assert!((rescaled - analytic).abs() <= 0.1 * analytic.abs(), "θ={theta}: {rescaled} vs {analytic}");
    }
}

#[test]
fn estimator_is_unbiased_across_epochs() {
    // Averaging many small batches; the in-batch mean baseline contributes a
    // known (1 - 1/N) factor.
    let (theta, n, batches) = (1.3, 50u32, 2_000u32);
    let mut acc = 0.0;
    for b in 0..batches {
        let (g, sd) = toy_batch(theta, 0.5, n, 2, b);
        acc += g * (sd + 1e-8);
    }
    let mean = acc / batches as f64;
    let expected = -2.0 * theta * (1.0 - 1.0 / n as f64);
    assert!((mean - expected).abs() <= 0.05 * expected.abs(), "{mean} vs {expected}");
}

fn toy_cfg() -> TrainConfig {
    TrainConfig {
        epochs_max: 600,
        episodes_per_epoch: 64,
        learning_rate: 0.02,
        patience: 600,
        eps_mach: 1e-8,
        seed: 17,
        optimizer: OptimizerKind::default(),
        workers: 1,
    }
}

#[test]
fn mlp_policy_converges_to_the_quadratic_optimum() {
    let env = QuadraticEnv { target: 6.3, bounds: (0.0, 10.0) };
    let mut rng = StreamId::new(17, Purpose::Init, 0, 0).rng();
    let policy = GaussianMlp::init(vec![1, 8, 8, 2], 0.01, env.bounds, &mut rng).unwrap();
    let result = train(&env, policy, &toy_cfg()).unwrap();
    let out = result.best_policy.forward(&[0.0]).unwrap();
    let sigma_min = result.best_policy.sigma_min();
    assert!((out.mean[0] - 6.3).abs() <= 2.0 * sigma_min, "mean {} (σ_min {sigma_min})", out.mean[0]);
}

#[test]
fn sgd_ascent_on_the_toy_problem() {
    let env = QuadraticEnv { target: 2.0, bounds: (-1e6, 1e6) };
    let pol = ScalarGaussianPolicy { theta: [-1.0], sigma: 0.3 };
    let cfg = TrainConfig { optimizer: OptimizerKind::Sgd, learning_rate: 0.05, epochs_max: 400, ..toy_cfg() };
    let result = train(&env, pol, &cfg).unwrap();
    assert!((result.best_policy.theta[0] - 2.0).abs() < 0.1, "{}", result.best_policy.theta[0]);
}

/// Pays a constant reward, or fails on a chosen episode.
struct FixedEnv {
    fail_on: Option<u32>,
}

#[derive(Debug, Error)]
#[error("scripted failure")]
struct Scripted;

impl Environment for FixedEnv {
    type Episode = u32;
    type Error = Scripted;
    fn feature_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn action_bounds(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
    fn n_steps(&self) -> usize {
        2
    }
    fn reset(&self, stream: StreamId, _rng: &mut EpisodeRng) -> Result<u32, Scripted> {
        match self.fail_on {
            Some(k) if k == stream.episode => Err(Scripted),
            _ => Ok(stream.episode),
        }
    }
    fn observe(&self, _e: &u32, out: &mut Vec<f64>) {
        out.clear();
        out.push(0.0);
    }
    fn step(&self, _e: &mut u32, _a: &[f64]) -> Result<f64, Scripted> {
        Ok(0.5)
    }
}

#[test]
fn patience_one_stops_right_after_the_first_epoch() {
    let pol = ScalarGaussianPolicy { theta: [0.0], sigma: 0.1 };
    let cfg = TrainConfig { patience: 1, epochs_max: 50, episodes_per_epoch: 4, ..toy_cfg() };
    let result = train(&FixedEnv { fail_on: None }, pol.clone(), &cfg).unwrap();
    assert_eq!(result.termination, Termination::EarlyStop);
    assert_eq!(result.history.len(), 2);
    assert_eq!(result.best_epoch, 0);
    assert_eq!(result.best_policy, pol);
    assert_eq!(result.best_mean_return, 1.0);
}

#[test]
fn max_epochs_termination() {
    let pol = ScalarGaussianPolicy { theta: [0.0], sigma: 0.1 };
    let cfg = TrainConfig { patience: 10, epochs_max: 3, episodes_per_epoch: 4, ..toy_cfg() };
    let result = train(&FixedEnv { fail_on: None }, pol, &cfg).unwrap();
    assert_eq!(result.termination, Termination::MaxEpochs);
    assert_eq!(result.history.len(), 3);
}

#[test]
fn episode_failures_abort_with_their_identity() {
    let pol = ScalarGaussianPolicy { theta: [0.0], sigma: 0.1 };
    let cfg = TrainConfig { episodes_per_epoch: 6, workers: 3, ..toy_cfg() };
    match train(&FixedEnv { fail_on: Some(3) }, pol, &cfg) {
        Err(TrainError::Episode { epoch: 0, episode: 3, .. }) => {}
        other => panic!("unexpected: {:?}", other.map(|r| r.best_epoch)),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let pol = ScalarGaussianPolicy { theta: [0.0], sigma: 0.1 };
    let cfg = TrainConfig { episodes_per_epoch: 1, ..toy_cfg() };
    assert!(matches!(train(&FixedEnv { fail_on: None }, pol, &cfg), Err(TrainError::InvalidConfig(_))));
}

#[test]
fn bioprocess_training_is_bitwise_reproducible_across_worker_counts() {
    let env = BioprocessEnv::new(
        ModelKind::FattyAcid.nominal(),
        ModelKind::FattyAcid.nominal_initial_state(),
        UncertaintySpec::default_for(ModelKind::FattyAcid, 0.2),
        25.0,
        25,
        (0.0, 1000.0),
        Objective::TerminalTiter,
        IntegratorConfig::default(),
    )
    .unwrap();
    let mut rng = StreamId::new(5, Purpose::Init, 0, 0).rng();
    let policy = GaussianMlp::with_default_layout(env.feature_dim(), 1, env.action_bounds(), &mut rng).unwrap();
    let cfg = TrainConfig { epochs_max: 4, episodes_per_epoch: 12, learning_rate: 0.0075, patience: 50, seed: 5, ..toy_cfg() };
    let a = train(&env, policy.clone(), &cfg).unwrap();
    let b = train(&env, policy, &TrainConfig { workers: 8, ..cfg }).unwrap();
    let bits = |p: &GaussianMlp| p.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.best_policy), bits(&b.best_policy));
    assert_eq!(a.best_epoch, b.best_epoch);
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!(x.returns, y.returns);
        assert_eq!(x.mean_return.to_bits(), y.mean_return.to_bits());
    }
}
