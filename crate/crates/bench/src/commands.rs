//! The four CLI verbs: `simulate`, `train`, `benchmark`, `reference`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use metctl_core::env::{fmt_real, BioprocessEnv, BioprocessEpisode, Objective};
use metctl_core::policy::{ConstantPolicy, GaussianMlp, StochasticPolicy};
use metctl_core::reinforce::{build_pool, mean_and_std, run_batch, train_with, EpisodeOutcome, Termination};
use metctl_core::streams::{Purpose, StreamId};
use metctl_core::{Environment, ReferenceTrajectory};

use crate::config::{LoadedConfig, ScenarioConfig};
use crate::error::{io_err, CliError};

/// Episodes behind every evaluation band and benchmark row.
pub const EVAL_EPISODES: u32 = 500;

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `train.seed` from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if absent).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides `train.workers` from the configuration.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Uncertainty level; 0 (deterministic) unless given.
    #[arg(long)]
    pub level: Option<f64>,
    /// Constant input for every interval; defaults to the baseline input.
    #[arg(long, conflicts_with = "schedule")]
    pub u: Option<f64>,
    /// CSV with header `u` and one row per control interval.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Uncertainty level(s) to train at; defaults to the configured level.
    #[arg(long = "level")]
    pub levels: Vec<f64>,
    /// Overrides `train.epochs_max`.
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Overrides `train.episodes_per_epoch`.
    #[arg(long)]
    pub episodes: Option<u32>,
    /// Episodes in the post-training evaluation.
    #[arg(long, default_value_t = EVAL_EPISODES)]
    pub eval_episodes: u32,
    /// Record real epoch durations in the training log (otherwise 0, keeping logs reproducible).
    #[arg(long)]
    pub wall_time: bool,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Uncertainty level(s) to compare at; defaults to the configured level.
    #[arg(long = "level")]
    pub levels: Vec<f64>,
    /// Directory holding trained checkpoints; defaults to `--out`.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    /// Episodes per scenario and level.
    #[arg(long, default_value_t = EVAL_EPISODES)]
    pub episodes: u32,
}

#[derive(Debug, Clone, Args)]
pub struct ReferenceArgs {
    /// Scenario configuration (JSON); must use the lactate model.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if absent).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// First interval under full light; defaults to the configured or midway index.
    #[arg(long)]
    pub switch_index: Option<usize>,
}

/// Text form of an uncertainty level used in artifact names.
pub fn level_tag(level: f64) -> String {
    format!("{level:?}")
}

pub fn checkpoint_name(level: f64) -> String {
    format!("policy_level-{}.bin", level_tag(level))
}

fn check_level(level: f64) -> Result<f64, CliError> {
    if level.is_finite() && level >= 0.0 {
        Ok(level)
    } else {
        Err(CliError::Config(format!("uncertainty level must be >= 0, got {level}")))
    }
}

fn load(common: &CommonArgs) -> Result<LoadedConfig, CliError> {
    let mut loaded = ScenarioConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        loaded.config.train.seed = seed;
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        loaded.config.train.workers = w;
    }
    Ok(loaded)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.flush().map_err(io_err(path))
}

/// Column names and per-breakpoint values of one finished episode.
///
/// The input on row `k` is the one held over `[t_k, t_{k+1})`; the last row
/// repeats it. The reward on row `k` is the one earned on arriving at `t_k`.
pub fn episode_table(env: &BioprocessEnv, ep: &BioprocessEpisode) -> (Vec<String>, Vec<Vec<f64>>) {
    let tr = &ep.trajectory;
    let mut names: Vec<String> = env.initial_state.labels().iter().map(|s| s.to_string()).collect();
    names.extend(ep.model.measurements(tr.states[0].values()).iter().map(|(l, _)| l.to_string()));
    names.push("u".into());
    let e_ref = match &env.objective {
        Objective::Tracking(r) => {
            names.push("e_ref".into());
            Some(&r.e_ref)
        }
        Objective::TerminalTiter => None,
    };
    names.push("reward".into());
    let n = tr.inputs.len();
    let rows = tr
        .states
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let mut row = x.values().to_vec();
            row.extend(ep.model.measurements(x.values()).iter().map(|(_, v)| v));
            row.push(if n == 0 { 0.0 } else { tr.inputs[k.min(n - 1)] });
            if let Some(r) = e_ref {
                row.push(r[k]);
            }
            row.push(if k == 0 { 0.0 } else { tr.rewards[k - 1] });
            row
        })
        .collect();
    (names, rows)
}

fn final_product(ep: &BioprocessEpisode) -> f64 {
    ep.model.product_titer(ep.trajectory.states.last().expect("non-empty trajectory").values())
}

/// Result of `simulate`.
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub path: PathBuf,
    pub final_product: f64,
    pub total_return: f64,
}

fn read_schedule(path: &Path, n: usize) -> Result<Vec<f64>, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(format!("schedule file {}", path.display())));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| CliError::Config(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["u"] {
        return Err(CliError::Config(format!("{}: expected the single header `u`", path.display())));
    }
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let v: f64 = rec[0]
            .trim()
            .parse()
            .map_err(|e| CliError::Config(format!("{}: row {}: {e}", path.display(), i + 2)))?;
        values.push(v);
    }
    if values.len() != n {
        return Err(CliError::Config(format!(
            "{}: {} inputs given, scenario has {n} intervals",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

pub fn simulate(args: &SimulateArgs) -> Result<SimulateOutput, CliError> {
    let LoadedConfig { config, base_dir } = load(&args.common)?;
    let level = check_level(args.level.unwrap_or(0.0))?;
    let env = config.build_env(&base_dir, level)?;
    let inputs = match (&args.schedule, args.u) {
        (Some(path), _) => read_schedule(path, config.n_intervals)?,
        (None, u) => vec![u.unwrap_or(config.baseline_input()); config.n_intervals],
    };
    let (lb, ub) = config.input_bounds;
    if let Some(u) = inputs.iter().find(|u| !(lb..=ub).contains(*u)) {
        return Err(CliError::Config(format!("input {u} lies outside input_bounds [{lb}, {ub}]")));
    }

    let stream = StreamId::new(config.train.seed, Purpose::Sampler, 0, 0);
    let mut rng = stream.rng();
    let mut ep = env.reset(stream, &mut rng).map_err(CliError::from_env)?;
    let mut total_return = 0.0;
    for u in &inputs {
        total_return += env.step(&mut ep, &[*u]).map_err(CliError::from_env)?;
    }

    prepare_out(&args.common.out)?;
    let path = args.common.out.join("trajectory.csv");
    let (names, rows) = episode_table(&env, &ep);
    write_table(&path, &env, &names, &rows)?;
    Ok(SimulateOutput { path, final_product: final_product(&ep), total_return })
}

fn write_table(path: &Path, env: &BioprocessEnv, names: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut header = vec!["time_h".to_string()];
    header.extend(names.iter().cloned());
    let lines = rows.iter().zip(env.breakpoints()).map(|(row, t)| {
        let mut line = vec![fmt_real(*t)];
        line.extend(row.iter().map(|v| fmt_real(*v)));
        line
    });
    write_csv(path, &header, lines)
}

/// Return and product statistics over a batch of evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSummary {
    pub episodes: u32,
    pub mean_return: f64,
    pub sd_return: f64,
    pub mean_final_product: f64,
    pub sd_final_product: f64,
    /// Root-mean-square enzyme tracking error over all episodes and breakpoints.
    pub tracking_rmse: Option<f64>,
}

fn summarize(env: &BioprocessEnv, outcomes: &[EpisodeOutcome<BioprocessEpisode>]) -> EvaluationSummary {
    let returns: Vec<f64> = outcomes.iter().map(|o| o.total_return).collect();
    let finals: Vec<f64> = outcomes.iter().map(|o| final_product(&o.episode)).collect();
    let (mean_return, sd_return) = mean_and_std(&returns);
    let (mean_final_product, sd_final_product) = mean_and_std(&finals);
    let tracking_rmse = match env.objective {
        Objective::Tracking(_) => Some((-mean_return / env.n_intervals as f64).max(0.0).sqrt()),
        Objective::TerminalTiter => None,
    };
    EvaluationSummary {
        episodes: outcomes.len() as u32,
        mean_return,
        sd_return,
        mean_final_product,
        sd_final_product,
        tracking_rmse,
    }
}

fn evaluate<P: StochasticPolicy>(
    env: &BioprocessEnv,
    policy: &P,
    seed: u64,
    purpose: Purpose,
    episodes: u32,
    workers: usize,
) -> Result<Vec<EpisodeOutcome<BioprocessEpisode>>, CliError> {
    if episodes == 0 {
        return Err(CliError::Config("evaluation needs at least one episode".into()));
    }
    let pool = build_pool(workers).map_err(|e| CliError::Io(e.to_string()))?;
    run_batch(&pool, env, policy, seed, purpose, 0, episodes).map_err(|(k, e)| match CliError::from_episode(e) {
        CliError::Numerical(m) => CliError::Numerical(format!("evaluation episode {k}: {m}")),
        other => other,
    })
}

/// Per-breakpoint mean and population sd of every series except the reward.
fn write_bands(path: &Path, env: &BioprocessEnv, outcomes: &[EpisodeOutcome<BioprocessEpisode>]) -> Result<(), CliError> {
    let tables: Vec<_> = outcomes.iter().map(|o| episode_table(env, &o.episode)).collect();
    let names = &tables[0].0;
    let n_series = names.len() - 1;
    let mut header = vec!["time_h".to_string()];
    for name in &names[..n_series] {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_sd"));
    }
    let rows = env.breakpoints().iter().enumerate().map(|(k, t)| {
        let mut line = vec![fmt_real(*t)];
        for j in 0..n_series {
            let column: Vec<f64> = tables.iter().map(|(_, rows)| rows[k][j]).collect();
            let (m, s) = mean_and_std(&column);
            line.push(fmt_real(m));
            line.push(fmt_real(s));
        }
        line
    });
    write_csv(path, &header, rows)
}

fn write_summary(path: &Path, s: &EvaluationSummary) -> Result<(), CliError> {
    let mut rows = vec![
        vec!["episodes".to_string(), s.episodes.to_string()],
        vec!["mean_return".into(), fmt_real(s.mean_return)],
        vec!["sd_return".into(), fmt_real(s.sd_return)],
        vec!["mean_final_product".into(), fmt_real(s.mean_final_product)],
        vec!["sd_final_product".into(), fmt_real(s.sd_final_product)],
    ];
    if let Some(r) = s.tracking_rmse {
        rows.push(vec!["tracking_rmse".into(), fmt_real(r)]);
    }
    write_csv(path, &["metric".to_string(), "value".to_string()], rows)
}

/// Result of training at one uncertainty level.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub level: f64,
    pub best_epoch: u32,
    pub best_mean_return: f64,
    pub epochs_run: u32,
    pub early_stopped: bool,
    pub evaluation: EvaluationSummary,
    pub checkpoint: PathBuf,
}

pub fn train(args: &TrainArgs) -> Result<Vec<TrainOutcome>, CliError> {
    let LoadedConfig { mut config, base_dir } = load(&args.common)?;
    if let Some(e) = args.epochs {
        config.train.epochs_max = e;
    }
    if let Some(n) = args.episodes {
        config.train.episodes_per_epoch = n;
    }
    config.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
    let levels = if args.levels.is_empty() { vec![config.uncertainty.level] } else { args.levels.clone() };
    prepare_out(&args.common.out)?;

    let mut outcomes = Vec::new();
    for level in levels {
        let level = check_level(level)?;
        let env = config.build_env(&base_dir, level)?;
        let tcfg = &config.train;
        let mut init_rng = StreamId::new(tcfg.seed, Purpose::Init, 0, 0).rng();
        let policy = GaussianMlp::with_default_layout(env.feature_dim(), env.action_dim(), env.action_bounds(), &mut init_rng)
            .map_err(|e| CliError::Config(e.to_string()))?;

        let tag = level_tag(level);
        let mut log_rows = Vec::new();
        let result = train_with(&env, policy, tcfg, |s| {
            if !args.quiet && (s.epoch % 10 == 0 || s.epoch + 1 == tcfg.epochs_max) {
                eprintln!(
                    "[level {tag}] epoch {:>4}  mean {:>12.6}  sd {:>10.6}  best {:>12.6}",
                    s.epoch, s.mean_return, s.sd_return, s.best_so_far
                );
            }
            log_rows.push(vec![
                s.epoch.to_string(),
                fmt_real(s.mean_return),
                fmt_real(s.sd_return),
                fmt_real(s.best_so_far),
                if args.wall_time { s.wall_ms.to_string() } else { "0".into() },
            ]);
        })
        .map_err(CliError::from_train)?;

        let header: Vec<String> =
            ["epoch", "mean_return", "sd_return", "best_so_far", "wall_ms"].iter().map(|s| s.to_string()).collect();
        write_csv(&args.common.out.join(format!("training_log_level-{tag}.csv")), &header, log_rows)?;
        let checkpoint = args.common.out.join(checkpoint_name(level));
        result.best_policy.save(&checkpoint).map_err(|e| CliError::Io(format!("{}: {e}", checkpoint.display())))?;

        let eval = evaluate(&env, &result.best_policy, tcfg.seed, Purpose::Evaluation, args.eval_episodes, tcfg.workers)?;
        write_bands(&args.common.out.join(format!("evaluation_level-{tag}.csv")), &env, &eval)?;
        let evaluation = summarize(&env, &eval);
        write_summary(&args.common.out.join(format!("summary_level-{tag}.csv")), &evaluation)?;

        outcomes.push(TrainOutcome {
            level,
            best_epoch: result.best_epoch,
            best_mean_return: result.best_mean_return,
            epochs_run: result.history.len() as u32,
            early_stopped: result.termination == Termination::EarlyStop,
            evaluation,
            checkpoint,
        });
    }
    Ok(outcomes)
}

/// One row of the static-versus-dynamic comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub level: f64,
    /// `SC` (static control) or `DC` (dynamic control).
    pub scenario: &'static str,
    pub episodes: u32,
    pub mean_final: f64,
    pub sd_final: f64,
    /// `100 (DC - SC) / SC`, on DC rows only.
    pub improvement_pct: Option<f64>,
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<Vec<BenchmarkRow>, CliError> {
    let LoadedConfig { config, base_dir } = load(&args.common)?;
    let levels = if args.levels.is_empty() { vec![config.uncertainty.level] } else { args.levels.clone() };
    let dir = args.checkpoints.clone().unwrap_or_else(|| args.common.out.clone());
    let (seed, workers) = (config.train.seed, config.train.workers);

    // Resolve every checkpoint before spending time on simulation.
    let mut policies = Vec::new();
    for &level in &levels {
        let level = check_level(level)?;
        let path = dir.join(checkpoint_name(level));
        if !path.exists() {
            return Err(CliError::MissingArtifact(format!("no checkpoint for level {} at {}", level_tag(level), path.display())));
        }
        let policy = GaussianMlp::load(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        policies.push((level, policy));
    }

    let mut rows = Vec::new();
    for (level, policy) in policies {
        let env = config.build_env(&base_dir, level)?;
        if policy.n_features() != env.feature_dim() || policy.bounds() != env.action_bounds() {
            return Err(CliError::Config(format!("checkpoint for level {} does not fit this scenario", level_tag(level))));
        }
        let baseline = ConstantPolicy { u: vec![config.baseline_input()] };
        let sc = summarize(&env, &evaluate(&env, &baseline, seed, Purpose::Baseline, args.episodes, workers)?);
        let dc = summarize(&env, &evaluate(&env, &policy, seed, Purpose::Evaluation, args.episodes, workers)?);
        let improvement = 100.0 * (dc.mean_final_product - sc.mean_final_product) / sc.mean_final_product;
        for (scenario, s, imp) in [("SC", &sc, None), ("DC", &dc, Some(improvement))] {
            rows.push(BenchmarkRow {
                level,
                scenario,
                episodes: s.episodes,
                mean_final: s.mean_final_product,
                sd_final: s.sd_final_product,
                improvement_pct: imp,
            });
        }
    }

    prepare_out(&args.common.out)?;
    let header: Vec<String> = ["level", "scenario", "episodes", "mean_final", "sd_final", "improvement_pct"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let lines = rows.iter().map(|r| {
        vec![
            fmt_real(r.level),
            r.scenario.to_string(),
            r.episodes.to_string(),
            fmt_real(r.mean_final),
            fmt_real(r.sd_final),
            r.improvement_pct.map(fmt_real).unwrap_or_default(),
        ]
    });
    write_csv(&args.common.out.join("benchmark.csv"), &header, lines)?;
    Ok(rows)
}

pub fn reference(args: &ReferenceArgs) -> Result<ReferenceTrajectory, CliError> {
    let LoadedConfig { config, .. } = ScenarioConfig::load(&args.config)?;
    let switch_index = args.switch_index.unwrap_or_else(|| config.switch_index());
    let reference = config.generated_reference(switch_index)?;
    prepare_out(&args.out)?;
    let path = args.out.join("reference.csv");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    reference.write_csv(file).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(reference)
}
