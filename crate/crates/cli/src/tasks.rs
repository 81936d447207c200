//! Task execution and report writing. Every number in a report comes from a
//! library call; this module only formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use agenda_core::analysis;
use agenda_core::belief::{public_update, VoteProfile};
use agenda_core::benchmarks;
use agenda_core::engine::{
    self, EnumerationOptions, OutcomeDistribution, Profile,
};
use agenda_core::poisson;
use agenda_core::pooling::{self, PoolingOptions};
use agenda_core::screening::{self, ScreeningOptions, ScreeningPath};
use agenda_core::test_support::enumerate_pmf;
use agenda_core::{Belief, ModelParams, Signal, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{Config, GridParameter, TaskKind};

/// Failures ranked by exit code: config 2, validation 3, solver 4, internal 5.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Validation(String),
    Solver(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Internal(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Validation(_) => "validation",
            CliError::Solver(_) => "solver",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Validation(m)
            | CliError::Solver(m)
            | CliError::Internal(m) => m,
        }
    }
}

impl From<agenda_core::model::ModelError> for CliError {
    fn from(e: agenda_core::model::ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<benchmarks::BenchmarkError> for CliError {
    fn from(e: benchmarks::BenchmarkError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<screening::ScreeningError> for CliError {
    fn from(e: screening::ScreeningError) -> Self {
        match e {
            screening::ScreeningError::Model(m) => CliError::Validation(m.to_string()),
            screening::ScreeningError::InformedVoterOutOfRange { .. } => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<pooling::PoolingError> for CliError {
    fn from(e: pooling::PoolingError) -> Self {
        match e {
            pooling::PoolingError::Model(m) => CliError::Validation(m.to_string()),
            pooling::PoolingError::QuotaTooSmall(_)
            | pooling::PoolingError::UnequalPrecisions { .. } => {
                CliError::Validation(e.to_string())
            }
            pooling::PoolingError::Engine(x) => CliError::Internal(x.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<engine::EngineError> for CliError {
    fn from(e: engine::EngineError) -> Self {
        CliError::Internal(e.to_string())
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_periods: Option<u32>,
    pub episodes: Option<u64>,
}

struct Resolved {
    params: ModelParams,
    informed: usize,
    seed: u64,
    episodes: u64,
    enumeration: EnumerationOptions,
    solver_tol: f64,
    max_iterations: usize,
}

fn resolve(config: &Config, over: &Overrides) -> Result<Resolved, CliError> {
    let params = config.model.to_params();
    params.validate()?;
    let informed_1based = config.task.informed_voter.unwrap_or(params.quota);
    if informed_1based == 0 || informed_1based > params.n_voters {
        return Err(CliError::Config(format!(
            "informed_voter {informed_1based} outside 1..={}",
            params.n_voters
        )));
    }
    Ok(Resolved {
        informed: informed_1based - 1,
        seed: over.seed.or(config.task.seed).unwrap_or(0),
        episodes: over.episodes.or(config.task.episodes).unwrap_or(100_000),
        enumeration: EnumerationOptions {
            max_periods: over.max_periods.unwrap_or(config.tolerances.max_periods),
            residual_tol: config.tolerances.residual,
        },
        solver_tol: over.tol.unwrap_or(config.tolerances.solver),
        max_iterations: config.tolerances.max_iterations,
        params,
    })
}

fn state_dists(
    params: &ModelParams,
    profile: &dyn Profile,
    mu: Belief,
    opts: EnumerationOptions,
) -> Result<(OutcomeDistribution, OutcomeDistribution), CliError> {
    let low = engine::induced_distribution(params, profile, mu, State::Low, opts)?;
    let high = engine::induced_distribution(params, profile, mu, State::High, opts)?;
    Ok((low, high))
}

fn exact_profile_value(
    params: &ModelParams,
    profile: &dyn Profile,
    mu: Belief,
    opts: EnumerationOptions,
) -> Result<f64, CliError> {
    let (low, high) = state_dists(params, profile, mu, opts)?;
    Ok(engine::expected_payoffs(params, &low, &high, mu).proposer)
}

/// On-path node beliefs of a screening path, entry node first.
fn screening_nodes(path: &ScreeningPath) -> Vec<Belief> {
    let mut nodes = vec![Belief::new(path.initial_belief)];
    for cutoff in path.cutoffs[..path.steps() - 1].iter().rev() {
        nodes.push(Belief::new(*cutoff));
    }
    nodes
}

fn screening_report(r: &Resolved) -> Result<serde_json::Value, CliError> {
    let mu = r.params.prior();
    let opts = ScreeningOptions { solver_tol: r.solver_tol.min(1e-12), max_levels: r.max_iterations };
    let path = screening::screening_sequence(&r.params, r.informed, mu, opts)?;
    let profile = screening::build_screening_profile(&r.params, &path);
    let exact = exact_profile_value(&r.params, &profile, mu, r.enumeration)?;
    let limit = screening::screening_limit_value(&r.params, r.informed, mu);
    // Worst on-path deviation gain of the informed voter and worst Bayes
    // residual of the drain targets.
    let mut worst_gain = f64::NEG_INFINITY;
    let mut worst_bayes: f64 = 0.0;
    let nodes = screening_nodes(&path);
    for (k, &node) in nodes.iter().enumerate() {
        let policy = path.policies[path.steps() - 1 - k];
        for signal in Signal::BOTH {
            for accept in [false, true] {
                let gain = engine::deviation_gain(
                    &r.params,
                    &profile,
                    node,
                    policy,
                    r.informed,
                    signal,
                    accept,
                    r.enumeration,
                )?;
                worst_gain = worst_gain.max(gain);
            }
        }
        if k + 1 < nodes.len() {
            let mut votes = vec![false; r.params.n_voters];
            for j in 0..r.params.n_voters {
                votes[j] = j != r.informed
                    && profile.acceptance(j, Signal::Low, node, policy) == 1.0;
            }
            let post = public_update(&r.params, &profile, node, policy, &VoteProfile(votes));
            worst_bayes = worst_bayes.max((post.prob_high() - nodes[k + 1].prob_high()).abs());
        }
    }
    Ok(json!({
        "informed_voter": r.informed + 1,
        "steps": path.steps(),
        "policies": path.policies,
        "cutoffs": path.cutoffs,
        "accept_probs": path.accept_probs,
        "exact_value": exact,
        "limit_value": limit,
        "relative_gap": (exact - limit).abs() / limit,
        "max_deviation_gain": worst_gain,
        "max_bayes_residual": worst_bayes,
    }))
}

fn pooling_report(r: &Resolved) -> Result<serde_json::Value, CliError> {
    let mu = r.params.prior();
    let opts = PoolingOptions { grid_step_frac: 1e-3, solver_tol: r.solver_tol.min(1e-12) };
    let sol = pooling::solve_tilde_p(&r.params, mu, opts)?;
    let profile = pooling::build_pooling_profile(&r.params, &sol);
    let exact = exact_profile_value(&r.params, &profile, mu, r.enumeration)?;
    let complete = benchmarks::complete_info_value(&r.params, mu);
    let mut worst_gain = f64::NEG_INFINITY;
    for node in [mu, Belief::new(sol.mu_tilde)] {
        for voter in 0..r.params.n_voters {
            for signal in Signal::BOTH {
                for accept in [false, true] {
                    let gain = pooling::deviation_gain(
                        &r.params, &profile, voter, signal, node, accept, r.enumeration,
                    )?;
                    worst_gain = worst_gain.max(gain);
                }
            }
        }
    }
    Ok(json!({
        "tilde_p": sol.tilde_p,
        "fallback_p": sol.fallback_p,
        "mu_tilde": sol.mu_tilde,
        "binding": format!("{:?}", sol.binding),
        "continuation_values": sol.continuation_values,
        "exact_value": exact,
        "complete_info_value": complete,
        "relative_gap": (exact - complete).abs() / complete,
        "max_deviation_gain": worst_gain,
    }))
}

fn benchmark_report(r: &Resolved) -> Result<serde_json::Value, CliError> {
    let mu = r.params.prior();
    let (policy, value) = benchmarks::tioli_value(&r.params, mu, r.max_iterations)?;
    Ok(json!({
        "complete_info_value": benchmarks::complete_info_value(&r.params, mu),
        "tioli_policy": policy,
        "tioli_value": value,
        "tioli_limit_value": benchmarks::tioli_limit_value(&r.params, mu),
    }))
}

fn analysis_report(config: &Config, r: &Resolved) -> Result<serde_json::Value, CliError> {
    let mu = r.params.prior();
    let regime = analysis::classify_regime(&r.params, r.informed)?;
    let revision = analysis::revision_value(&r.params, Some(r.informed), mu)?;
    let quota = match config.task.raised_quota {
        Some(raised) => {
            let cmp = analysis::quota_comparison(&r.params, raised, r.informed, mu)?;
            Some(json!({
                "raised_quota": raised,
                "value_current": cmp.value_current,
                "value_raised": cmp.value_raised,
                "preferred": format!("{:?}", cmp.preferred),
                "threshold": cmp.threshold,
            }))
        }
        None => None,
    };
    Ok(json!({
        "informed_voter": r.informed + 1,
        "regime": format!("{:?}", regime.kind),
        "boundary": regime.boundary,
        "state_high_limit_policy": regime.state_high_limit_policy,
        "setter_limit_value": analysis::setter_limit_value(&r.params, &regime, mu),
        "revision": {
            "with_revisions": revision.with_revisions,
            "without_revisions": revision.without_revisions,
            "verdict": format!("{:?}", revision.verdict),
            "threshold": revision.threshold,
        },
        "quota_comparison": quota,
    }))
}

fn simulate_report(config: &Config, r: &Resolved) -> Result<serde_json::Value, CliError> {
    let mu = r.params.prior();
    let which = config.task.profile.as_deref().unwrap_or("screening");
    let (profile, extra): (Box<dyn Profile>, serde_json::Value) = match which {
        "screening" => {
            let opts =
                ScreeningOptions { solver_tol: r.solver_tol.min(1e-12), max_levels: r.max_iterations };
            let path = screening::screening_sequence(&r.params, r.informed, mu, opts)?;
            let extra = json!({"steps": path.steps()});
            (Box::new(screening::build_screening_profile(&r.params, &path)), extra)
        }
        "pooling" => {
            let sol = pooling::solve_tilde_p(&r.params, mu, PoolingOptions::default())?;
            let extra = json!({"tilde_p": sol.tilde_p});
            (Box::new(pooling::build_pooling_profile(&r.params, &sol)), extra)
        }
        other => return Err(CliError::Config(format!("unknown profile {other:?}"))),
    };
    let (low, high) = state_dists(&r.params, profile.as_ref(), mu, r.enumeration)?;
    let exact = engine::expected_payoffs(&r.params, &low, &high, mu);
    let report = engine::simulate(
        &r.params,
        profile.as_ref(),
        r.seed,
        r.episodes,
        r.enumeration.max_periods,
    );
    let z_proposer = (report.mean_proposer - exact.proposer) / report.stderr_proposer;
    Ok(json!({
        "profile": which,
        "profile_detail": extra,
        "seed": r.seed,
        "episodes": r.episodes,
        "exact_proposer_value": exact.proposer,
        "empirical_proposer_mean": report.mean_proposer,
        "proposer_stderr": report.stderr_proposer,
        "proposer_z_score": z_proposer,
        "mean_voters": report.mean_voters,
        "stderr_voters": report.stderr_voters,
        "acceptance_by_period": report.acceptance_by_period,
        "never_frequency": report.never_frequency,
        "mean_accepted_policy": report.mean_accepted_policy,
    }))
}

/// Randomized self-verification suites. Returns (passed, failed) counts.
pub fn verify_target(target: &str, seed: u64, tol: f64) -> Result<serde_json::Value, CliError> {
    let mut sections = serde_json::Map::new();
    let mut total_failed = 0usize;
    if target == "poisson" || target == "all" {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut passed = 0usize;
        let mut failed = 0usize;
        for _ in 0..1000 {
            let n = rng.gen_range(1..=10);
            let z: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let table = poisson::pmf_table(&z).map_err(|e| CliError::Internal(e.to_string()))?;
            let pmf_ok = (0..=n).all(|r| (table[r] - enumerate_pmf(&z, r)).abs() < tol.max(1e-12));
            let modes = poisson::modes(&z).map_err(|e| CliError::Internal(e.to_string()))?;
            let mode_ok = !modes.is_empty()
                && modes.len() <= 2
                && (modes.len() == 1 || modes[1] == modes[0] + 1);
            if pmf_ok && mode_ok {
                passed += 1;
            } else {
                failed += 1;
            }
        }
        total_failed += failed;
        sections.insert("poisson".into(), json!({"passed": passed, "failed": failed}));
    }
    if target == "ranking" || target == "all" {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
        let mut passed = 0usize;
        let mut failed = 0usize;
        let mut produced = 0usize;
        while produced < 10_000 {
            let n = rng.gen_range(1..=10);
            let quota = rng.gen_range(1..=n);
            let eps = rng.gen::<f64>() / (n as f64 + 1.0);
            if eps == 0.0 {
                continue;
            }
            let z: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let z_prime: Vec<f64> =
                z.iter().map(|&v| v + (1.0 - v) * rng.gen::<f64>()).collect();
            produced += 1;
            let ok = poisson::verify_ranking(&z, &z_prime, quota, eps)
                .map_err(|e| CliError::Internal(e.to_string()))?
                .holds();
            if ok {
                passed += 1;
            } else {
                failed += 1;
            }
        }
        total_failed += failed;
        sections.insert("ranking".into(), json!({"passed": passed, "failed": failed}));
    }
    if sections.is_empty() {
        return Err(CliError::Config(format!("unknown verify target {target:?}")));
    }
    if total_failed > 0 {
        return Err(CliError::Internal(format!(
            "verification failed: {}",
            serde_json::Value::Object(sections)
        )));
    }
    Ok(serde_json::Value::Object(sections))
}

fn grid_apply(params: &ModelParams, parameter: GridParameter, value: f64) -> ModelParams {
    let mut p = params.clone();
    match parameter {
        GridParameter::PriorHigh => p.prior_high = value,
        GridParameter::Precision => p.precisions = vec![value; p.n_voters],
        GridParameter::Discount => p.discount = value,
        GridParameter::PrecisionDiscount => {
            p.precisions = vec![value; p.n_voters];
            p.discount = value;
        }
    }
    p
}

fn fmt(x: f64) -> String {
    format!("{x:.11e}")
}

fn sweep_row(
    kind: TaskKind,
    r: &Resolved,
    params: &ModelParams,
    value: f64,
) -> Result<Vec<String>, CliError> {
    let mu = params.prior();
    match kind {
        TaskKind::Analysis => {
            let regime = analysis::classify_regime(params, r.informed)?;
            let with = analysis::setter_limit_value(params, &regime, mu);
            let without = analysis::revision_value(params, Some(r.informed), mu)?.without_revisions;
            Ok(vec![
                fmt(value),
                format!("{:?}", regime.kind),
                fmt(with),
                fmt(without),
            ])
        }
        TaskKind::Screening => {
            let opts =
                ScreeningOptions { solver_tol: r.solver_tol.min(1e-12), max_levels: r.max_iterations };
            let path = screening::screening_sequence(params, r.informed, mu, opts)?;
            let profile = screening::build_screening_profile(params, &path);
            let exact = exact_profile_value(params, &profile, mu, r.enumeration)?;
            let limit = screening::screening_limit_value(params, r.informed, mu);
            Ok(vec![
                fmt(value),
                path.steps().to_string(),
                fmt(exact),
                fmt(limit),
                fmt((exact - limit).abs() / limit),
            ])
        }
        TaskKind::Pooling => {
            let sol = pooling::solve_tilde_p(params, mu, PoolingOptions::default())?;
            let profile = pooling::build_pooling_profile(params, &sol);
            let exact = exact_profile_value(params, &profile, mu, r.enumeration)?;
            let complete = benchmarks::complete_info_value(params, mu);
            Ok(vec![
                fmt(value),
                fmt(sol.tilde_p),
                fmt(exact),
                fmt(complete),
                fmt((exact - complete).abs() / complete),
            ])
        }
        TaskKind::Benchmark => {
            let (policy, tioli) = benchmarks::tioli_value(params, mu, r.max_iterations)?;
            Ok(vec![
                fmt(value),
                fmt(policy),
                fmt(tioli),
                fmt(benchmarks::tioli_limit_value(params, mu)),
                fmt(benchmarks::complete_info_value(params, mu)),
            ])
        }
        TaskKind::Simulate | TaskKind::Verify => {
            Err(CliError::Config("simulate and verify tasks cannot be swept".into()))
        }
    }
}

fn sweep_header(kind: TaskKind, parameter: GridParameter) -> Vec<String> {
    let param = match parameter {
        GridParameter::PriorHigh => "mu0",
        GridParameter::Precision => "tau",
        GridParameter::Discount => "delta",
        GridParameter::PrecisionDiscount => "tau_delta",
    };
    let rest: &[&str] = match kind {
        TaskKind::Analysis => &["regime", "V_A_limit", "V_T_limit"],
        TaskKind::Screening => &["steps", "exact_value", "limit_value", "relative_gap"],
        TaskKind::Pooling => &["tilde_p", "exact_value", "complete_info", "relative_gap"],
        TaskKind::Benchmark => &["tioli_policy", "tioli_value", "tioli_limit", "complete_info"],
        _ => &[],
    };
    std::iter::once(param.to_string()).chain(rest.iter().map(|s| s.to_string())).collect()
}

pub struct TaskOutput {
    pub report: serde_json::Value,
    pub csv: Option<(Vec<String>, Vec<Vec<String>>)>,
    pub stem: String,
}

/// Executes `run` for the configured task.
pub fn run_task(config: &Config, over: &Overrides) -> Result<TaskOutput, CliError> {
    let r = resolve(config, over)?;
    let body = match config.task.kind {
        TaskKind::Benchmark => benchmark_report(&r)?,
        TaskKind::Screening => screening_report(&r)?,
        TaskKind::Pooling => pooling_report(&r)?,
        TaskKind::Analysis => analysis_report(config, &r)?,
        TaskKind::Simulate => simulate_report(config, &r)?,
        TaskKind::Verify => {
            let target = config.task.target.as_deref().unwrap_or("all");
            verify_target(target, r.seed, r.solver_tol)?
        }
    };
    Ok(TaskOutput {
        report: json!({"config": serde_json::to_value(config).unwrap(), "results": body}),
        csv: None,
        stem: stem(config),
    })
}

/// Executes `sweep` over the configured grid, dispatching points to a
/// bounded worker pool and emitting rows in grid order.
pub fn sweep_task(config: &Config, over: &Overrides) -> Result<TaskOutput, CliError> {
    let r = resolve(config, over)?;
    let grid = config
        .grid
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep requires a [grid] section".into()))?;
    let points = grid.points().map_err(CliError::Config)?;
    let workers = grid.workers.unwrap_or_else(num_cpus);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let rows: Result<Vec<Vec<String>>, CliError> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|&v| sweep_row(config.task.kind, &r, &grid_apply(&r.params, grid.parameter, v), v))
            .collect()
    });
    let rows = rows?;
    let header = sweep_header(config.task.kind, grid.parameter);
    Ok(TaskOutput {
        report: json!({
            "config": serde_json::to_value(config).unwrap(),
            "results": {"points": points.len(), "columns": header},
        }),
        csv: Some((header, rows)),
        stem: stem(config),
    })
}

fn num_cpus() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn stem(config: &Config) -> String {
    match &config.output.prefix {
        Some(prefix) => prefix.clone(),
        None => {
            let kind = serde_json::to_value(config.task.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| "task".into());
            let secs =
                SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            format!("{kind}-{secs}")
        }
    }
}

/// Writes the JSON report and optional CSV, returning the paths written.
pub fn write_output(out_dir: &Path, output: &TaskOutput) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Internal(format!("creating {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    let json_path = out_dir.join(format!("{}.json", output.stem));
    let text = serde_json::to_string_pretty(&output.report)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(&json_path, text + "\n")
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", json_path.display())))?;
    written.push(json_path);
    if let Some((header, rows)) = &output.csv {
        let csv_path = out_dir.join(format!("{}.csv", output.stem));
        let mut writer = csv::Writer::from_path(&csv_path)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        writer.write_record(header).map_err(|e| CliError::Internal(e.to_string()))?;
        for row in rows {
            writer.write_record(row).map_err(|e| CliError::Internal(e.to_string()))?;
        }
        writer.flush().map_err(|e| CliError::Internal(e.to_string()))?;
        written.push(csv_path);
    }
    Ok(written)
}
