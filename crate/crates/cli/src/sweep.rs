use std::fs;
use std::path::Path;

use log::info;
use ncs_core::hybrid_sim::{
    average_data_interval, average_transmission_interval, monitor_u, simulate, MonitorReport, SimError,
};
use ncs_core::io::{load_model, ModelSpec};
use ncs_core::mati::{delta_bound, mati_bound};
use ncs_core::protocols::sandwich_bounds;
use ncs_core::{Certificate, LambdaPolicy, MatiParams, Protocol, ProtocolKind, TriggerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LambdaChoice};
use crate::error::CliError;

/// Radius of the ball `x0` is drawn from.
pub const X0_RADIUS: f64 = 2.0;
/// Radius of the ball `e0` is drawn from.
pub const E0_RADIUS: f64 = 1.5;

/// Uniform sample from the open ball of radius `r` in `R^n`, by rejection
/// from the enclosing cube.
pub fn sample_ball<R: Rng>(rng: &mut R, n: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-r..r)).collect();
        if v.iter().map(|c| c * c).sum::<f64>() < r * r {
            return v;
        }
    }
}

/// `(x0, e0)` for a seed: `|x0| < 2`, `|e0| < 1.5`.
pub fn initial_condition(seed: u64, n_x: usize, n_e: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = sample_ball(&mut rng, n_x, X0_RADIUS);
    let e0 = sample_ball(&mut rng, n_e, E0_RADIUS);
    (x0, e0)
}

/// Outcome of one `(protocol, d, seed)` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub protocol: ProtocolKind,
    pub d: f64,
    pub seed: u64,
    pub jumps: usize,
    pub mean_interval: f64,
    /// Mean gap between jumps that carried data; `NaN` with fewer than two.
    pub mean_data_interval: f64,
    /// Extremes over every interval, including `λ₀` from `e0`.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest `λⱼ` generated at a jump.
    pub jump_lambda_max: f64,
    pub min_dwell: f64,
    /// Smallest of the first jump time and the gaps between jumps.
    pub eps: f64,
    /// Every gap between jumps is at least the dwell active during it.
    pub dwell_respected: bool,
    /// `max |x|` over the final 20 % of the horizon.
    pub tail_max_x: f64,
    /// Practical-stability radius from this run's `λ_max`, `λ_min` and `ε`.
    pub delta: f64,
    pub monitor: Option<MonitorReport<f64>>,
}

/// Aggregate over seeds for one `(protocol, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub protocol: String,
    pub d: f64,
    pub lambda_mode: String,
    pub runs: u64,
    pub t_bar_mean: f64,
    pub t_bar_std: f64,
    /// Smallest `λⱼ` over all runs, including `λ₀`.
    pub lambda_min: f64,
    /// Largest jump-generated `λⱼ` over all runs; `λ₀` depends only on the
    /// random `e0` and is left out.
    pub lambda_max: f64,
    /// Largest `λⱼ` over all runs, including `λ₀`.
    pub lambda_max_all: f64,
    /// `𝒯(γ, L, λ_max)`.
    pub t_lower: f64,
    pub eps_min: f64,
    /// Practical-stability radius from `λ_min`, `lambda_max_all` and `eps_min`.
    pub delta: f64,
    /// `max |x|` over the final 20 % of the horizon, averaged over seeds.
    pub ultimate_bound: f64,
    /// The same tail maximum, maximized over seeds.
    pub ultimate_bound_max: f64,
    pub mean_jumps: f64,
}

/// Header of the summary CSV, in column order.
pub const SUMMARY_HEADER: &str = "protocol,d,lambda_mode,runs,t_bar_mean,t_bar_std,lambda_min,lambda_max,\
lambda_max_all,t_lower,eps_min,delta,ultimate_bound,ultimate_bound_max,mean_jumps";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    /// Ordered by protocol (as configured), then `d`.
    pub rows: Vec<SweepRow>,
    /// Ordered by protocol, `d`, seed.
    pub runs: Vec<RunRecord>,
}

impl SweepSummary {
    pub fn rows_for(&self, kind: ProtocolKind) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.protocol == kind.as_str())
    }
}

/// Runs one seeded simulation and condenses it.
#[allow(clippy::too_many_arguments)]
pub fn run_one(
    spec: &ModelSpec,
    cert: &Certificate,
    kind: ProtocolKind,
    d: f64,
    seed: u64,
    horizon: f64,
    step: f64,
    policy: LambdaPolicy,
    monitor: bool,
) -> Result<RunRecord, SimError> {
    let protocol = Protocol::new(kind, spec.model.partition.clone());
    let mut cfg = TriggerConfig::new(d, protocol.clone(), horizon);
    cfg.step = step;
    cfg.lambda_policy = policy;
    cfg.record_samples = monitor;
    let (x0, e0) = initial_condition(seed, spec.model.n_x(), spec.model.n_e());
    let traj = simulate(&spec.model, cert, &cfg, &x0, &e0)?;
    let mean_interval = average_transmission_interval(&traj)?;
    let s = &traj.summary;
    let eps = traj.epsilon();
    let delta = delta_bound(cert.gamma, cert.eta, s.lambda_max, s.lambda_min, &protocol.bounds(), d, eps)?;
    let report = if monitor { Some(monitor_u(&traj, cert, &protocol)?) } else { None };
    Ok(RunRecord {
        protocol: kind,
        d,
        seed,
        jumps: s.jump_count,
        mean_interval,
        mean_data_interval: average_data_interval(&traj).unwrap_or(f64::NAN),
        lambda_min: s.lambda_min,
        lambda_max: s.lambda_max,
        jump_lambda_max: s.jump_lambda_max.unwrap_or(s.lambda_max),
        min_dwell: s.min_dwell,
        eps,
        dwell_respected: traj.respects_dwell(1e-12 * horizon),
        tail_max_x: s.tail_max_x_norm,
        delta,
        monitor: report,
    })
}

/// Runs every `(protocol, d, seed)` cell in parallel and aggregates the
/// results in `(protocol, d, seed)` order.
///
/// With [`LambdaChoice::Fixed`] a state-dependent pass first realizes
/// `λ_max(d)`, then every run uses that value.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepSummary, CliError> {
    cfg.validate()?;
    let spec = load_model(&cfg.model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Parse(format!("worker pool: {e}")))?;
    let summary = pool.install(|| sweep_with(&spec, cfg))?;
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &summary)?;
    }
    Ok(summary)
}

fn sweep_with(spec: &ModelSpec, cfg: &ExperimentConfig) -> Result<SweepSummary, CliError> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let nodes = spec.model.partition.nodes();
    for &kind in &cfg.protocols {
        let cert = spec.certificate(kind)?;
        let state = run_cells(spec, &cert, kind, cfg, |_| LambdaPolicy::state_dependent())?;
        let (kind_rows, kind_runs) = match cfg.lambda {
            LambdaChoice::State => (aggregate(&cert, kind, nodes, &cfg.deadbands, &state, "state")?, state),
            LambdaChoice::Fixed => {
                let lambda_max: Vec<f64> = cfg
                    .deadbands
                    .iter()
                    .map(|&d| state.iter().filter(|r| r.d == d).map(|r| r.jump_lambda_max).fold(0.0, f64::max))
                    .collect();
                info!("{kind}: fixed lambda per d = {lambda_max:?}");
                let fixed = run_cells(spec, &cert, kind, cfg, |k| {
                    LambdaPolicy::fixed(lambda_max[k]).expect("realized lambda lies in (0, 1)")
                })?;
                (aggregate(&cert, kind, nodes, &cfg.deadbands, &fixed, "fixed")?, fixed)
            }
        };
        rows.extend(kind_rows);
        runs.extend(kind_runs);
    }
    Ok(SweepSummary { rows, runs })
}

fn run_cells(
    spec: &ModelSpec,
    cert: &Certificate,
    kind: ProtocolKind,
    cfg: &ExperimentConfig,
    policy: impl Fn(usize) -> LambdaPolicy + Sync,
) -> Result<Vec<RunRecord>, CliError> {
    let cells: Vec<(usize, f64, u64)> = cfg
        .deadbands
        .iter()
        .enumerate()
        .flat_map(|(k, &d)| (0..cfg.seeds).map(move |s| (k, d, cfg.base_seed + s)))
        .collect();
    cells
        .par_iter()
        .map(|&(k, d, seed)| {
            run_one(spec, cert, kind, d, seed, cfg.horizon, cfg.step, policy(k), cfg.monitor)
                .map_err(|source| CliError::Run { protocol: kind, d, seed, source })
        })
        .collect()
}

fn aggregate(
    cert: &Certificate,
    kind: ProtocolKind,
    nodes: usize,
    deadbands: &[f64],
    runs: &[RunRecord],
    mode: &str,
) -> Result<Vec<SweepRow>, CliError> {
    let bounds = sandwich_bounds(kind, nodes);
    let mut rows = Vec::with_capacity(deadbands.len());
    for &d in deadbands {
        let cell: Vec<&RunRecord> = runs.iter().filter(|r| r.d == d).collect();
        let n = cell.len() as f64;
        let mean = cell.iter().map(|r| r.mean_interval).sum::<f64>() / n;
        let var = cell.iter().map(|r| (r.mean_interval - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let lambda_min = cell.iter().map(|r| r.lambda_min).fold(f64::INFINITY, f64::min);
        let lambda_max = cell.iter().map(|r| r.jump_lambda_max).fold(0.0, f64::max);
        let lambda_max_all = cell.iter().map(|r| r.lambda_max).fold(0.0, f64::max);
        let eps_min = cell.iter().map(|r| r.eps).fold(f64::INFINITY, f64::min);
        let t_lower = t_lower(cert, lambda_max)?;
        let delta = delta_bound(cert.gamma, cert.eta, lambda_max_all, lambda_min, &bounds, d, eps_min)
            .map_err(|e| CliError::Sim(e.into()))?;
        rows.push(SweepRow {
            protocol: kind.as_str().to_string(),
            d,
            lambda_mode: mode.to_string(),
            runs: cell.len() as u64,
            t_bar_mean: mean,
            t_bar_std: var.sqrt(),
            lambda_min,
            lambda_max,
            lambda_max_all,
            t_lower,
            eps_min,
            delta,
            ultimate_bound: cell.iter().map(|r| r.tail_max_x).sum::<f64>() / n,
            ultimate_bound_max: cell.iter().map(|r| r.tail_max_x).fold(0.0, f64::max),
            mean_jumps: cell.iter().map(|r| r.jumps as f64).sum::<f64>() / n,
        });
    }
    Ok(rows)
}

/// `𝒯(γ, L, λ_max)`.
pub fn t_lower(cert: &Certificate, lambda_max: f64) -> Result<f64, CliError> {
    let params = MatiParams::new(cert.gamma, cert.l, lambda_max).map_err(|e| CliError::Sim(e.into()))?;
    mati_bound(&params).map_err(|e| CliError::Sim(e.into()))
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const RUNS_FILE: &str = "runs.csv";
pub const RUNS_HEADER: &str =
    "protocol,d,seed,jumps,mean_interval,mean_data_interval,lambda_min,lambda_max,jump_lambda_max,eps,tail_max_x,delta";

/// Writes `summary.csv` and `runs.csv` into `dir`.
pub fn write_outputs(dir: &Path, summary: &SweepSummary) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, summary_csv(&summary.rows)?).map_err(|e| CliError::io(&path, e))?;
    let mut runs = String::from(RUNS_HEADER);
    runs.push('\n');
    for r in &summary.runs {
        runs.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.protocol,
            r.d,
            r.seed,
            r.jumps,
            r.mean_interval,
            r.mean_data_interval,
            r.lambda_min,
            r.lambda_max,
            r.jump_lambda_max,
            r.eps,
            r.tail_max_x,
            r.delta
        ));
    }
    let path = dir.join(RUNS_FILE);
    fs::write(&path, runs).map_err(|e| CliError::io(&path, e))
}

/// Summary rows as CSV under [`SUMMARY_HEADER`].
pub fn summary_csv(rows: &[SweepRow]) -> Result<String, CliError> {
    if rows.is_empty() {
        return Ok(format!("{SUMMARY_HEADER}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    rows.iter()
        .try_for_each(|r| w.serialize(r))
        .map_err(|source| CliError::Csv { path: SUMMARY_FILE.into(), source })?;
    let bytes = w.into_inner().map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads a summary CSV written by [`write_outputs`].
pub fn read_summary(path: &Path) -> Result<Vec<SweepRow>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| CliError::Csv { path: path.into(), source })?;
    let header = reader.headers().map_err(|source| CliError::Csv { path: path.into(), source })?;
    if header.iter().collect::<Vec<_>>().join(",") != SUMMARY_HEADER {
        return Err(CliError::Parse(format!("{}: unexpected summary header", path.display())));
    }
    reader
        .deserialize()
        .collect::<Result<Vec<SweepRow>, _>>()
        .map_err(|source| CliError::Csv { path: path.into(), source })
}
