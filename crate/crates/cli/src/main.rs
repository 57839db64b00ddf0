use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use ncs_cli::plot::emit_plots;
use ncs_cli::sweep::{read_summary, SUMMARY_FILE};
use ncs_cli::table::table1_csv;
use ncs_cli::{parse_deadbands, run_sweep, simulate_seed, table1, CliError, ExperimentConfig, LambdaChoice};
use ncs_core::certify::bisect_gamma;
use ncs_core::hybrid_sim::{monitor_u, write_jump_log_csv, write_trajectory_csv};
use ncs_core::io::{load_model, write_certificate, ModelSpec};
use ncs_core::{LambdaPolicy, Protocol, ProtocolKind};

#[derive(Debug, Parser)]
#[command(
    name = "ncs",
    version,
    about = "Deadband event-triggered networked control: certification, simulation and sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Verify the stored certificate of a model and write it out.
    Certify(Common),
    /// Simulate one seeded run and write its trajectory and jump log.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Seed of the initial condition.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Value of λ when `--lambda fixed`.
        #[arg(long)]
        lambda_value: Option<f64>,
    },
    /// Run a deadband sweep over seeded initial conditions.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Tabulate 𝒯(γ, L, λ_max(d)) from a sweep summary in `--out`.
    Table1(Common),
    /// Plot a sweep summary in `--out` and state trajectories for the deadbands given.
    Plot(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Model file (TOML).
    #[arg(long, default_value = "data/batch_reactor.toml")]
    model: PathBuf,
    /// Protocols, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "mtod")]
    protocol: Vec<ProtocolKind>,
    /// Deadbands: `0.1,0.6` or `start:stop:step`.
    #[arg(long, default_value = "0.1:0.8:0.1")]
    deadband: String,
    /// Number of seeded runs per deadband.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, value_enum, default_value_t = LambdaChoice::State)]
    lambda: LambdaChoice,
    /// Simulated time per run [s].
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    /// Integrator step [s].
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::new(&self.model, self.protocol[0]);
        cfg.protocols = self.protocol.clone();
        cfg.deadbands = parse_deadbands(&self.deadband)?;
        cfg.seeds = self.seeds;
        cfg.horizon = self.horizon;
        cfg.step = self.step;
        cfg.lambda = self.lambda;
        cfg.out_dir = Some(self.out.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.into(), source: e })
}

fn write(path: PathBuf, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}

fn certify(c: &Common) -> Result<(), CliError> {
    let spec = load_model(&c.model)?;
    create_dir(&c.out)?;
    for &kind in &c.protocol {
        let cert = spec.certificate(kind)?;
        let p = cert.p.clone();
        let (gamma_min, _) =
            bisect_gamma(&spec.model, |_| Some(p.clone()), (1e-3, cert.gamma), cert.eps_lmi, cert.m, 1e-4)?;
        println!(
            "{kind}: LMI holds at gamma = {}, L = {}, eta = {:e}, eps = {}, M = {}; smallest gamma for this P = {gamma_min:.4}",
            cert.gamma, cert.l, cert.eta, cert.eps_lmi, cert.m
        );
        let path = c.out.join(format!("certificate_{}.toml", kind.family()));
        write_certificate(&path, &cert, &spec.model)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn policy(choice: LambdaChoice, value: Option<f64>) -> Result<LambdaPolicy, CliError> {
    match (choice, value) {
        (LambdaChoice::State, _) => Ok(LambdaPolicy::state_dependent()),
        (LambdaChoice::Fixed, Some(v)) => LambdaPolicy::fixed(v).map_err(|e| CliError::Parse(e.to_string())),
        (LambdaChoice::Fixed, None) => Err(CliError::Parse("--lambda fixed needs --lambda-value".into())),
    }
}

fn simulate_cmd(c: &Common, seed: u64, lambda_value: Option<f64>) -> Result<(), CliError> {
    let cfg = c.experiment()?;
    let spec = load_model(&c.model)?;
    let kind = cfg.protocols[0];
    let d = cfg.deadbands[0];
    let cert = spec.certificate(kind)?;
    let traj = simulate_seed(&spec, &cert, kind, d, seed, cfg.horizon, cfg.step, policy(c.lambda, lambda_value)?)?;
    create_dir(&c.out)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf)?;
    write(c.out.join("trajectory.csv"), &buf)?;
    buf.clear();
    write_jump_log_csv(&traj, &mut buf)?;
    write(c.out.join("jumps.csv"), &buf)?;
    let s = &traj.summary;
    println!(
        "{kind} d = {d} seed {seed}: {} jumps, lambda in [{:.6}, {:.6}], min dwell {:.3e} s, final |x| = {:.4e}",
        s.jump_count, s.lambda_min, s.lambda_max, s.min_dwell, s.final_x_norm
    );
    if let Ok(t_bar) = ncs_core::hybrid_sim::average_transmission_interval(&traj) {
        println!("mean transmission interval {t_bar:.6} s");
    }
    let report = monitor_u(&traj, &cert, &Protocol::new(kind, spec.model.partition.clone()))?;
    println!(
        "monitor: flow {} (margin {:.3e}, tol {:.3e}), jump {} (margin {:.3e}), decay {} (margin {:.3e})",
        pass(report.flow_ok()),
        report.flow_margin,
        report.flow_tolerance,
        pass(report.jump_ok()),
        report.jump_margin,
        pass(report.concat_ok()),
        report.concat_margin
    );
    println!("wrote {}/trajectory.csv and {}/jumps.csv", c.out.display(), c.out.display());
    Ok(())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "VIOLATED"
    }
}

fn sweep_cmd(c: &Common, workers: Option<usize>) -> Result<(), CliError> {
    let mut cfg = c.experiment()?;
    cfg.workers = workers;
    let summary = run_sweep(&cfg)?;
    println!("protocol  d      T_bar [s]   std        lambda_max  T_lower [s]  ultimate |x|");
    for r in &summary.rows {
        println!(
            "{:<9} {:<6} {:<11.6} {:<10.6} {:<11.6} {:<12.6} {:.4e}",
            r.protocol, r.d, r.t_bar_mean, r.t_bar_std, r.lambda_max, r.t_lower, r.ultimate_bound
        );
    }
    emit_plots(&summary.rows, &[], &c.out)?;
    println!("wrote {}", c.out.join(SUMMARY_FILE).display());
    Ok(())
}

fn table1_cmd(c: &Common) -> Result<(), CliError> {
    let spec = load_model(&c.model)?;
    let rows = read_summary(&c.out.join(SUMMARY_FILE))?;
    for &kind in &c.protocol {
        let cert = spec.certificate(kind)?;
        let table = table1(&rows, &cert, kind)?;
        println!("{kind}:");
        for r in &table {
            println!("  d = {:<5} lambda_max = {:.6}  T_lower = {:.4}", r.d, r.lambda_max, r.t_lower);
        }
        write(c.out.join(format!("table1_{}.csv", kind.as_str())), table1_csv(&table))?;
    }
    Ok(())
}

fn plot_cmd(c: &Common) -> Result<(), CliError> {
    let spec: ModelSpec = load_model(&c.model)?;
    let rows = read_summary(&c.out.join(SUMMARY_FILE))?;
    let kind = c.protocol[0];
    let cert = spec.certificate(kind)?;
    let trajectories = parse_deadbands(&c.deadband)?
        .into_iter()
        .take(2)
        .map(|d| {
            simulate_seed(&spec, &cert, kind, d, 0, c.horizon, c.step, LambdaPolicy::state_dependent()).map(|t| (d, t))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for path in emit_plots(&rows, &trajectories, &c.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Certify(c) => certify(c),
        Command::Simulate { common, seed, lambda_value } => simulate_cmd(common, *seed, *lambda_value),
        Command::Sweep { common, workers } => sweep_cmd(common, *workers),
        Command::Table1(c) => table1_cmd(c),
        Command::Plot(c) => plot_cmd(c),
    };
    match result {
        Ok(()) => {
            info!("done");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
