use std::path::PathBuf;

use clap::ValueEnum;
use ncs_core::ProtocolKind;

use crate::error::CliError;

/// How `λⱼ` is chosen in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LambdaChoice {
    /// `λⱼ = σ(W)/W` at each transmission.
    State,
    /// `λⱼ = λ_max(d)` realized by a state-dependent pass over the same seeds.
    Fixed,
}

/// One deadband sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub protocols: Vec<ProtocolKind>,
    pub deadbands: Vec<f64>,
    pub seeds: u64,
    /// Seed of the first run; run `k` uses `base_seed + k`.
    pub base_seed: u64,
    pub horizon: f64,
    pub step: f64,
    pub lambda: LambdaChoice,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
    /// Replay the Lyapunov monitor on every run (keeps every flow sample).
    pub monitor: bool,
}

impl ExperimentConfig {
    pub fn new(model: impl Into<PathBuf>, protocol: ProtocolKind) -> Self {
        Self {
            model: model.into(),
            protocols: vec![protocol],
            deadbands: default_deadbands(),
            seeds: 20,
            base_seed: 0,
            horizon: 20.0,
            step: 1e-4,
            lambda: LambdaChoice::State,
            out_dir: None,
            workers: None,
            monitor: false,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.protocols.is_empty() {
            return Err(CliError::Parse("at least one protocol is required".into()));
        }
        if self.deadbands.is_empty() {
            return Err(CliError::Parse("the deadband list is empty".into()));
        }
        if let Some(d) = self.deadbands.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(CliError::Parse(format!("deadband {d} must be a nonnegative number")));
        }
        if self.seeds < 1 {
            return Err(CliError::Parse("need at least one seed".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || !(self.step > 0.0 && self.step < self.horizon) {
            return Err(CliError::Parse("need 0 < step < horizon".into()));
        }
        Ok(())
    }
}

/// `0.1, 0.2, …, 0.8`.
pub fn default_deadbands() -> Vec<f64> {
    (1..=8).map(|k| k as f64 / 10.0).collect()
}

/// Parses `"0.1,0.3,0.6"` or an inclusive range `"0.1:0.8:0.1"`.
pub fn parse_deadbands(text: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| -> Result<f64, CliError> {
        let v: f64 = s.trim().parse().map_err(|_| CliError::Parse(format!("`{s}` is not a number")))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::Parse(format!("deadband {v} must be nonnegative")));
        }
        Ok(v)
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(num).collect(),
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(CliError::Parse(format!("bad range `{text}`")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            // Round to the step's decimal grid so 0.1:0.8:0.1 gives 0.3, not 0.30000000000000004.
            Ok((0..=n).map(|k| round_to_grid(start + k as f64 * step)).collect())
        }
        _ => Err(CliError::Parse(format!("expected a list or start:stop:step, got `{text}`"))),
    }
}

fn round_to_grid(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}
