//! Monte-Carlo estimates for a model file.

use fluidsens::model::{ModelFile, SfmModel};
use fluidsens::simulate::{self, SimConfig};

use super::analyze::StartPoint;
use crate::{CliError, Report, Result, Settings, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateArgs {
    pub start: StartPoint,
    pub paths: usize,
    /// Defaults to the last observation time.
    pub horizon: Option<f64>,
    /// Times for the boundary probabilities.
    pub times: Vec<f64>,
    /// Time and levels for a kernel estimate of the level density.
    pub density: Option<(f64, Vec<f64>)>,
    /// Upper level and real `s` for the two-sided passage transform.
    pub passage: Option<(f64, f64)>,
    /// Level above which a path counts as never reaching zero.
    pub ruin_stop: Option<f64>,
}

impl Default for SimulateArgs {
    fn default() -> Self {
        SimulateArgs {
            start: StartPoint { z: 1.0, phase: 0 },
            paths: 100_000,
            horizon: None,
            times: Vec::new(),
            density: None,
            passage: None,
            ruin_stop: None,
        }
    }
}

pub fn run(file: &ModelFile, args: &SimulateArgs, settings: &Settings) -> Result<Report> {
    let model = file.model()?;
    let last = args.times.iter().copied().chain(args.density.as_ref().map(|d| d.0)).fold(0.0, f64::max);
    let horizon = match args.horizon {
        Some(h) => h,
        None if last > 0.0 => last,
        None => return Err(CliError::Invalid("a horizon is needed when no observation time is given".into())),
    };
    let m = model.phase_count();
    let cfg = SimConfig::from_phase(settings.seed, args.paths, horizon, args.start.z, args.start.phase, m);
    cfg.validate(&model)?;
    let mut report = Report::new("simulate");
    report.note("paths", args.paths as f64);
    report.note("horizon", horizon);

    if !args.times.is_empty() {
        let est = simulate::boundary_probabilities(&model, &cfg, &args.times)?;
        let mut t = estimates_table("boundary", "t");
        for (&time, row) in args.times.iter().zip(&est) {
            for (i, e) in row.iter().enumerate() {
                t.push(vec![time, i as f64, e.mean, e.std_error]);
            }
        }
        report.tables.push(t);
    }
    if let Some((time, levels)) = &args.density {
        let (est, h) = simulate::level_density(&model, &cfg, *time, levels)?;
        let mut t = estimates_table("density", "x");
        for (&x, row) in levels.iter().zip(&est) {
            for (i, e) in row.iter().enumerate() {
                t.push(vec![x, i as f64, e.mean, e.std_error]);
            }
        }
        report.tables.push(t);
        report.note("bandwidth", h);
    }
    if let Some((y, s)) = args.passage {
        let est = simulate::passage_transform(&model, &cfg, y, s)?;
        let mut t = Table::new("passage", 1, &["phase", "lower_mean", "lower_std_error", "upper_mean", "upper_std_error"]);
        for i in 0..m {
            t.push(vec![i as f64, est.lower[i].mean, est.lower[i].std_error, est.upper[i].mean, est.upper[i].std_error]);
        }
        report.tables.push(t);
        report.note("passage_censored", est.censored);
    }
    if let Some(stop) = args.ruin_stop {
        let est = simulate::ruin_frequency(&model, &cfg, stop)?;
        report.note("ruin_mean", est.ruin.mean);
        report.note("ruin_std_error", est.ruin.std_error);
        report.note("ruin_censored", est.censored);
    }
    if report.tables.is_empty() && args.ruin_stop.is_none() {
        return Err(CliError::Invalid("nothing to estimate".into()));
    }
    Ok(report)
}

fn estimates_table(name: &str, key: &str) -> Table {
    Table::new(name, 2, &[key, "phase", "mean", "std_error"])
}

/// Reads and validates a model file.
pub fn load(path: &std::path::Path) -> Result<(ModelFile, SfmModel)> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    let file = ModelFile::parse(&text)?;
    let model = file.model()?;
    Ok((file, model))
}
