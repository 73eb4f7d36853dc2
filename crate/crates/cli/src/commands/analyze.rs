//! Generic analysis of a model file.

use fluidsens::model::{ModelFile, ParamModel, PhaseClass};
use fluidsens::simulate::{boundary_probabilities, SimConfig};
use fluidsens::stationary::StationaryBundle;
use fluidsens::transient::{InitialCondition, Start, Transient};
use fluidsens::SfmError;
use rayon::prelude::*;

use crate::{CliError, Report, Result, Settings, Table};

/// Start of the transient analyses: level `z` in one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPoint {
    pub z: f64,
    pub phase: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyzeArgs {
    pub stationary: bool,
    /// Levels for the stationary density.
    pub levels: Vec<f64>,
    pub start: Option<StartPoint>,
    pub times: Vec<f64>,
    /// Levels for the transient density.
    pub density_levels: Vec<f64>,
    /// Paths for a simulated check of the boundary probabilities; zero skips it.
    pub paths: usize,
}

pub const DEFAULT_ORDER: usize = 30;

pub fn run(file: &ModelFile, args: &AnalyzeArgs, settings: &Settings) -> Result<Report> {
    let pm = file.param_model()?;
    let params = pm.param_names();
    let mut report = Report::new("analyze");
    report.note("drift", pm.model().drift()?);
    if args.stationary {
        stationary(&pm, &params, &args.levels, &mut report)?;
    }
    if args.start.is_none() && (!args.times.is_empty() || !args.density_levels.is_empty() || args.paths > 0) {
        return Err(CliError::Invalid("transient requests need a start level and phase".into()));
    }
    if let Some(start) = &args.start {
        let init = initial_condition(&pm, start)?;
        let spec = settings.inversion(DEFAULT_ORDER);
        spec.validate()?;
        let tr = Transient::new(&pm, init)?;
        let boundary_phases = pm.partition().minus_zero();
        let rows = args
            .times
            .par_iter()
            .map(|&t| -> Result<Vec<Vec<f64>>> {
                let tv = tr.boundary_at_time(t, &spec)?.checked(settings.tol)?;
                Ok(boundary_phases
                    .iter()
                    .enumerate()
                    .map(|(j, &i)| [vec![t, i as f64, tv.value[(j, 0)]], tv.jacobian.row(j).iter().copied().collect()].concat())
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = Table::new("transient_boundary", 2, &with_params(&["t", "phase", "p"], &params));
        rows.iter().flatten().for_each(|r| t.push(r.clone()));
        report.tables.push(t);

        let class_order: Vec<usize> = [PhaseClass::Plus, PhaseClass::Minus, PhaseClass::Zero]
            .into_iter()
            .flat_map(|c| pm.partition().indices(c).to_vec())
            .collect();
        let cells: Vec<(f64, f64)> = args.density_levels.iter().flat_map(|&x| args.times.iter().map(move |&t| (x, t))).collect();
        let rows = cells
            .par_iter()
            .map(|&(x, t)| -> Result<Vec<Vec<f64>>> {
                let tv = tr.density_at_time(x, t, &spec)?.checked(settings.tol)?;
                let mut out: Vec<Vec<f64>> = class_order
                    .iter()
                    .enumerate()
                    .map(|(j, &i)| [vec![x, t, i as f64, tv.value[(j, 0)]], tv.jacobian.row(j).iter().copied().collect()].concat())
                    .collect();
                out.sort_by(|a, b| a[2].total_cmp(&b[2]));
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        if !cells.is_empty() {
            let mut t = Table::new("transient_density", 3, &with_params(&["x", "t", "phase", "f"], &params));
            rows.iter().flatten().for_each(|r| t.push(r.clone()));
            report.tables.push(t);
        }

        if args.paths > 0 {
            let horizon = args.times.iter().copied().fold(0.0, f64::max);
            let cfg = SimConfig::from_phase(settings.seed, args.paths, horizon, start.z, start.phase, pm.model().phase_count());
            let est = boundary_probabilities(pm.model(), &cfg, &args.times)?;
            let inverted = &report.tables.last().filter(|t| t.name == "transient_boundary").cloned();
            let mut t = Table::new("simulation_boundary", 2, &["t", "phase", "mc_mean", "mc_std_error", "p", "z_score"]);
            for (k, &time) in args.times.iter().enumerate() {
                for (j, &i) in boundary_phases.iter().enumerate() {
                    let e = est[k][i];
                    let p = inverted.as_ref().map_or(f64::NAN, |tb| tb.rows[k * boundary_phases.len() + j][2]);
                    t.push(vec![time, i as f64, e.mean, e.std_error, p, e.z_score(p)]);
                }
            }
            report.tables.push(t);
        }
    }
    Ok(report)
}

fn stationary(pm: &ParamModel, params: &[String], levels: &[f64], report: &mut Report) -> Result<()> {
    let st = StationaryBundle::compute(pm)?;
    let part = pm.partition();
    let m = pm.model().phase_count();
    let b = st.boundary();
    let (bv, bj) = (b.by_phase(part), b.jacobian_by_phase(part));
    let mut t = Table::new("stationary_boundary", 1, &with_params(&["phase", "p"], params));
    for i in 0..m {
        t.push([vec![i as f64, bv[i]], bj.row(i).iter().copied().collect()].concat());
    }
    report.tables.push(t);

    let mut t = Table::new("stationary_density", 2, &with_params(&["x", "phase", "pi"], params));
    for &x in levels {
        if !(x > 0.0) {
            return Err(SfmError::InvalidArgument(format!("density level {x} must be positive")).into());
        }
        let f = st.density(x)?;
        let (v, j) = (f.by_phase(part), f.jacobian_by_phase(part));
        for i in 0..m {
            t.push([vec![x, i as f64, v[i]], j.row(i).iter().copied().collect()].concat());
        }
    }
    if !levels.is_empty() {
        report.tables.push(t);
    }
    let mass = &st.p.row_sums() + &st.density_mass()?;
    report.note("total_mass", mass.v[(0, 0)].re);
    for (k, name) in params.iter().enumerate() {
        report.note(&format!("dtotal_mass_d{name}"), mass.d.block(k)[(0, 0)].re);
    }
    report.note("decay_rate", st.decay_rate());
    Ok(())
}

fn with_params(head: &[&str], params: &[String]) -> Vec<String> {
    head.iter().map(|s| s.to_string()).chain(params.iter().map(|p| format!("d_{p}"))).collect()
}

/// Start in a single phase; zero-rate phases cannot start a transient.
pub fn initial_condition(pm: &ParamModel, start: &StartPoint) -> Result<InitialCondition> {
    let part = pm.partition();
    let (side, class) = match part.class_of(start.phase) {
        Some(PhaseClass::Plus) => (Start::Plus, PhaseClass::Plus),
        Some(PhaseClass::Minus) => (Start::Minus, PhaseClass::Minus),
        Some(PhaseClass::Zero) => return Err(CliError::Invalid(format!("phase {} has zero rate", start.phase))),
        None => return Err(CliError::Invalid(format!("no phase {}", start.phase))),
    };
    let idx = part.indices(class);
    let g = idx.iter().map(|&i| if i == start.phase { 1.0 } else { 0.0 }).collect();
    Ok(InitialCondition::new(start.z, side, g)?)
}
