//! Ruin probabilities for the Erlang-mixture claim model over a `(θ₁, θ₂)`
//! grid, optionally checked against simulated ruin frequencies.

use fluidsens::scenarios::ruin::{erlang_mixture, erlang_mixture_model, Ruin};
use fluidsens::simulate::{ruin_frequency, SimConfig};
use rayon::prelude::*;

use super::{gradient, value};
use crate::{grid, CliError, Report, Result, Settings, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct RuinArgs {
    /// `(start, stop, step)` for both claim rates.
    pub theta: (f64, f64, f64),
    pub x: (f64, f64, f64),
    /// Parameter point of the summary and the simulation check.
    pub reference: (f64, f64),
    /// Paths per surplus level; zero skips the simulation.
    pub mc_paths: usize,
    pub mc_levels: Vec<f64>,
}

impl Default for RuinArgs {
    fn default() -> Self {
        RuinArgs {
            theta: (0.75, 3.0, 0.25),
            x: (0.0, 10.0, 0.5),
            reference: (1.0, 2.0),
            mc_paths: 0,
            mc_levels: vec![0.0, 1.0, 5.0],
        }
    }
}

/// Bound on the ruin probability from the level where paths are abandoned.
pub const ABANDON_BOUND: f64 = 1e-5;
/// Horizon as a multiple of the mean time to climb to the stop level.
pub const HORIZON_FACTOR: f64 = 20.0;

pub fn run(args: &RuinArgs, settings: &Settings) -> Result<Report> {
    let thetas = grid(args.theta.0, args.theta.1, args.theta.2)?;
    let xs = grid(args.x.0, args.x.1, args.x.2)?;
    if thetas[0] <= 0.0 || xs[0] < 0.0 {
        return Err(CliError::Invalid("claim rates must be positive and surplus nonnegative".into()));
    }
    let pairs: Vec<(f64, f64)> = thetas.iter().flat_map(|&a| thetas.iter().map(move |&b| (a, b))).collect();
    let blocks = pairs
        .par_iter()
        .map(|&(t1, t2)| -> Result<Vec<Vec<f64>>> {
            let ruin = Ruin::new(&erlang_mixture_model(t1, t2)?)?;
            xs.iter()
                .map(|&x| {
                    let p = ruin.probability(x)?;
                    Ok([vec![t1, t2, x, ruin.drift(), value(&p, 0, 0)], gradient(&p, 0, 0)].concat())
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new("probability", 3, &["theta1", "theta2", "x", "drift", "psi", "dpsi_dtheta1", "dpsi_dtheta2"]);
    blocks.iter().flatten().for_each(|r| table.push(r.clone()));

    let mut report = Report::new("ruin");
    let (r1, r2) = args.reference;
    let spec = erlang_mixture(r1, r2);
    let ruin = Ruin::new(&erlang_mixture_model(r1, r2)?)?;
    report.note("psi0", value(&ruin.probability(0.0)?, 0, 0));
    report.note("load_factor", spec.load_factor()?);
    report.note("drift", ruin.drift());
    report.note("adjustment_coefficient", spec.adjustment_coefficient()?);

    let nt = thetas.len();
    let mut sym = 0.0f64;
    for i in 0..nt {
        for j in 0..nt {
            for (a, b) in blocks[i * nt + j].iter().zip(&blocks[j * nt + i]) {
                sym = sym.max((a[4] - b[4]).abs());
            }
        }
    }
    report.note("max_symmetry_gap", sym);
    let grads = table.column("dpsi_dtheta1").unwrap().into_iter().chain(table.column("dpsi_dtheta2").unwrap());
    report.note("max_dpsi", grads.fold(f64::NEG_INFINITY, f64::max));
    let step = blocks.iter().flat_map(|b| b.windows(2).map(|w| w[1][4] - w[0][4])).fold(f64::NEG_INFINITY, f64::max);
    report.note("max_psi_increment", step);
    report.tables.push(table);

    if args.mc_paths > 0 {
        report.tables.push(simulation(args, settings, &ruin)?);
    }
    Ok(report)
}

/// Stop level and horizon for a simulation started at `x`.
///
/// Above `stop` ruin has probability at most [`ABANDON_BOUND`] by the
/// Lundberg inequality; the horizon is a multiple of the time needed to
/// climb there at the mean drift.
pub fn simulation_window(adjustment: f64, drift: f64, x: f64) -> (f64, f64) {
    let stop = x + (1.0 / ABANDON_BOUND).ln() / adjustment;
    (stop, HORIZON_FACTOR * stop / drift)
}

fn simulation(args: &RuinArgs, settings: &Settings, ruin: &Ruin) -> Result<Table> {
    let (r1, r2) = args.reference;
    let spec = erlang_mixture(r1, r2);
    let model = spec.embed()?;
    let r = spec.adjustment_coefficient()?;
    let mut table = Table::new("simulation", 1, &["x", "psi", "mc_mean", "mc_std_error", "z_score", "censored", "stop_level", "horizon"]);
    for (i, &x) in args.mc_levels.iter().enumerate() {
        let (stop, horizon) = simulation_window(r, ruin.drift(), x);
        let cfg = SimConfig::from_phase(settings.seed.wrapping_add(i as u64), args.mc_paths, horizon, x, 0, model.phase_count());
        let est = ruin_frequency(&model, &cfg, stop)?;
        let psi = value(&ruin.probability(x)?, 0, 0);
        table.push(vec![x, psi, est.ruin.mean, est.ruin.std_error, est.ruin.z_score(psi), est.censored, stop, horizon]);
    }
    Ok(table)
}
