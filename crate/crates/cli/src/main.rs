use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fluidsens::ilt::Method;
use fluidsens_cli::commands::analyze::{self, AnalyzeArgs, StartPoint};
use fluidsens_cli::commands::hydro::{self, HydroArgs};
use fluidsens_cli::commands::ruin::{self, RuinArgs};
use fluidsens_cli::commands::simple::{self, SimpleArgs};
use fluidsens_cli::commands::simulate::{self, SimulateArgs};
use fluidsens_cli::Settings;

/// Sensitivity analysis of stochastic fluid models.
#[derive(Parser, Debug)]
#[command(name = "fluidsens", version)]
struct Cli {
    /// Directory for the CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Largest accepted inversion error estimate.
    #[arg(long, global = true, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, global = true, default_value = "euler", value_parser = parse_method)]
    ilt_method: Method,
    /// Inversion order; each command has its own default.
    #[arg(long, global = true)]
    ilt_order: Option<usize>,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Also write long-format (key, quantity, value) tables.
    #[arg(long, global = true)]
    plot_data: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Two-phase model: pipeline against closed forms.
    Simple(SimpleCli),
    /// Hydro-power plant lifetime and its sensitivities.
    Hydro(HydroCli),
    /// Ruin probabilities with Erlang-mixture claims.
    Ruin(RuinCli),
    /// Stationary and transient analysis of a model file.
    Analyze(AnalyzeCli),
    /// Monte-Carlo estimates for a model file.
    Simulate(SimulateCli),
}

#[derive(Args, Debug)]
struct SimpleCli {
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    /// Spacing of the (a, b) grid.
    #[arg(long, default_value_t = 0.01)]
    pair_step: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    b_values: Vec<f64>,
    #[arg(long, default_value_t = 5.0)]
    x_max: f64,
    #[arg(long, default_value_t = 0.1)]
    x_step: f64,
    /// Initial level, started in the down phase.
    #[arg(long, default_value_t = 1.0)]
    z: f64,
    #[arg(long, default_value_t = 15.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.25)]
    t_step: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
    density_levels: Vec<f64>,
    /// START:STOP:STEP
    #[arg(long, default_value = "5:7:0.25", value_parser = parse_range)]
    density_times: (f64, f64, f64),
}

#[derive(Args, Debug)]
struct HydroCli {
    /// Six rates: on_design, off_design, start, stop, idle, maintenance.
    #[arg(long, value_delimiter = ',', default_value = "0.004,0.017,0.02,0.02,0.001,0.01")]
    theta: Vec<f64>,
    /// Start law over the five up phases.
    #[arg(long, value_delimiter = ',', default_value = "0,0,0,0,1")]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 230.0)]
    t_min: f64,
    #[arg(long, default_value_t = 260.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.5)]
    t_step: f64,
}

#[derive(Args, Debug)]
struct RuinCli {
    /// Grid for both claim rates, START:STOP:STEP.
    #[arg(long, default_value = "0.75:3:0.25", value_parser = parse_range)]
    theta: (f64, f64, f64),
    /// Initial surplus grid, START:STOP:STEP.
    #[arg(long, default_value = "0:10:0.5", value_parser = parse_range)]
    x: (f64, f64, f64),
    #[arg(long, value_delimiter = ',', default_value = "1,2", num_args = 1)]
    reference: Vec<f64>,
    /// Paths per level for the simulated check (0 skips it).
    #[arg(long, default_value_t = 0)]
    mc_paths: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,5")]
    mc_levels: Vec<f64>,
}

#[derive(Args, Debug)]
struct StartCli {
    /// Initial level of transient analyses.
    #[arg(long)]
    start_level: Option<f64>,
    /// Initial phase (index in the model file).
    #[arg(long, default_value_t = 0)]
    start_phase: usize,
}

impl StartCli {
    fn point(&self) -> Option<StartPoint> {
        self.start_level.map(|z| StartPoint { z, phase: self.start_phase })
    }
}

#[derive(Args, Debug)]
struct AnalyzeCli {
    model: PathBuf,
    #[arg(long)]
    stationary: bool,
    /// Levels for the stationary density.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<f64>,
    #[command(flatten)]
    start: StartCli,
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    /// Levels for the transient density.
    #[arg(long, value_delimiter = ',')]
    density_levels: Vec<f64>,
    /// Check the boundary probabilities by simulation.
    #[arg(long)]
    simulate: bool,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
}

#[derive(Args, Debug)]
struct SimulateCli {
    model: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    start_level: f64,
    #[arg(long, default_value_t = 0)]
    start_phase: usize,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long, requires = "density_levels")]
    density_time: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    density_levels: Vec<f64>,
    /// Upper level of the two-sided passage transform.
    #[arg(long, requires = "passage_s")]
    passage_upper: Option<f64>,
    #[arg(long)]
    passage_s: Option<f64>,
    #[arg(long)]
    ruin_stop: Option<f64>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: fluidsens::SfmError| e.to_string())
}

fn parse_range(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected START:STOP:STEP, got `{s}`"));
    };
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(a)?, p(b)?, p(c)?))
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let settings = Settings { tol: cli.tol, method: cli.ilt_method, order: cli.ilt_order, seed: cli.seed };
    let report = match cli.command {
        Command::Simple(c) => simple::run(
            &SimpleArgs {
                a: c.a,
                b: c.b,
                pair_step: c.pair_step,
                b_values: c.b_values,
                x_max: c.x_max,
                x_step: c.x_step,
                z: c.z,
                t_max: c.t_max,
                t_step: c.t_step,
                density_levels: c.density_levels,
                density_times: c.density_times,
            },
            &settings,
        )?,
        Command::Hydro(c) => hydro::run(
            &HydroArgs { theta: c.theta, alpha: c.alpha, t_min: c.t_min, t_max: c.t_max, t_step: c.t_step },
            &settings,
        )?,
        Command::Ruin(c) => {
            let [r1, r2] = c.reference[..] else {
                anyhow::bail!("--reference takes two rates");
            };
            ruin::run(
                &RuinArgs { theta: c.theta, x: c.x, reference: (r1, r2), mc_paths: c.mc_paths, mc_levels: c.mc_levels },
                &settings,
            )?
        }
        Command::Analyze(c) => {
            let (file, _) = simulate::load(&c.model)?;
            let args = AnalyzeArgs {
                stationary: c.stationary,
                levels: c.levels,
                start: c.start.point(),
                times: c.times,
                density_levels: c.density_levels,
                paths: if c.simulate { c.paths } else { 0 },
            };
            analyze::run(&file, &args, &settings)?
        }
        Command::Simulate(c) => {
            let (file, _) = simulate::load(&c.model)?;
            let args = SimulateArgs {
                start: StartPoint { z: c.start_level, phase: c.start_phase },
                paths: c.paths,
                horizon: c.horizon,
                times: c.times,
                density: c.density_time.map(|t| (t, c.density_levels)),
                passage: c.passage_upper.zip(c.passage_s),
                ruin_stop: c.ruin_stop,
            };
            simulate::run(&file, &args, &settings)?
        }
    };
    let written = report.write(&cli.out, cli.plot_data).with_context(|| format!("writing to {}", cli.out.display()))?;
    print!("{}", report.summary_text());
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
