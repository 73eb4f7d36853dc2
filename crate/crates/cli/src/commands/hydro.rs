//! Lifetime of the hydro-power plant: density, gradient and semi-relative
//! sensitivities on a time grid.

use fluidsens::ilt::InversionSpec;
use fluidsens::scenarios::hydro::{self, Lifetime, LifetimeSpec, PARAM_NAMES, THETA};
use fluidsens::SfmError;
use rayon::prelude::*;

use crate::{grid, CliError, Report, Result, Settings, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct HydroArgs {
    pub theta: Vec<f64>,
    /// Start law over the up phases.
    pub alpha: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
}

impl Default for HydroArgs {
    fn default() -> Self {
        HydroArgs { theta: THETA.to_vec(), alpha: LifetimeSpec::default().alpha, t_min: 230.0, t_max: 260.0, t_step: 0.5 }
    }
}

/// Far end of the tail-mass check, as a multiple of `t_max`.
const TAIL_FACTOR: f64 = 4.0;

pub fn run(args: &HydroArgs, settings: &Settings) -> Result<Report> {
    if args.theta.len() != PARAM_NAMES.len() || args.theta.iter().any(|&t| !(t > 0.0)) {
        return Err(CliError::Invalid(format!("expected {} positive rates", PARAM_NAMES.len())));
    }
    let spec = settings.inversion(hydro::DEFAULT_ORDER);
    spec.validate()?;
    let lt = Lifetime::new(hydro::param_model(&args.theta)?, LifetimeSpec { alpha: args.alpha.clone(), ..Default::default() })?;
    let ts = grid(args.t_min, args.t_max, args.t_step)?;

    let rows = ts
        .par_iter()
        .map(|&t| -> Result<Vec<f64>> {
            let tv = lt.density(t, &spec)?.checked(settings.tol)?;
            let dh: Vec<f64> = (0..PARAM_NAMES.len()).map(|k| tv.jacobian[(0, k)]).collect();
            let semi: Vec<f64> = dh.iter().zip(&args.theta).map(|(d, th)| d * th).collect();
            Ok([vec![t, tv.value[(0, 0)]], dh, semi, vec![tv.error_estimate]].concat())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut header = vec!["t".to_string(), "h".to_string()];
    header.extend(PARAM_NAMES.iter().map(|n| format!("dh_d{n}")));
    header.extend(PARAM_NAMES.iter().map(|n| format!("semirel_{n}")));
    header.push("error_estimate".into());
    let mut table = Table::new("lifetime", 1, &header);
    rows.into_iter().for_each(|r| table.push(r));

    let mut report = Report::new("hydro");
    summarize(&mut report, &lt, &table, &spec)?;
    report.tables.push(table);
    Ok(report)
}

fn summarize(report: &mut Report, lt: &Lifetime, table: &Table, spec: &InversionSpec) -> Result<()> {
    let ts = table.column("t").unwrap();
    let h = table.column("h").unwrap();
    let median = lt.quantile(0.5, spec)?;
    let cdf = |t: f64| -> Result<f64> { Ok(lt.cdf(t, spec)?.value[(0, 0)]) };
    let (t0, t1) = (ts[0], *ts.last().unwrap());
    let below = cdf(t0)?;
    let tail = cdf(TAIL_FACTOR * t1)? - cdf(t1)?;
    let on_grid = simpson(&ts, &h)?;
    report.note("median", median);
    report.note("min_time", lt.min_time());
    report.note("mass_below_grid", below);
    report.note("integral_on_grid", on_grid);
    report.note("mass_above_grid", tail);
    report.note("integral", below + on_grid + tail);
    report.note("min_h", h.iter().copied().fold(f64::INFINITY, f64::min));

    let mut crossings = Vec::new();
    for name in PARAM_NAMES {
        let s = table.column(&format!("semirel_{name}")).unwrap();
        let c = nearest_crossing(&ts, &s, median);
        report.note(&format!("crossing_{name}"), c);
        crossings.push(c);
    }
    let first5 = &crossings[..5];
    let mean = first5.iter().sum::<f64>() / 5.0;
    let spread = first5.iter().copied().fold(f64::NEG_INFINITY, f64::max) - first5.iter().copied().fold(f64::INFINITY, f64::min);
    report.note("common_crossing", mean);
    report.note("common_crossing_spread", spread);

    let d1 = table.column(&format!("dh_d{}", PARAM_NAMES[0])).unwrap();
    let d6 = table.column(&format!("dh_d{}", PARAM_NAMES[5])).unwrap();
    let opposite = d1.iter().zip(&d6).filter(|(a, b)| a.signum() != b.signum()).count();
    report.note("opposite_sign_fraction", opposite as f64 / d1.len() as f64);
    Ok(())
}

/// Composite Simpson rule on an evenly spaced grid with an odd point count.
pub fn simpson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 3 || n % 2 == 0 {
        return Err(SfmError::InvalidArgument(format!("Simpson's rule needs an odd number of points, got {n}")).into());
    }
    let h = (x[n - 1] - x[0]) / (n - 1) as f64;
    let inner: f64 = y[1..n - 1].iter().enumerate().map(|(i, v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v }).sum();
    Ok(h / 3.0 * (y[0] + inner + y[n - 1]))
}

/// Sign change of `y` closest to `target`, by linear interpolation.
pub fn nearest_crossing(x: &[f64], y: &[f64], target: f64) -> f64 {
    let mut best = f64::NAN;
    for i in 1..x.len() {
        if y[i - 1] == 0.0 || y[i - 1].signum() != y[i].signum() {
            let c = if y[i - 1] == y[i] { x[i - 1] } else { x[i - 1] - y[i - 1] * (x[i] - x[i - 1]) / (y[i] - y[i - 1]) };
            if best.is_nan() || (c - target).abs() < (best - target).abs() {
                best = c;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let x: Vec<f64> = (0..=10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|t| t * t * t - t).collect();
        let exact = 3f64.powi(4) / 4.0 - 4.5;
        assert!((simpson(&x, &y).unwrap() - exact).abs() < 1e-12);
        assert!(simpson(&x[..4], &y[..4]).is_err());
    }

    #[test]
    fn crossing_closest_to_target() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [1.0, -1.0, -1.0, 1.0, 2.0];
        assert_eq!(nearest_crossing(&x, &y, 0.0), 0.5);
        assert_eq!(nearest_crossing(&x, &y, 3.0), 2.5);
        assert!(nearest_crossing(&x, &[1.0; 5], 1.0).is_nan());
    }

    #[test]
    fn wrong_parameter_count() {
        let args = HydroArgs { theta: vec![0.1; 5], ..Default::default() };
        assert!(matches!(run(&args, &Settings::default()), Err(CliError::Invalid(_))));
    }
}
