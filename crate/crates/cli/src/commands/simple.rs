//! Two-phase model with rates ±1: every number is computed by the general
//! pipeline and by closed form.

use fluidsens::firstreturn::FirstReturnBundle;
use fluidsens::ilt::{self, InversionSpec};
use fluidsens::linalg::{c64, CMat, C64};
use fluidsens::scenarios::simple::{self, ClosedForm};
use fluidsens::stationary::StationaryBundle;
use fluidsens::transient::{InitialCondition, Start, Transient};
use fluidsens::SfmError;
use rayon::prelude::*;

use super::{gradient, max_abs_diff, value};
use crate::{grid, Report, Result, Settings, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleArgs {
    pub a: f64,
    pub b: f64,
    /// Spacing of the `(a, b)` grid for the stationary boundary mass.
    pub pair_step: f64,
    /// Values of `b` for the density and transient tables (`a` fixed).
    pub b_values: Vec<f64>,
    pub x_max: f64,
    pub x_step: f64,
    /// Initial level of the transient tables, started in the down phase.
    pub z: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub density_levels: Vec<f64>,
    pub density_times: (f64, f64, f64),
}

impl Default for SimpleArgs {
    fn default() -> Self {
        SimpleArgs {
            a: 1.0,
            b: 0.5,
            pair_step: 0.01,
            b_values: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            x_max: 5.0,
            x_step: 0.1,
            z: 1.0,
            t_max: 15.0,
            t_step: 0.25,
            density_levels: vec![0.5, 1.0, 1.5, 2.0],
            density_times: (5.0, 7.0, 0.25),
        }
    }
}

/// Euler order for the transient boundary mass.
pub const DEFAULT_ORDER: usize = 30;
/// Euler order for the transient density, which is less smooth in `t`.
pub const DENSITY_ORDER: usize = 200;

const PAIR_MIN: f64 = 0.1;
const PAIR_MAX: f64 = 1.0;
const PAIR_GAP: f64 = 0.01;

pub fn run(args: &SimpleArgs, settings: &Settings) -> Result<Report> {
    ClosedForm::stable(args.a, args.b)?;
    for &b in &args.b_values {
        ClosedForm::stable(args.a, b)?;
    }
    let spec = settings.inversion(DEFAULT_ORDER);
    spec.validate()?;
    let mut report = Report::new("simple");

    let pairs = stationary_pairs(args.pair_step)?;
    report.tables.push(pairs);
    let density = stationary_density(args)?;
    report.tables.push(density);
    let (transient, transient_err) = transient_boundary(args, &spec, settings.tol)?;
    report.tables.push(transient);
    let density_spec = settings.inversion(DENSITY_ORDER);
    density_spec.validate()?;
    let (fxt, fxt_err) = transient_density(args, &density_spec, settings.tol)?;
    report.tables.push(fxt);

    let max_col = |t: &Table, c: &str| t.column(c).unwrap().into_iter().fold(0.0, f64::max);
    let stat = max_col(&report.tables[0], "max_abs_diff").max(max_col(&report.tables[1], "max_abs_diff"));
    let trans = max_col(&report.tables[2], "max_abs_diff").max(max_col(&report.tables[3], "max_abs_diff"));
    report.note("stationary_max_abs_diff", stat);
    report.note("transient_max_abs_diff", trans);
    report.note("inversion_max_error_estimate", transient_err.max(fxt_err));

    let cf = ClosedForm::new(args.a, args.b)?;
    let pm = simple::param_model(args.a, args.b)?;
    let st = StationaryBundle::compute(&pm)?;
    report.note("p_minus", value(&st.p, 0, 0));
    report.note("p_minus_closed_form", cf.p_minus());
    report.note("alpha", value(&st.alpha, 0, 0));
    report.note("mean_busy_period", mean_busy_period(&pm)?);
    report.note("mean_busy_period_closed_form", cf.mean_busy_period());
    report.note("dpi_plus_da_sign_change", sign_change(&st, 0, 20.0)?);
    report.note("dpi_plus_da_sign_change_closed_form", cf.dpi_da_sign_change());
    report.note("dpi_plus_db_sign_change", sign_change(&st, 1, 20.0)?);
    report.note("dpi_plus_db_sign_change_closed_form", cf.dpi_db_sign_change());

    let t = &report.tables[2];
    let (bs, ts) = (t.column("b").unwrap(), t.column("t").unwrap());
    let (da, db) = (t.column("dp_minus_da").unwrap(), t.column("dp_minus_db").unwrap());
    let late: Vec<usize> = (0..bs.len()).filter(|&i| bs[i] == args.b && ts[i] >= 5.0).collect();
    if !late.is_empty() {
        report.note("min_dp_minus_da_late", late.iter().map(|&i| da[i]).fold(f64::INFINITY, f64::min));
        report.note("max_dp_minus_db_late", late.iter().map(|&i| db[i]).fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(report)
}

/// `(a, b)` with `0.1 ≤ b ≤ a − 0.01` and `a ≤ 1`.
pub fn pair_grid(step: f64) -> Result<Vec<(f64, f64)>> {
    let a_values = grid(PAIR_MIN + PAIR_GAP, PAIR_MAX, step)?;
    let mut out = Vec::new();
    for a in a_values {
        for b in grid(PAIR_MIN, a - PAIR_GAP, step)? {
            out.push((a, b));
        }
    }
    Ok(out)
}

fn stationary_pairs(step: f64) -> Result<Table> {
    let rows = pair_grid(step)?
        .into_par_iter()
        .map(|(a, b)| -> Result<Vec<f64>> {
            let st = StationaryBundle::compute(&simple::param_model(a, b)?)?;
            let cf = ClosedForm::new(a, b)?;
            let pipe = [vec![value(&st.p, 0, 0)], gradient(&st.p, 0, 0)].concat();
            let closed = [vec![cf.p_minus()], cf.dp_minus().to_vec()].concat();
            let diff = max_abs_diff(&pipe, &closed);
            Ok([vec![a, b], pipe, closed, vec![diff]].concat())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        "stationary_boundary",
        2,
        &["a", "b", "p_minus", "dp_minus_da", "dp_minus_db", "cf_p_minus", "cf_dp_minus_da", "cf_dp_minus_db", "max_abs_diff"],
    );
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

fn stationary_density(args: &SimpleArgs) -> Result<Table> {
    let xs = grid(args.x_step, args.x_max, args.x_step)?;
    let rows = args
        .b_values
        .par_iter()
        .map(|&b| -> Result<Vec<Vec<f64>>> {
            let st = StationaryBundle::compute(&simple::param_model(args.a, b)?)?;
            let cf = ClosedForm::new(args.a, b)?;
            xs.iter()
                .map(|&x| {
                    let f = st.density(x)?;
                    let pipe = [vec![value(&f.plus, 0, 0)], gradient(&f.plus, 0, 0)].concat();
                    let closed = [vec![cf.pi_plus(x)], cf.dpi_plus(x).to_vec()].concat();
                    let diff = max_abs_diff(&pipe, &closed);
                    Ok([vec![b, x], pipe, closed, vec![diff]].concat())
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        "stationary_density",
        2,
        &["b", "x", "pi_plus", "dpi_plus_da", "dpi_plus_db", "cf_pi_plus", "cf_dpi_plus_da", "cf_dpi_plus_db", "max_abs_diff"],
    );
    rows.into_iter().flatten().for_each(|r| t.push(r));
    Ok(t)
}

fn with_b(values: &[f64], b: f64) -> Vec<f64> {
    let mut v = values.to_vec();
    if !v.contains(&b) {
        v.push(b);
    }
    v.sort_by(f64::total_cmp);
    v
}

fn transient_boundary(args: &SimpleArgs, spec: &InversionSpec, tol: f64) -> Result<(Table, f64)> {
    let ts = grid(args.t_step, args.t_max, args.t_step)?;
    let cells: Vec<(f64, f64)> = with_b(&args.b_values, args.b).into_iter().flat_map(|b| ts.iter().map(move |&t| (b, t))).collect();
    let z = args.z;
    let rows = cells
        .into_par_iter()
        .map(|(b, t)| -> Result<(Vec<f64>, f64)> {
            let pm = simple::param_model(args.a, b)?;
            let tr = Transient::new(&pm, InitialCondition::new(z, Start::Minus, vec![1.0])?)?;
            let tv = tr.boundary_at_time(t, spec)?.checked(tol)?;
            let pipe = vec![tv.value[(0, 0)], tv.jacobian[(0, 0)], tv.jacobian[(0, 1)]];
            let cf = ClosedForm::new(args.a, b)?;
            let closed = invert_closed(
                |s| {
                    let d = cf.dp_tilde(s, z);
                    [cf.p_tilde(s, z), d[0], d[1]]
                },
                t,
                z,
                spec,
            )?;
            let diff = max_abs_diff(&pipe, &closed);
            Ok(([vec![b, t], pipe, closed, vec![diff, tv.error_estimate]].concat(), tv.error_estimate))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        "transient_boundary",
        2,
        &["b", "t", "p_minus", "dp_minus_da", "dp_minus_db", "cf_p_minus", "cf_dp_minus_da", "cf_dp_minus_db", "max_abs_diff", "error_estimate"],
    );
    let mut err = 0.0f64;
    for (r, e) in rows {
        err = err.max(e);
        t.push(r);
    }
    Ok((t, err))
}

/// Step for differencing closed-form transforms in `a` and `b`.
const CF_STEP: f64 = 1e-3;

/// Fourth-order central difference of `f` along parameter `k`.
fn closed_form_derivative(a: f64, b: f64, k: usize, f: impl Fn(&ClosedForm) -> (C64, C64)) -> (C64, C64) {
    let at = |h: f64| {
        let cf = if k == 0 { ClosedForm::new(a + h, b) } else { ClosedForm::new(a, b + h) };
        f(&cf.expect("perturbed rates stay positive"))
    };
    let (p1, p2, m1, m2) = (at(CF_STEP), at(2.0 * CF_STEP), at(-CF_STEP), at(-2.0 * CF_STEP));
    let d = |a1: C64, a2: C64, b1: C64, b2: C64| (8.0 * (a1 - b1) - (a2 - b2)) / (12.0 * CF_STEP);
    (d(p1.0, p2.0, m1.0, m2.0), d(p1.1, p2.1, m1.1, m2.1))
}

fn transient_density(args: &SimpleArgs, spec: &InversionSpec, tol: f64) -> Result<(Table, f64)> {
    let (t0, t1, dt) = args.density_times;
    let ts = grid(t0, t1, dt)?;
    let cells: Vec<(f64, f64)> = args.density_levels.iter().flat_map(|&x| ts.iter().map(move |&t| (x, t))).collect();
    let (a, b, z) = (args.a, args.b, args.z);
    let pm = simple::param_model(a, b)?;
    let cf = ClosedForm::new(a, b)?;
    let tr = Transient::new(&pm, InitialCondition::new(z, Start::Minus, vec![1.0])?)?;
    let rows = cells
        .into_par_iter()
        .map(|(x, t)| -> Result<(Vec<f64>, f64)> {
            if !(x > 0.0) {
                return Err(SfmError::InvalidArgument(format!("density level {x} must be positive")).into());
            }
            // phase 0 is the up phase, 1 the down phase
            let tv = tr.density_at_time(x, t, spec)?.checked(tol)?;
            let pipe = vec![
                tv.value[(0, 0)],
                tv.value[(1, 0)],
                tv.jacobian[(0, 0)],
                tv.jacobian[(0, 1)],
                tv.jacobian[(1, 0)],
                tv.jacobian[(1, 1)],
            ];
            let closed = invert_closed(
                |s| {
                    let f = |c: &ClosedForm| c.f_tilde(s, z, x);
                    let (fp, fm) = f(&cf);
                    let (dpa, dma) = closed_form_derivative(a, b, 0, f);
                    let (dpb, dmb) = closed_form_derivative(a, b, 1, f);
                    [fp, fm, dpa, dpb, dma, dmb]
                },
                t,
                (z - x).abs(),
                spec,
            )?;
            let diff = max_abs_diff(&pipe, &closed);
            Ok(([vec![x, t], pipe, closed, vec![diff, tv.error_estimate]].concat(), tv.error_estimate))
        })
        .collect::<Result<Vec<_>>>()?;
    let names = ["f_plus", "f_minus", "df_plus_da", "df_plus_db", "df_minus_da", "df_minus_db"];
    let mut header: Vec<String> = vec!["x".into(), "t".into()];
    header.extend(names.iter().map(|n| n.to_string()));
    header.extend(names.iter().map(|n| format!("cf_{n}")));
    header.extend(["max_abs_diff".to_string(), "error_estimate".to_string()]);
    let mut table = Table::new("transient_density", 2, &header);
    let mut err = 0.0f64;
    for (r, e) in rows {
        err = err.max(e);
        table.push(r);
    }
    Ok((table, err))
}

/// Inverts a vector of closed-form transforms of functions vanishing on `[0, tau]`.
fn invert_closed<const N: usize>(f: impl Fn(C64) -> [C64; N], t: f64, tau: f64, spec: &InversionSpec) -> Result<Vec<f64>> {
    let inv = ilt::invert_delayed(|s| Ok(CMat::from_row_slice(1, N, &f(s))), t, tau, spec)?;
    Ok(match inv {
        Some(inv) => inv.value.iter().copied().collect(),
        None => vec![0.0; N],
    })
}

/// `−dΨ/ds` at `s = 0` from values on the imaginary axis.
///
/// With `Ψ(−iy) = conj Ψ(iy)`, `(8 Im Ψ(ih) − Im Ψ(2ih)) / 6h` is a
/// fourth-order estimate of the derivative.
pub fn mean_busy_period(pm: &fluidsens::model::ParamModel) -> Result<f64> {
    const H: f64 = 1e-4;
    let im = |y: f64| -> Result<f64> { Ok(FirstReturnBundle::values(pm.model(), c64(0.0, y))?.psi.v[(0, 0)].im) };
    Ok(-(8.0 * im(H)? - im(2.0 * H)?) / (6.0 * H))
}

/// First `x` in `(0, x_max]` where `∂π₊(x)/∂θ_k` changes sign.
pub fn sign_change(st: &StationaryBundle, k: usize, x_max: f64) -> Result<f64> {
    let g = |x: f64| -> Result<f64> { Ok(st.density(x)?.plus.d.block(k)[(0, 0)].re) };
    let step = 0.05;
    let (mut lo, mut glo) = (step, g(step)?);
    while lo < x_max {
        let hi = lo + step;
        let ghi = g(hi)?;
        if glo.signum() != ghi.signum() {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if g(m)?.signum() == glo.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        (lo, glo) = (hi, ghi);
    }
    Ok(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_grid_edges() {
        let g = pair_grid(0.01).unwrap();
        assert!(g.iter().all(|&(a, b)| b >= PAIR_MIN - 1e-12 && b <= a - PAIR_GAP + 1e-9 && a <= PAIR_MAX + 1e-9));
        assert!(g.contains(&(PAIR_MIN + PAIR_GAP, PAIR_MIN)));
        assert_eq!(g.len(), (1..=90).sum::<usize>());
    }

    #[test]
    fn busy_period_at_reference_point() {
        let pm = simple::param_model(1.0, 0.5).unwrap();
        assert!((mean_busy_period(&pm).unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn unstable_rates_are_rejected() {
        let args = SimpleArgs { a: 0.5, b: 0.5, ..Default::default() };
        assert!(matches!(run(&args, &Settings::default()), Err(crate::CliError::Model(SfmError::UnstableModel { .. }))));
    }
}
