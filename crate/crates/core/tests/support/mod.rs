//! Randomized finite-difference, conservation and residual checks and the
//! analytic inversion pairs, shared by the integration tests and the
//! acceptance target.
#![allow(dead_code)]

use fluidsens::firstreturn::{differentiated_residual, dpsi, FirstReturnBundle};
use fluidsens::ilt::{invert_scalar, InversionSpec};
use fluidsens::linalg::{c64, C64};
use fluidsens::matcalc::Diff;
use fluidsens::model::ParamModel;
use fluidsens::scenarios::random::{stable_family, RandomSpec};
use fluidsens::stationary::StationaryBundle;
use fluidsens::transient::{passage_matrices, InitialCondition, Start, Transient};
use fluidsens::Result;

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL: f64 = 1e-6;
pub const FD_ABS: f64 = 1e-9;

/// Shape of the `i`-th random model: 2 to 8 phases, 1 to 4 parameters.
pub fn random_spec(i: u64) -> RandomSpec {
    let phases = 2 + (i % 7) as usize;
    let params = 1 + (i % 4) as usize;
    let zero_phases = usize::from(phases >= 4 && i % 3 == 0);
    RandomSpec { phases, params, zero_phases, min_drift: 0.05 }
}

pub fn random_models(n: u64) -> Vec<ParamModel> {
    (1..=n).map(|i| stable_family(random_spec(i), 1000 + i).expect("stable draw")).collect()
}

const X_POINTS: [f64; 3] = [0.2, 1.0, 3.0];
const PASSAGE: (f64, f64) = (0.4, 1.3);
const START_LEVEL: f64 = 0.8;
const DENSITY_LEVEL: f64 = 0.6;

pub fn transform_point() -> C64 {
    c64(0.4, 0.9)
}

/// Every differentiated quantity of the pipeline, with its jacobian.
pub fn quantities(pm: &ParamModel) -> Result<Vec<(String, Diff)>> {
    let mut out: Vec<(String, Diff)> = Vec::new();
    for (tag, s) in [("0", c64(0.0, 0.0)), ("s", transform_point())] {
        let fr = FirstReturnBundle::compute(pm, s)?;
        for (name, d) in [("psi", &fr.psi), ("xi", &fr.xi), ("D", &fr.d), ("U", &fr.u), ("K", &fr.k), ("J", &fr.j)] {
            out.push((format!("{name}({tag})"), d.clone()));
        }
    }
    let st = StationaryBundle::compute(pm)?;
    out.push(("xi_vector".into(), st.xi.clone()));
    out.push(("alpha".into(), st.alpha.clone()));
    out.push(("p".into(), st.p.clone()));
    for x in X_POINTS {
        let f = st.density(x)?;
        out.push((format!("pi({x})"), Diff::hstack(&[&f.plus, &f.minus, &f.zero])));
    }
    let fr = FirstReturnBundle::compute(pm, transform_point())?;
    out.push(("GH".into(), passage_matrices(&fr, PASSAGE.0, PASSAGE.1)?.gh));
    let n_minus = pm.partition().n_minus();
    let init = InitialCondition::new(START_LEVEL, Start::Minus, vec![1.0 / n_minus as f64; n_minus])?;
    let tp = Transient::new(pm, init)?.at(transform_point())?;
    out.push(("p_tilde".into(), tp.p_tilde.clone()));
    let f = tp.f_tilde(DENSITY_LEVEL)?;
    out.push(("f_tilde".into(), Diff::hstack(&[&f.plus, &f.minus, &f.zero])));
    Ok(out)
}

/// Worst finite-difference mismatch of one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct FdOutcome {
    pub name: String,
    /// `|analytic − fd| / max(FD_REL·|analytic|, FD_ABS)`; at most 1 passes.
    pub ratio: f64,
    pub abs_error: f64,
    pub analytic: f64,
}

/// Central differences of every quantity against its analytic jacobian.
pub fn fd_check(pm: &ParamModel) -> Result<Vec<FdOutcome>> {
    let base = quantities(pm)?;
    let mut out: Vec<FdOutcome> =
        base.iter().map(|(n, _)| FdOutcome { name: n.clone(), ratio: 0.0, abs_error: 0.0, analytic: 0.0 }).collect();
    for k in 0..pm.params() {
        let plus = quantities(&pm.perturbed(k, FD_STEP)?)?;
        let minus = quantities(&pm.perturbed(k, -FD_STEP)?)?;
        for (i, (_, d)) in base.iter().enumerate() {
            let an = d.d.block(k);
            let fd = (&plus[i].1.v - &minus[i].1.v) / c64(2.0 * FD_STEP, 0.0);
            for (a, f) in an.iter().zip(fd.iter()) {
                let err = (a - f).norm();
                let ratio = err / (FD_REL * a.norm()).max(FD_ABS);
                if ratio > out[i].ratio {
                    out[i] = FdOutcome { name: out[i].name.clone(), ratio, abs_error: err, analytic: a.norm() };
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conservation {
    /// `|p·1 + ∫π·1 − 1|`.
    pub mass: f64,
    /// Largest parameter derivative of the total mass.
    pub dmass: f64,
    /// Largest `|p_i + ∫π_i − ν_i|`.
    pub occupancy: f64,
}

pub fn conservation(pm: &ParamModel) -> Result<Conservation> {
    let st = StationaryBundle::compute(pm)?;
    let part = pm.partition();
    let density = st.density_transform(c64(0.0, 0.0))?;
    let total = &st.p.row_sums() + &density.total();
    let nu = pm.model().ctmc_stationary()?;
    let per_phase = st.boundary().by_phase(part) + density.by_phase(part);
    Ok(Conservation {
        mass: (total.v[(0, 0)].re - 1.0).abs(),
        dmass: total.d.max_abs(),
        occupancy: (per_phase - nu).amax(),
    })
}

/// Differentiated Riccati residual of `(Ψ, ∂Ψ)` at `s = 0` and at a complex `s`.
pub fn riccati_residual(pm: &ParamModel) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in [c64(0.0, 0.0), transform_point()] {
        let fr = FirstReturnBundle::compute(pm, s)?;
        let q = fr.q_values();
        let dq = fr.q.jacobians();
        let dp = dpsi(&dq, &fr.psi.v, &fr.k.v, &fr.d.v, pm.params())?;
        worst = worst.max(differentiated_residual(&q, &dq, &fr.psi.v, &dp));
        worst = worst.max(differentiated_residual(&q, &dq, &fr.psi.v, &fr.psi.d));
    }
    Ok(worst)
}

/// Analytic transform pairs: name, `F(s)`, `f(t)`.
pub type Pair = (&'static str, fn(C64) -> C64, fn(f64) -> f64);

fn one() -> C64 {
    c64(1.0, 0.0)
}

pub const PAIRS: [Pair; 6] = [
    ("exponential", |s| one() / (s + 1.0), |t| (-t).exp()),
    ("ramp", |s| one() / (s * s), |t| t),
    ("unit step", |s| one() / s, |_| 1.0),
    ("t e^{-2t}", |s| one() / ((s + 2.0) * (s + 2.0)), |t| t * (-2.0 * t).exp()),
    ("sine", |s| one() / (s * s + 1.0), |t| t.sin()),
    ("erlang", |s| (one() + s / 2.0).powi(-2), |t| 4.0 * t * (-2.0 * t).exp()),
];

pub fn pair_times() -> impl Iterator<Item = f64> {
    (1..=100).map(|i| i as f64 * 0.1)
}

pub fn worst_error(spec: &InversionSpec, (_, f, g): &Pair) -> f64 {
    pair_times().map(|t| (invert_scalar(f, t, spec).unwrap().0 - g(t)).abs()).fold(0.0, f64::max)
}
