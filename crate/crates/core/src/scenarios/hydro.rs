//! Six-phase deterioration model on `[0, 1]` and its lifetime distribution.

use std::sync::Arc;

use crate::error::{Result, SfmError};
use crate::firstreturn::FirstReturnBundle;
use crate::ilt::{self, InversionSpec};
use crate::linalg::{self, c64, CMat, RMat, C64};
use crate::matcalc::Diff;
use crate::model::{AffineFamily, ModelFamily, ParamModel};
use crate::transient::{passage_matrices, TimeValue};

#[rustfmt::skip]
const GENERATOR: [f64; 36] = [
    -83.9,   40.7,    0.0,     43.2,    0.0,    0.0,
    180.2,   -262.9,  0.0,     82.7,    0.0,    0.0,
    1085.5,  314.9,   -1440.0, 39.6,    0.0,    0.0,
    0.0,     0.0,     17.6,    -1440.0, 1422.4, 0.0,
    0.0,     0.0,     62.3,    0.0,     -64.8,  2.5,
    0.0,     0.0,     0.0,     0.0,     39.4,   -39.4,
];

/// Default speeds `θᵢ = |cᵢ|`.
pub const THETA: [f64; 6] = [0.004, 0.017, 0.020, 0.020, 0.001, 0.01];

pub const PARAM_NAMES: [&str; 6] = ["on_design", "off_design", "start", "stop", "idle", "maintenance"];

pub fn generator() -> RMat {
    RMat::from_row_slice(6, 6, &GENERATOR)
}

/// Family over the absolute rates; phase 6 drains.
pub fn family() -> Arc<dyn ModelFamily> {
    let dc = (0..6)
        .map(|k| {
            let mut v = vec![0.0; 6];
            v[k] = if k == 5 { -1.0 } else { 1.0 };
            v
        })
        .collect();
    Arc::new(AffineFamily {
        names: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
        theta0: THETA.to_vec(),
        t0: generator(),
        c0: vec![0.004, 0.017, 0.020, 0.020, 0.001, -0.01],
        dt: vec![RMat::zeros(6, 6); 6],
        dc,
    })
}

pub fn param_model(theta: &[f64]) -> Result<ParamModel> {
    ParamModel::new(family(), theta.to_vec())
}

/// Boundary behaviour and initial law for the lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeSpec {
    /// Phase change on hitting level 0, down phases to up phases.
    pub return_at_zero: RMat,
    pub p_hat_pp: RMat,
    pub p_hat_p0: RMat,
    pub t_hat_00: RMat,
    pub t_hat_0p: RMat,
    /// Initial law over the up phases.
    pub alpha: Vec<f64>,
}

impl Default for LifetimeSpec {
    fn default() -> Self {
        let mut p_hat_pp = RMat::zeros(5, 5);
        for i in 0..4 {
            p_hat_pp[(i, 4)] = 1.0;
        }
        LifetimeSpec {
            return_at_zero: RMat::from_row_slice(1, 5, &[0.0, 0.0, 0.0, 0.0, 1.0]),
            p_hat_pp,
            p_hat_p0: RMat::from_column_slice(5, 1, &[0.0, 0.0, 0.0, 0.0, 1.0]),
            t_hat_00: RMat::from_element(1, 1, -64.8),
            t_hat_0p: RMat::from_row_slice(1, 5, &[0.0, 0.0, 0.0, 0.0, 64.8]),
            alpha: vec![0.0, 0.0, 0.0, 0.0, 1.0],
        }
    }
}

impl LifetimeSpec {
    pub fn validate(&self, n_plus: usize, n_minus: usize) -> Result<()> {
        let n0 = self.t_hat_00.nrows();
        let shapes = [
            (&self.return_at_zero, n_minus, n_plus),
            (&self.p_hat_pp, n_plus, n_plus),
            (&self.p_hat_p0, n_plus, n0),
            (&self.t_hat_00, n0, n0),
            (&self.t_hat_0p, n0, n_plus),
        ];
        if shapes.iter().any(|(m, r, c)| m.shape() != (*r, *c)) || self.alpha.len() != n_plus {
            return Err(SfmError::InvalidArgument("lifetime boundary data has the wrong shape".into()));
        }
        let substochastic = |m: &RMat| m.iter().all(|&v| v >= 0.0) && m.row_iter().all(|r| r.sum() <= 1.0 + 1e-12);
        if !substochastic(&self.return_at_zero) || !substochastic(&self.p_hat_pp) {
            return Err(SfmError::InvalidArgument("boundary jump matrices must be substochastic".into()));
        }
        let sub = &self.t_hat_00;
        let off_ok = (0..n0).all(|i| (0..n0).all(|j| i == j || sub[(i, j)] >= 0.0));
        if !off_ok || sub.row_iter().any(|r| r.sum() > 1e-12) {
            return Err(SfmError::InvalidArgument("upper boundary block must be a subgenerator".into()));
        }
        if self.alpha.iter().any(|&a| a < 0.0) || (self.alpha.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(SfmError::InvalidArgument("initial law must be a probability vector".into()));
        }
        Ok(())
    }

    /// `P̄₊₊(s)1`.
    pub fn upper_exit(&self, s: C64) -> Result<CMat> {
        let n0 = self.t_hat_00.nrows();
        let ones = CMat::from_element(self.p_hat_pp.ncols(), 1, c64(1.0, 0.0));
        let stay = CMat::identity(n0, n0) * s - linalg::complexify(&self.t_hat_00);
        let sojourn = linalg::solve(&stay, &(linalg::complexify(&self.t_hat_0p) * &ones))?;
        Ok(linalg::complexify(&self.p_hat_pp) * &ones + linalg::complexify(&self.p_hat_p0) * sojourn)
    }
}

/// Lifetime to level 1 from level 0.
#[derive(Debug, Clone)]
pub struct Lifetime {
    pm: ParamModel,
    spec: LifetimeSpec,
}

impl Lifetime {
    pub fn new(pm: ParamModel, spec: LifetimeSpec) -> Result<Self> {
        let part = pm.partition();
        if !part.zero.is_empty() {
            return Err(SfmError::InvalidArgument("lifetime model must have no zero-rate phases".into()));
        }
        spec.validate(part.n_plus(), part.n_minus())?;
        Ok(Lifetime { pm, spec })
    }

    pub fn default_model() -> Result<Self> {
        Self::new(param_model(&THETA)?, LifetimeSpec::default())
    }

    pub fn param_model(&self) -> &ParamModel {
        &self.pm
    }

    pub fn params(&self) -> usize {
        self.pm.params()
    }

    /// `W(s)` with its jacobian.
    pub fn w(&self, s: C64) -> Result<Diff> {
        let fr = FirstReturnBundle::compute(&self.pm, s)?;
        let pass = passage_matrices(&fr, 0.0, 1.0)?;
        let p = self.params();
        let n = self.pm.partition().n_plus();
        let ret = Diff::constant(linalg::complexify(&self.spec.return_at_zero), p);
        let repeat = (&Diff::identity(n, p) - &(&pass.g_pm() * &ret)).inv()?;
        Ok(&repeat * &pass.h_pp())
    }

    /// `αL(s)` as a 1×1 value with its jacobian.
    pub fn transform(&self, s: C64) -> Result<Diff> {
        let alpha = CMat::from_row_slice(1, self.spec.alpha.len(), &self.spec.alpha.iter().map(|&a| c64(a, 0.0)).collect::<Vec<_>>());
        Ok(Diff::const_mul(&alpha, &self.w(s)?).mul_const(&self.spec.upper_exit(s)?))
    }

    /// Earliest time level 1 can be reached.
    pub fn min_time(&self) -> f64 {
        let fastest = self.pm.model().rates_of(crate::model::PhaseClass::Plus).iter().fold(0.0f64, |m, &c| m.max(c));
        1.0 / fastest
    }

    /// Density `h(t)` and its gradient.
    pub fn density(&self, t: f64, spec: &InversionSpec) -> Result<TimeValue> {
        self.invert(t, spec, |s| self.transform(s))
    }

    /// Distribution function of the lifetime.
    pub fn cdf(&self, t: f64, spec: &InversionSpec) -> Result<TimeValue> {
        self.invert(t, spec, |s| Ok(self.transform(s)?.scale(1.0 / s)))
    }

    fn invert(&self, t: f64, spec: &InversionSpec, f: impl Fn(C64) -> Result<Diff>) -> Result<TimeValue> {
        let p = self.params();
        let inv = ilt::invert_delayed(
            |s| {
                let d = f(s)?;
                Ok(linalg::hstack(&[&d.v, d.d.data()]))
            },
            t,
            self.min_time(),
            spec,
        )?;
        Ok(match inv {
            None => TimeValue::zeros(1, p),
            Some(inv) => TimeValue {
                value: inv.value.columns(0, 1).into_owned(),
                jacobian: inv.value.columns(1, p).into_owned(),
                error_estimate: inv.error_estimate,
            },
        })
    }

    /// Time at which the distribution function reaches `q`.
    pub fn quantile(&self, q: f64, spec: &InversionSpec) -> Result<f64> {
        if !(0.0 < q && q < 1.0) {
            return Err(SfmError::InvalidArgument(format!("quantile level {q} must lie in (0, 1)")));
        }
        let f = |t: f64| -> Result<f64> { Ok(self.cdf(t, spec)?.value[(0, 0)] - q) };
        let (mut a, mut fa) = (self.min_time(), -q);
        let mut b = 2.0 * a;
        let mut fb = f(b)?;
        while fb < 0.0 {
            (a, fa) = (b, fb);
            b *= 2.0;
            if b > 1e9 {
                return Err(SfmError::NoConvergence { iterations: 0, residual: fb });
            }
            fb = f(b)?;
        }
        // Illinois false position.
        let mut side = 0;
        for _ in 0..100 {
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = f(c)?;
            if fc.abs() < 1e-13 || (b - a).abs() < 1e-10 * b {
                return Ok(c);
            }
            if fc.signum() == fb.signum() {
                (b, fb) = (c, fc);
                if side == -1 {
                    fa /= 2.0;
                }
                side = -1;
            } else {
                (a, fa) = (c, fc);
                if side == 1 {
                    fb /= 2.0;
                }
                side = 1;
            }
        }
        Err(SfmError::NoConvergence { iterations: 100, residual: fa.abs().min(fb.abs()) })
    }
}

/// Euler order resolving the lifetime peak of the default model.
pub const DEFAULT_ORDER: usize = 200;

pub fn default_inversion() -> InversionSpec {
    InversionSpec::euler(DEFAULT_ORDER)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_valid() {
        let pm = param_model(&THETA).unwrap();
        assert_eq!(pm.partition().plus, vec![0, 1, 2, 3, 4]);
        assert_eq!(pm.partition().minus, vec![5]);
        assert!(pm.model().drift().unwrap() > 0.0);
    }

    #[test]
    fn lifetime_is_proper() {
        let lt = Lifetime::default_model().unwrap();
        let l0 = lt.transform(c64(1e-10, 0.0)).unwrap();
        assert!((l0.v[(0, 0)].re - 1.0).abs() < 1e-6, "{}", l0.v[(0, 0)]);
    }

    #[test]
    fn transform_gradient_against_differences() {
        // The model is stiff (|Q| ~ 1e5), so values carry ~1e-11 roundoff;
        // a fourth-order difference at a wider step keeps truncation and
        // roundoff both below the tolerance.
        let lt = Lifetime::default_model().unwrap();
        let s = c64(0.01, 0.02);
        let d = lt.transform(s).unwrap();
        for k in 0..6 {
            let h = 5e-3 * THETA[k];
            let at = |dh: f64| {
                let mut th = THETA.to_vec();
                th[k] += dh;
                Lifetime::new(param_model(&th).unwrap(), LifetimeSpec::default()).unwrap().transform(s).unwrap().v[(0, 0)]
            };
            let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            let an = d.d.block(k)[(0, 0)];
            assert!((fd - an).norm() <= 1e-7 * an.norm() + 1e-9, "k = {k}: {fd} vs {an}");
        }
    }
}
