//! Two-boundary first-passage matrices and transient quantities in the
//! Laplace domain, with their parameter derivatives and time-domain inversion.

use crate::error::{Result, SfmError};
use crate::firstreturn::FirstReturnBundle;
use crate::ilt::{self, InversionSpec};
use crate::linalg::{self, c64, CMat, RMat, C64};
use crate::matcalc::{BlockJacobian, Diff};
use crate::model::{ParamModel, PhaseClass, Pieces, SfmModel};
use crate::stationary::ClassVectors;

/// `G^{(x,y)}(s)` and `H^{(x,y)}(s)` as the block row `[G H]`, columns
/// ordered (+, −, +, −).
#[derive(Debug, Clone)]
pub struct PassageMatrices {
    pub x: f64,
    pub y: f64,
    pub s: C64,
    n_plus: usize,
    n_minus: usize,
    /// Value with the jacobian of the direct product-rule route.
    pub gh: Diff,
    /// Jacobian of the alternative route `(∂L − [G H]∂R)R⁻¹`.
    pub d_alt: BlockJacobian,
}

impl PassageMatrices {
    fn block(&self, rows: PhaseClass, col0: usize, ncols: usize) -> Diff {
        let (r0, nr) = match rows {
            PhaseClass::Plus => (0, self.n_plus),
            _ => (self.n_plus, self.n_minus),
        };
        self.gh.sub_block(r0, nr, col0, ncols)
    }

    pub fn g_pm(&self) -> Diff {
        self.block(PhaseClass::Plus, self.n_plus, self.n_minus)
    }

    pub fn g_mm(&self) -> Diff {
        self.block(PhaseClass::Minus, self.n_plus, self.n_minus)
    }

    pub fn h_pp(&self) -> Diff {
        self.block(PhaseClass::Plus, self.n_plus + self.n_minus, self.n_plus)
    }

    pub fn h_mp(&self) -> Diff {
        self.block(PhaseClass::Minus, self.n_plus + self.n_minus, self.n_plus)
    }

    /// Largest gap between the two derivative routes.
    pub fn route_gap(&self) -> f64 {
        (&self.gh.d - &self.d_alt).max_abs()
    }
}

fn zeros(r: usize, c: usize, p: usize) -> Diff {
    Diff::constant(CMat::zeros(r, c), p)
}

fn eye(n: usize, p: usize) -> Diff {
    Diff::identity(n, p)
}

/// Two-boundary passage matrices for `0 ≤ x ≤ y`.
pub fn passage_matrices(fr: &FirstReturnBundle, x: f64, y: f64) -> Result<PassageMatrices> {
    if !(0.0 <= x && x <= y && y.is_finite()) {
        return Err(SfmError::InvalidArgument(format!("passage levels need 0 <= x <= y, got x = {x}, y = {y}")));
    }
    let p = fr.params();
    let np = fr.psi.v.nrows();
    let nm = fr.psi.v.ncols();
    let edx = fr.d.exp(x)?;
    let edy = fr.d.exp(y)?;
    let euy = fr.u.exp(y)?;
    let euyx = if x == 0.0 { euy.clone() } else { fr.u.exp(y - x)? };

    let l = Diff::vstack(&[
        &Diff::hstack(&[&zeros(np, np, p), &(&fr.psi * &edx), &euyx, &zeros(np, nm, p)]),
        &Diff::hstack(&[&zeros(nm, np, p), &edx, &(&fr.xi * &euyx), &zeros(nm, nm, p)]),
    ]);
    let r = Diff::vstack(&[
        &Diff::hstack(&[&eye(np, p), &zeros(np, nm, p), &euy, &zeros(np, nm, p)]),
        &Diff::hstack(&[&zeros(nm, np, p), &eye(nm, p), &(&fr.xi * &euy), &zeros(nm, nm, p)]),
        &Diff::hstack(&[&zeros(np, np, p), &(&fr.psi * &edy), &eye(np, p), &zeros(np, nm, p)]),
        &Diff::hstack(&[&zeros(nm, np, p), &edy, &zeros(nm, np, p), &eye(nm, p)]),
    ]);
    let r_inv = r.inv().map_err(|_| SfmError::SingularPassageSystem)?;
    let gh = &l * &r_inv;
    let d_alt = (&l.d - &r.d.left_mul(&gh.v)).right_kron(&r_inv.v);
    Ok(PassageMatrices { x, y, s: fr.s, n_plus: np, n_minus: nm, gh, d_alt })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Minus,
    Plus,
}

/// Initial condition: level `z > 0` and a phase distribution on one side.
#[derive(Debug, Clone)]
pub struct InitialCondition {
    pub z: f64,
    pub side: Start,
    pub g: Vec<f64>,
}

impl InitialCondition {
    pub fn new(z: f64, side: Start, g: Vec<f64>) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(SfmError::InvalidArgument(format!("initial level z = {z} must be positive")));
        }
        if g.iter().any(|&v| v < 0.0) || (g.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(SfmError::InvalidArgument("initial phase distribution must be a probability vector".into()));
        }
        Ok(Self { z, side, g })
    }
}

/// Transforms at one `s`: `p̃(s)` and the ingredients of `f̃(x, s)`.
#[derive(Debug, Clone)]
pub struct TransientPoint {
    pub fr: FirstReturnBundle,
    /// Boundary transform over `S₋ ∪ S₀`, minus phases first.
    pub p_tilde: Diff,
    z: f64,
    side: Start,
    g: Diff,
    /// `g₋`, or `g₊Ψ` for a plus start.
    start: Diff,
    t_op: Diff,
    c_plus: Diff,
    c_minus: Diff,
    to_zero: Diff,
}

/// A model (optionally a parameterised family) with an initial condition.
#[derive(Debug, Clone)]
pub struct Transient<'a> {
    model: &'a SfmModel,
    pm: Option<&'a ParamModel>,
    init: InitialCondition,
}

impl<'a> Transient<'a> {
    pub fn new(pm: &'a ParamModel, init: InitialCondition) -> Result<Self> {
        Self::build(pm.model(), Some(pm), init)
    }

    pub fn values(model: &'a SfmModel, init: InitialCondition) -> Result<Self> {
        Self::build(model, None, init)
    }

    fn build(model: &'a SfmModel, pm: Option<&'a ParamModel>, init: InitialCondition) -> Result<Self> {
        let part = model.partition();
        let n = match init.side {
            Start::Minus => part.n_minus(),
            Start::Plus => part.n_plus(),
        };
        if init.g.len() != n {
            return Err(SfmError::DimensionMismatch(format!(
                "initial distribution has {} entries, the start side has {n} phases",
                init.g.len()
            )));
        }
        Ok(Self { model, pm, init })
    }

    pub fn model(&self) -> &SfmModel {
        self.model
    }

    pub fn params(&self) -> usize {
        self.pm.map_or(0, |p| p.params())
    }

    pub fn at(&self, s: C64) -> Result<TransientPoint> {
        self.at_delayed(s, 0.0)
    }

    /// As [`Transient::at`] with `p̃` multiplied by `e^{sτ}`, for `τ` at most
    /// the minimum time to reach level zero. The factor is folded into the
    /// exponent so it stays finite for large `Re s`.
    fn at_delayed(&self, s: C64, tau: f64) -> Result<TransientPoint> {
        if !(s.re > 0.0) {
            return Err(SfmError::InvalidArgument(format!("transient transforms need Re(s) > 0, got {s}")));
        }
        let fr = match self.pm {
            Some(pm) => FirstReturnBundle::compute(pm, s)?,
            None => FirstReturnBundle::values(self.model, s)?,
        };
        let p = fr.params();
        let part = self.model.partition();
        let (nm, nz) = (part.n_minus(), part.n_zero());
        let pc = Pieces::new(self.model, self.pm);
        let mz = part.minus_zero();
        let t_oo = pc.t_idx(&mz, &mz);
        let t_op = pc.t_idx(&mz, &part.plus);
        let t_pm0 = pc.t_idx(&part.plus_minus(), &part.zero);
        let t_00 = pc.t(PhaseClass::Zero, PhaseClass::Zero);

        let shift = |d: &Diff| {
            let n = d.v.nrows();
            Diff::new(CMat::identity(n, n) * s - &d.v, -&d.d)
        };
        let n_s = shift(&t_oo).inv()?;
        let top = n_s.sub_block(0, nm, 0, nm + nz);
        let kernel = &(&top * &t_op) * &fr.psi;
        let repeat = (&eye(nm, p) - &kernel).inv().map_err(|_| SfmError::SingularRepeatFactor)?;

        let g = Diff::constant(CMat::from_row_slice(1, self.init.g.len(), &self.init.g.iter().map(|&v| c64(v, 0.0)).collect::<Vec<_>>()), p);
        let start = match self.init.side {
            Start::Minus => g.clone(),
            Start::Plus => &g * &fr.psi,
        };
        let n_m = fr.d.v.nrows();
        let d_shifted = Diff::new(&fr.d.v + CMat::identity(n_m, n_m) * (s * tau / self.init.z), fr.d.d.clone());
        let p_tilde = &(&(&start * &d_shifted.exp(self.init.z)?) * &repeat) * &top;
        let to_zero = &t_pm0 * &shift(&t_00).inv().map_err(|_| SfmError::SingularTabooBlock)?;
        Ok(TransientPoint {
            p_tilde,
            z: self.init.z,
            side: self.init.side,
            g,
            start,
            t_op,
            c_plus: pc.inv_abs_rates(PhaseClass::Plus),
            c_minus: pc.inv_abs_rates(PhaseClass::Minus),
            to_zero,
            fr,
        })
    }

    fn max_speed(&self, class: PhaseClass) -> f64 {
        self.model.rates_of(class).iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Earliest time the level can reach zero.
    pub fn min_drain_time(&self) -> f64 {
        self.init.z / self.max_speed(PhaseClass::Minus)
    }

    /// Earliest time the level can reach `x`.
    pub fn min_travel_time(&self, x: f64) -> f64 {
        let z = self.init.z;
        if x < z {
            (z - x) / self.max_speed(PhaseClass::Minus)
        } else if x > z {
            (x - z) / self.max_speed(PhaseClass::Plus)
        } else {
            0.0
        }
    }

    /// `p(t)` over `S₋ ∪ S₀` and its jacobian, by numerical inversion.
    ///
    /// The transform is inverted after removing the dead time before the
    /// earliest possible drain, which keeps the jump there out of the
    /// inversion window.
    pub fn boundary_at_time(&self, t: f64, spec: &InversionSpec) -> Result<TimeValue> {
        let n = self.model.partition().n_minus() + self.model.partition().n_zero();
        let tau = self.min_drain_time();
        self.invert(n, t, tau, spec, |s| Ok(self.at_delayed(s, tau)?.p_tilde))
    }

    /// As [`Transient::boundary_at_time`] without the dead-time shift.
    pub fn boundary_at_time_unshifted(&self, t: f64, spec: &InversionSpec) -> Result<TimeValue> {
        let n = self.model.partition().n_minus() + self.model.partition().n_zero();
        self.invert(n, t, 0.0, spec, |s| Ok(self.at(s)?.p_tilde))
    }

    /// `f(x, t)` as the row `[f₊ f₋ f₀]` and its jacobian, by numerical inversion.
    pub fn density_at_time(&self, x: f64, t: f64, spec: &InversionSpec) -> Result<TimeValue> {
        let tau = self.min_travel_time(x);
        if !(t > tau) {
            return self.invert(self.model.phase_count(), t, tau, spec, |_| unreachable!());
        }
        let shift = ilt::effective_delay(spec, t, tau)?;
        self.invert(self.model.phase_count(), t, shift, spec, |s| {
            let f = self.at(s)?.f_tilde(x)?;
            Ok(Diff::hstack(&[&f.plus, &f.minus, &f.zero]).scale((s * shift).exp()))
        })
    }

    fn invert(&self, n: usize, t: f64, tau: f64, spec: &InversionSpec, f: impl Fn(C64) -> Result<Diff>) -> Result<TimeValue> {
        let p = self.params();
        if !(t > 0.0) {
            return Err(SfmError::InvalidArgument(format!("time t = {t} must be positive")));
        }
        if !tau.is_finite() || t <= tau {
            return Ok(TimeValue::zeros(n, p));
        }
        let inv = ilt::invert(
            |s| {
                let d = f(s)?;
                Ok(linalg::hstack(&[&d.v, d.d.data()]))
            },
            t - tau,
            spec,
        )?;
        let value = inv.value.columns(0, n).into_owned();
        let jac = RMat::from_fn(n, p, |i, k| inv.value[(0, n + k * n + i)]);
        Ok(TimeValue { value: value.transpose(), jacobian: jac, error_estimate: inv.error_estimate })
    }
}

/// An inverted quantity: a column of values, one jacobian column per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeValue {
    pub value: RMat,
    pub jacobian: RMat,
    pub error_estimate: f64,
}

impl TimeValue {
    pub fn zeros(n: usize, params: usize) -> Self {
        TimeValue { value: RMat::zeros(n, 1), jacobian: RMat::zeros(n, params), error_estimate: 0.0 }
    }

    pub fn checked(self, tol: f64) -> Result<Self> {
        if self.error_estimate > tol || !self.error_estimate.is_finite() {
            return Err(SfmError::InversionAccuracyLoss { estimate: self.error_estimate, tolerance: tol });
        }
        Ok(self)
    }
}

impl TransientPoint {
    pub fn s(&self) -> C64 {
        self.fr.s
    }

    /// Level densities `f̃₊, f̃₋, f̃₀` at `x > 0`.
    pub fn f_tilde(&self, x: f64) -> Result<ClassVectors> {
        if !(x > 0.0) {
            return Err(SfmError::InvalidArgument(format!("level x = {x} must be positive")));
        }
        let fr = &self.fr;
        let p = fr.params();
        let (np, nm) = (fr.psi.v.nrows(), fr.psi.v.ncols());
        let boundary = &(&self.p_tilde * &self.t_op) * &fr.k.exp(x)?;
        let mut plus = &boundary * &self.c_plus;
        let mut minus = &(&boundary * &fr.psi) * &self.c_minus;

        let hxx = passage_matrices(fr, x, x)?.h_mp();
        if x <= self.z {
            let inner = (&eye(nm, p) - &(&hxx * &fr.psi)).inv().map_err(|_| SfmError::SingularRepeatFactor)?;
            let lead = &(&self.start * &fr.d.exp(self.z - x)?) * &inner;
            plus = &plus + &(&(&lead * &hxx) * &self.c_plus);
            minus = &minus + &(&lead * &self.c_minus);
        } else {
            let hzx = passage_matrices(fr, self.z, x)?.h_pp();
            let entry = match self.side {
                Start::Minus => &(&self.g * &passage_matrices(fr, self.z, self.z)?.h_mp()) * &hzx,
                Start::Plus => &self.g * &hzx,
            };
            let inner = (&eye(np, p) - &(&fr.psi * &hxx)).inv().map_err(|_| SfmError::SingularRepeatFactor)?;
            let lead = &entry * &inner;
            plus = &plus + &(&lead * &self.c_plus);
            minus = &minus + &(&(&lead * &fr.psi) * &self.c_minus);
        }
        let zero = &Diff::hstack(&[&plus, &minus]) * &self.to_zero;
        Ok(ClassVectors { plus, minus, zero })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineFamily;
    use crate::quadrature;
    use std::sync::Arc;

    fn simple_pm(a: f64, b: f64) -> ParamModel {
        let fam = AffineFamily {
            names: vec!["a".into(), "b".into()],
            theta0: vec![a, b],
            t0: RMat::from_row_slice(2, 2, &[-a, a, b, -b]),
            c0: vec![1.0, -1.0],
            dt: vec![
                RMat::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]),
                RMat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]),
            ],
            dc: vec![vec![0.0; 2]; 2],
        };
        ParamModel::new(Arc::new(fam), vec![a, b]).unwrap()
    }

    fn three_phase_pm() -> ParamModel {
        let t0 = RMat::from_row_slice(3, 3, &[-2.0, 1.2, 0.8, 0.7, -1.0, 0.3, 1.5, 0.5, -2.0]);
        let fam = AffineFamily {
            names: vec!["q".into(), "r".into()],
            theta0: vec![1.2, -0.5],
            t0,
            c0: vec![0.6, -0.5, 0.0],
            dt: vec![RMat::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), RMat::zeros(3, 3)],
            dc: vec![vec![0.0; 3], vec![0.0, 1.0, 0.0]],
        };
        ParamModel::new(Arc::new(fam), vec![1.2, -0.5]).unwrap()
    }

    #[test]
    fn two_boundary_absorption_is_certain_at_zero() {
        let pm = simple_pm(1.0, 0.5);
        let fr = FirstReturnBundle::compute(&pm, c64(0.0, 0.0)).unwrap();
        let pmx = passage_matrices(&fr, 1.0, 1.0).unwrap();
        let h = pmx.h_mp().v[(0, 0)].re;
        let g = pmx.g_mm().v[(0, 0)].re;
        assert!(h > 0.0 && h < 1.0);
        assert!((g + h - 1.0).abs() < 1e-12);
        assert!((pmx.h_pp().v[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_upper_boundary_reduces_to_one_boundary() {
        let pm = simple_pm(1.0, 0.5);
        let fr = FirstReturnBundle::compute(&pm, c64(0.4, 0.0)).unwrap();
        let pmx = passage_matrices(&fr, 0.7, 200.0).unwrap();
        let edx = fr.d.exp(0.7).unwrap().v;
        assert!((pmx.g_mm().v[(0, 0)] - edx[(0, 0)]).norm() < 1e-12);
        assert!((pmx.g_pm().v[(0, 0)] - (&fr.psi.v * &edx)[(0, 0)]).norm() < 1e-12);
    }

    #[test]
    fn derivative_routes_agree() {
        let pm = three_phase_pm();
        let fr = FirstReturnBundle::compute(&pm, c64(0.2, 0.3)).unwrap();
        let pmx = passage_matrices(&fr, 0.5, 1.0).unwrap();
        assert!(pmx.route_gap() < 1e-8);
        let h = 1e-6;
        let at = |pm: &ParamModel| passage_matrices(&FirstReturnBundle::compute(pm, c64(0.2, 0.3)).unwrap(), 0.5, 1.0).unwrap().gh.v;
        for k in 0..2 {
            let fd = (at(&pm.perturbed(k, h).unwrap()) - at(&pm.perturbed(k, -h).unwrap())) / c64(2.0 * h, 0.0);
            let gap = linalg::max_abs(&(pmx.gh.d.block(k) - &fd));
            assert!(gap <= 1e-6 * linalg::max_abs(&fd) + 1e-9, "param {k}: {gap}");
        }
    }

    #[test]
    fn simple_boundary_transform_closed_form() {
        let pm = simple_pm(1.0, 0.5);
        let tr = Transient::new(&pm, InitialCondition::new(1.0, Start::Minus, vec![1.0]).unwrap()).unwrap();
        for s in [c64(0.5, 0.0), c64(2.0, 0.0), c64(1.0, 0.5)] {
            let pt = tr.at(s).unwrap();
            let psi = pt.fr.psi.v[(0, 0)];
            let d = pt.fr.d.v[(0, 0)];
            let exact = d.exp() / (s + 0.5 - psi * 0.5);
            assert!((pt.p_tilde.v[(0, 0)] - exact).norm() < 1e-13);
        }
        let far = tr.at(c64(200.0, 0.0)).unwrap();
        assert!(far.p_tilde.v[(0, 0)].norm() < 1e-50);
    }

    fn transform_mass(tr: &Transient, s: f64) -> f64 {
        let pt = tr.at(c64(s, 0.0)).unwrap();
        let z = 1.0;
        let f = |x: f64| Ok(vec![pt.f_tilde(x)?.total().v[(0, 0)].re]);
        let (lo, _) = quadrature::integrate(f, 0.0, z, 1e-12).unwrap();
        let (hi, _) = quadrature::integrate(f, z, z + 80.0 / s.min(1.0), 1e-12).unwrap();
        pt.p_tilde.row_sums().v[(0, 0)].re + lo[0] + hi[0]
    }

    #[test]
    fn transform_mass_is_one_over_s() {
        let pm = three_phase_pm();
        for side in [Start::Minus, Start::Plus] {
            let tr = Transient::new(&pm, InitialCondition::new(1.0, side, vec![1.0]).unwrap()).unwrap();
            for s in [0.5, 1.0, 2.0] {
                let m = transform_mass(&tr, s);
                assert!((m - 1.0 / s).abs() < 1e-8, "{side:?} s={s}: {m}");
            }
        }
    }
}
