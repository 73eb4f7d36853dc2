//! Two-phase model with one up phase and one down phase, unit speeds.

use std::sync::Arc;

use crate::error::{Result, SfmError};
use crate::linalg::{C64, RMat};
use crate::model::{AffineFamily, ModelFamily, ParamModel};

/// Family over `θ = (a, b)` with `T = [[−a, a], [b, −b]]` and `c = (1, −1)`.
pub fn family() -> Arc<dyn ModelFamily> {
    Arc::new(AffineFamily {
        names: vec!["a".into(), "b".into()],
        theta0: vec![0.0, 0.0],
        t0: RMat::zeros(2, 2),
        c0: vec![1.0, -1.0],
        dt: vec![
            RMat::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]),
            RMat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]),
        ],
        dc: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
    })
}

pub fn param_model(a: f64, b: f64) -> Result<ParamModel> {
    ParamModel::new(family(), vec![a, b])
}

/// Closed forms for the two-phase model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub a: f64,
    pub b: f64,
}

impl ClosedForm {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(SfmError::InvalidArgument(format!("rates must be positive, got a = {a}, b = {b}")));
        }
        Ok(ClosedForm { a, b })
    }

    /// As [`ClosedForm::new`], also requiring `a > b`.
    pub fn stable(a: f64, b: f64) -> Result<Self> {
        let cf = Self::new(a, b)?;
        if a <= b {
            return Err(SfmError::UnstableModel { drift: cf.drift() });
        }
        Ok(cf)
    }

    fn w(&self, s: C64) -> C64 {
        C64::new(self.a + self.b, 0.0) + 2.0 * s
    }

    fn r(&self, s: C64) -> C64 {
        let w = self.w(s);
        (w * w - 4.0 * self.a * self.b).sqrt()
    }

    pub fn nu(&self) -> [f64; 2] {
        let t = self.a + self.b;
        [self.b / t, self.a / t]
    }

    pub fn drift(&self) -> f64 {
        (self.b - self.a) / (self.a + self.b)
    }

    pub fn psi(&self, s: C64) -> C64 {
        (self.w(s) - self.r(s)) / (2.0 * self.b)
    }

    pub fn xi(&self, s: C64) -> C64 {
        (self.w(s) - self.r(s)) / (2.0 * self.a)
    }

    /// `∂Ψ/∂a`, `∂Ψ/∂b`.
    pub fn dpsi(&self, s: C64) -> [C64; 2] {
        let (w, r, b) = (self.w(s), self.r(s), self.b);
        let da = (1.0 - (w - 2.0 * b) / r) / (2.0 * b);
        let db = (1.0 - (w - 2.0 * self.a) / r) / (2.0 * b) - (w - r) / (2.0 * b * b);
        [da, db]
    }

    pub fn dpsi_ds(&self, s: C64) -> C64 {
        (1.0 - self.w(s) / self.r(s)) / self.b
    }

    pub fn mean_busy_period(&self) -> f64 {
        2.0 / (self.a - self.b)
    }

    pub fn d(&self, s: C64) -> C64 {
        -self.b - s + (self.w(s) - self.r(s)) / 2.0
    }

    pub fn dd(&self, s: C64) -> [C64; 2] {
        let (w, r) = (self.w(s), self.r(s));
        [(1.0 - (w - 2.0 * self.b) / r) / 2.0, -1.0 + (1.0 - (w - 2.0 * self.a) / r) / 2.0]
    }

    /// Equal to `U(s)` for this model.
    pub fn k(&self, s: C64) -> C64 {
        -self.a - s + (self.w(s) - self.r(s)) / 2.0
    }

    pub fn p_minus(&self) -> f64 {
        (self.a - self.b) / (self.a + self.b)
    }

    pub fn dp_minus(&self) -> [f64; 2] {
        let t = (self.a + self.b).powi(2);
        [2.0 * self.b / t, -2.0 * self.a / t]
    }

    pub fn alpha(&self) -> f64 {
        self.b * self.p_minus()
    }

    pub fn dalpha(&self) -> [f64; 2] {
        let (a, b) = (self.a, self.b);
        let t = (a + b).powi(2);
        [2.0 * b * b / t, (a * a - 2.0 * a * b - b * b) / t]
    }

    /// `π₊(x) = π₋(x)`.
    pub fn pi_plus(&self, x: f64) -> f64 {
        self.alpha() * ((self.b - self.a) * x).exp()
    }

    pub fn dpi_plus(&self, x: f64) -> [f64; 2] {
        let e = ((self.b - self.a) * x).exp();
        let [da, db] = self.dalpha();
        [(da - self.alpha() * x) * e, (db + self.alpha() * x) * e]
    }

    /// Level at which `∂π₊/∂a` changes sign.
    pub fn dpi_da_sign_change(&self) -> f64 {
        2.0 * self.b / (self.a * self.a - self.b * self.b)
    }

    /// Level at which `∂π₊/∂b` changes sign.
    pub fn dpi_db_sign_change(&self) -> f64 {
        2.0 * self.a / (self.a * self.a - self.b * self.b) - 1.0 / self.b
    }

    /// `p̃₋(s)` from level `z` in the down phase.
    pub fn p_tilde(&self, s: C64, z: f64) -> C64 {
        (self.d(s) * z).exp() / (self.b + s - self.b * self.psi(s))
    }

    pub fn dp_tilde(&self, s: C64, z: f64) -> [C64; 2] {
        let e = (self.d(s) * z).exp();
        let den = self.b + s - self.b * self.psi(s);
        let [dda, ddb] = self.dd(s);
        let [dpa, dpb] = self.dpsi(s);
        let dden = [-self.b * dpa, 1.0 - self.psi(s) - self.b * dpb];
        [
            e * z * dda / den - e * dden[0] / (den * den),
            e * z * ddb / den - e * dden[1] / (den * den),
        ]
    }

    /// Two-boundary passage from level `x` with taboo level `y`, as
    /// `(G₋, H₊)` for a start in phase `start` (0 up, 1 down).
    pub fn passage(&self, s: C64, x: f64, y: f64, start: usize) -> (C64, C64) {
        let (psi, xi, d, u) = (self.psi(s), self.xi(s), self.d(s), self.k(s));
        let (edx, edy, euy, euyx) = ((d * x).exp(), (d * y).exp(), (u * y).exp(), (u * (y - x)).exp());
        // g + hΨe^{Dy} = l₁, gΞe^{Uy} + h = l₂.
        let (l1, l2) = if start == 0 { (psi * edx, euyx) } else { (edx, xi * euyx) };
        let g = (l1 - l2 * psi * edy) / (1.0 - xi * psi * euy * edy);
        let h = l2 - g * xi * euy;
        (g, h)
    }

    /// `f̃₊(x, s)` and `f̃₋(x, s)` from level `z` in the down phase.
    pub fn f_tilde(&self, s: C64, z: f64, x: f64) -> (C64, C64) {
        let (psi, d, k) = (self.psi(s), self.d(s), self.k(s));
        let boundary = self.p_tilde(s, z) * self.b * (k * x).exp();
        let h_xx = self.passage(s, x, x, 1).1;
        if x <= z {
            let lead = (d * (z - x)).exp() / (1.0 - h_xx * psi);
            (boundary + lead * h_xx, boundary * psi + lead)
        } else {
            let lead = self.passage(s, z, z, 1).1 * self.passage(s, z, x, 0).1 / (1.0 - psi * h_xx);
            (boundary + lead, boundary * psi + lead * psi)
        }
    }
}
