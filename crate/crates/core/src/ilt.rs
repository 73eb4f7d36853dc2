//! Numerical inversion of Laplace transforms.
//!
//! Both methods reduce to a fixed rule `f(t) ≈ Re Σ w_k F(s_k)` so inversion is
//! linear in `F`. Each call also evaluates a companion rule of one lower order;
//! the discrepancy between the two is the reported error estimate.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::error::{Result, SfmError};
use crate::linalg::{c64, CMat, RMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Euler,
    Cme,
}

impl std::str::FromStr for Method {
    type Err = SfmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" | "abate-whitt-euler" => Ok(Method::Euler),
            "cme" => Ok(Method::Cme),
            other => Err(SfmError::InvalidArgument(format!("unknown inversion method `{other}`"))),
        }
    }
}

pub const EULER_ORDERS: std::ops::RangeInclusive<usize> = 10..=400;
pub const CME_ORDERS: std::ops::RangeInclusive<usize> = 10..=100;

/// Euler averaging length for a given total number of terms.
fn euler_m(order: usize) -> usize {
    (order * 3 / 5).min(17)
}
/// Contour abscissa parameter; discretisation error is about `e^{-A}`.
const EULER_A: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionSpec {
    pub method: Method,
    pub order: usize,
}

impl Default for InversionSpec {
    fn default() -> Self {
        Self::euler(30)
    }
}

impl InversionSpec {
    pub fn euler(order: usize) -> Self {
        Self { method: Method::Euler, order }
    }

    pub fn cme(order: usize) -> Self {
        Self { method: Method::Cme, order }
    }

    pub fn with_default_order(method: Method) -> Self {
        match method {
            Method::Euler => Self::euler(30),
            Method::Cme => Self::cme(50),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (range, name) = match self.method {
            Method::Euler => (EULER_ORDERS, "euler"),
            Method::Cme => (CME_ORDERS, "cme"),
        };
        if range.contains(&self.order) {
            Ok(())
        } else {
            Err(SfmError::InvalidOrder { method: name, order: self.order })
        }
    }
}

/// Nodes and complex weights of a rule for a fixed `t`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
}

fn binomial_tail(m: usize) -> Vec<f64> {
    // tail[i] = 2^-m Σ_{j>=i} C(m, j)
    let mut c = vec![1.0f64; m + 1];
    for j in 1..=m {
        c[j] = c[j - 1] * (m + 1 - j) as f64 / j as f64;
    }
    let scale = 0.5f64.powi(m as i32);
    let mut tail = vec![0.0; m + 2];
    for i in (0..=m).rev() {
        tail[i] = tail[i + 1] + c[i] * scale;
    }
    tail
}

fn euler_rule(order: usize, t: f64) -> Rule {
    let m = euler_m(order);
    let n = order - m - 1;
    let tail = binomial_tail(m);
    let front = (EULER_A / 2.0).exp() / t;
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for k in 0..=n + m {
        let avg = if k <= n { 1.0 } else { tail[k - n] };
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let half = if k == 0 { 0.5 } else { 1.0 };
        nodes.push(c64(EULER_A, 2.0 * PI * k as f64) / (2.0 * t));
        weights.push(c64(front * sign * half * avg, 0.0));
    }
    Rule { nodes, weights }
}

#[derive(Debug, Deserialize)]
struct CmeKernel {
    n: usize,
    omega: f64,
    mu1: f64,
    eta: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct CmeTable {
    version: u32,
    kernels: Vec<CmeKernel>,
}

fn cme_table() -> Result<&'static CmeTable> {
    static TABLE: OnceLock<std::result::Result<CmeTable, String>> = OnceLock::new();
    TABLE
        .get_or_init(|| {
            let t: CmeTable = serde_json::from_str(include_str!("../data/cme_params.json"))
                .map_err(|e| e.to_string())?;
            if t.version != 1 {
                return Err(format!("unsupported table version {}", t.version));
            }
            Ok(t)
        })
        .as_ref()
        .map_err(|e| SfmError::Parse(format!("cme table: {e}")))
}

fn cme_rule(order: usize, t: f64) -> Result<Rule> {
    let k = cme_table()?
        .kernels
        .iter()
        .find(|k| k.n == order)
        .ok_or(SfmError::InvalidOrder { method: "cme", order })?;
    let nodes = (0..k.eta.len())
        .map(|j| c64(k.mu1, k.mu1 * k.omega * j as f64) / t)
        .collect();
    let weights = k.eta.iter().map(|&e| c64(e / t, 0.0)).collect();
    Ok(Rule { nodes, weights })
}

pub fn rule(spec: &InversionSpec, t: f64) -> Result<Rule> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(SfmError::InvalidArgument(format!("inversion point t = {t} must be positive")));
    }
    match spec.method {
        Method::Euler => Ok(euler_rule(spec.order, t)),
        Method::Cme => cme_rule(spec.order, t),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub value: RMat,
    pub error_estimate: f64,
}

fn apply(rule: &Rule, values: &[CMat]) -> RMat {
    let (r, c) = values[0].shape();
    let mut acc = CMat::zeros(r, c);
    for (w, v) in rule.weights.iter().zip(values) {
        acc += v * *w;
    }
    acc.map(|z| z.re)
}

/// Inverts a matrix-valued transform at `t`, componentwise.
pub fn invert<F>(f: F, t: f64, spec: &InversionSpec) -> Result<Inversion>
where
    F: Fn(C64) -> Result<CMat>,
{
    spec.validate()?;
    let main = rule(spec, t)?;
    let values = main.nodes.iter().map(|&s| f(s)).collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(SfmError::InvalidOrder { method: "euler", order: spec.order });
    }
    let value = apply(&main, &values);

    let error_estimate = match spec.method {
        Method::Euler => {
            let lower = euler_rule(spec.order - 1, t);
            let lower_vals = &values[..lower.nodes.len()];
            max_diff(&value, &apply(&lower, lower_vals))
        }
        Method::Cme => {
            let lower = cme_rule(spec.order - 1, t)?;
            let lower_vals = lower.nodes.iter().map(|&s| f(s)).collect::<Result<Vec<_>>>()?;
            max_diff(&value, &apply(&lower, &lower_vals))
        }
    };
    Ok(Inversion { value, error_estimate })
}

/// Largest `Re(s)·τ` allowed when a dead-time factor `e^{sτ}` multiplies a
/// transform evaluated without it.
pub const MAX_SHIFT_EXPONENT: f64 = 600.0;

/// Dead time actually removed at `t` for a function vanishing on `[0, tau]`.
///
/// Any shift up to `tau` is exact; it is reduced where `e^{sτ}` would grow
/// past `e^{MAX_SHIFT_EXPONENT}` on the rule's nodes.
pub fn effective_delay(spec: &InversionSpec, t: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Ok(0.0);
    }
    let r = rule(spec, 1.0)?.nodes.iter().fold(0.0f64, |m, s| m.max(s.re));
    Ok(tau.min(MAX_SHIFT_EXPONENT * t / (r + MAX_SHIFT_EXPONENT)))
}

/// Inverts a transform of a function that vanishes on `[0, tau]`.
///
/// Returns `None` for `t <= tau`.
pub fn invert_delayed<F>(f: F, t: f64, tau: f64, spec: &InversionSpec) -> Result<Option<Inversion>>
where
    F: Fn(C64) -> Result<CMat>,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(SfmError::InvalidArgument(format!("inversion point t = {t} must be positive")));
    }
    if t <= tau {
        return Ok(None);
    }
    let shift = effective_delay(spec, t, tau)?;
    invert(|s| Ok(f(s)? * (s * shift).exp()), t - shift, spec).map(Some)
}

/// As [`invert`], failing when the error estimate exceeds `tol`.
pub fn invert_checked<F>(f: F, t: f64, spec: &InversionSpec, tol: f64) -> Result<Inversion>
where
    F: Fn(C64) -> Result<CMat>,
{
    let inv = invert(f, t, spec)?;
    if inv.error_estimate > tol || !inv.error_estimate.is_finite() {
        return Err(SfmError::InversionAccuracyLoss {
            estimate: inv.error_estimate,
            tolerance: tol,
        });
    }
    Ok(inv)
}

pub fn invert_scalar<F>(f: F, t: f64, spec: &InversionSpec) -> Result<(f64, f64)>
where
    F: Fn(C64) -> C64,
{
    let inv = invert(|s| Ok(CMat::from_element(1, 1, f(s))), t, spec)?;
    Ok((inv.value[(0, 0)], inv.error_estimate))
}

fn max_diff(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> C64 {
        c64(1.0, 0.0)
    }

    #[test]
    fn exponential_pair() {
        let (v, _) = invert_scalar(|s| one() / (s + 1.0), 1.0, &InversionSpec::default()).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-9, "{v}");
    }

    #[test]
    fn ramp_pair() {
        let (v, _) = invert_scalar(|s| one() / (s * s), 2.0, &InversionSpec::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn erlang_density() {
        let (v, _) = invert_scalar(|s| (one() + s / 2.0).powi(-2), 1.0, &InversionSpec::default()).unwrap();
        assert!((v - 4.0 * (-2.0f64).exp()).abs() < 1e-9, "{v}");
        assert!((v - 0.5413411).abs() < 1e-7);
    }

    #[test]
    fn cme_is_nonoscillating_on_a_step() {
        // unit step delayed to t = 1
        let f = |s: C64| (-s).exp() / s;
        for t in [0.5, 0.8] {
            let (v, _) = invert_scalar(f, t, &InversionSpec::cme(50)).unwrap();
            assert!(v.abs() < 2e-2, "t={t} v={v}");
        }
        let (v, _) = invert_scalar(f, 2.0, &InversionSpec::cme(50)).unwrap();
        assert!((v - 1.0).abs() < 1e-2);
    }

    #[test]
    fn orders_are_validated() {
        let f = |_s: C64| Ok(CMat::zeros(1, 1));
        assert!(matches!(
            invert(f, 1.0, &InversionSpec::euler(5)),
            Err(SfmError::InvalidOrder { .. })
        ));
        assert!(invert(f, 1.0, &InversionSpec::cme(101)).is_err());
    }

    #[test]
    fn accuracy_loss_is_reported() {
        let f = |s: C64| Ok(CMat::from_element(1, 1, (-s).exp() / s));
        let r = invert_checked(f, 1.0, &InversionSpec::default(), 1e-12);
        assert!(matches!(r, Err(SfmError::InversionAccuracyLoss { .. })));
    }

    #[test]
    fn linear_in_the_transform() {
        let spec = InversionSpec::default();
        let f = |s: C64| one() / (s + 0.5);
        let g = |s: C64| one() / (s * s + 1.0);
        let (a, b) = (2.5, -0.75);
        let (fv, _) = invert_scalar(f, 1.3, &spec).unwrap();
        let (gv, _) = invert_scalar(g, 1.3, &spec).unwrap();
        let (hv, _) = invert_scalar(|s| f(s) * a + g(s) * b, 1.3, &spec).unwrap();
        assert!((hv - (a * fv + b * gv)).abs() <= 1e-11 * hv.abs().max(1.0));
    }

    #[test]
    fn delayed_step() {
        // e^{-2s}/(s + 1) is e^{-(t-2)} for t > 2 and zero before.
        let f = |s: C64| Ok(CMat::from_element(1, 1, (-2.0 * s).exp() / (s + 1.0)));
        let spec = InversionSpec::euler(30);
        assert!(invert_delayed(f, 1.5, 2.0, &spec).unwrap().is_none());
        for t in [2.05, 2.5, 4.0, 10.0] {
            let v = invert_delayed(f, t, 2.0, &spec).unwrap().unwrap();
            assert!((v.value[(0, 0)] - (-(t - 2.0f64)).exp()).abs() < 1e-8, "t = {t}");
        }
    }
}
