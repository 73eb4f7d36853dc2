//! Browser bindings. Every export returns a JSON document; `www/index.html`
//! plots it.

use fluidsens::ilt::InversionSpec;
use fluidsens::scenarios::ruin::{erlang_mixture_model, Ruin};
use fluidsens::scenarios::simple::{self, ClosedForm};
use fluidsens::stationary::StationaryBundle;
use fluidsens::transient::{InitialCondition, Start, Transient};
use fluidsens::{Result, SfmError};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// A sampled curve with one derivative series per parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub value: Vec<f64>,
    pub params: Vec<String>,
    pub derivative: Vec<Vec<f64>>,
}

impl Curve {
    fn new(params: &[&str]) -> Self {
        Curve {
            x: Vec::new(),
            value: Vec::new(),
            params: params.iter().map(|s| s.to_string()).collect(),
            derivative: vec![Vec::new(); params.len()],
        }
    }

    fn push(&mut self, x: f64, v: f64, d: &[f64]) {
        self.x.push(x);
        self.value.push(v);
        for (series, &dk) in self.derivative.iter_mut().zip(d) {
            series.push(dk);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stationary {
    pub p_minus: f64,
    pub dp_minus: Vec<f64>,
    pub closed_form_p_minus: f64,
    pub sign_change: f64,
    pub density: Curve,
}

fn samples(max: f64, n: usize) -> Result<Vec<f64>> {
    if !(max > 0.0 && max.is_finite()) || !(2..=2000).contains(&n) {
        return Err(SfmError::InvalidArgument(format!("need a positive range and 2..=2000 points, got {max}, {n}")));
    }
    Ok((1..=n).map(|i| max * i as f64 / n as f64).collect())
}

/// Boundary mass and `π₊(x)` for the two-phase model.
pub fn stationary(a: f64, b: f64, x_max: f64, n: usize) -> Result<Stationary> {
    let cf = ClosedForm::stable(a, b)?;
    let st = StationaryBundle::compute(&simple::param_model(a, b)?)?;
    let mut density = Curve::new(&["a", "b"]);
    for x in samples(x_max, n)? {
        let f = st.density(x)?;
        let d: Vec<f64> = f.plus.d.blocks().map(|m| m[(0, 0)].re).collect();
        density.push(x, f.plus.v[(0, 0)].re, &d);
    }
    Ok(Stationary {
        p_minus: st.p.v[(0, 0)].re,
        dp_minus: st.p.d.blocks().map(|m| m[(0, 0)].re).collect(),
        closed_form_p_minus: cf.p_minus(),
        sign_change: cf.dpi_da_sign_change(),
        density,
    })
}

/// `p₋(t)` after a start at level `z` in the down phase.
pub fn transient(a: f64, b: f64, z: f64, t_max: f64, n: usize) -> Result<Curve> {
    ClosedForm::stable(a, b)?;
    let pm = simple::param_model(a, b)?;
    let tr = Transient::new(&pm, InitialCondition::new(z, Start::Minus, vec![1.0])?)?;
    let spec = InversionSpec::default();
    let mut curve = Curve::new(&["a", "b"]);
    for t in samples(t_max, n)? {
        let tv = tr.boundary_at_time(t, &spec)?;
        curve.push(t, tv.value[(0, 0)], &[tv.jacobian[(0, 0)], tv.jacobian[(0, 1)]]);
    }
    Ok(curve)
}

/// `ψ(x)` for Erlang-mixture claims.
pub fn ruin(theta1: f64, theta2: f64, x_max: f64, n: usize) -> Result<Curve> {
    let r = Ruin::new(&erlang_mixture_model(theta1, theta2)?)?;
    let mut curve = Curve::new(&["theta1", "theta2"]);
    for x in std::iter::once(0.0).chain(samples(x_max, n)?) {
        let (v, d) = r.probability_with_gradient(x)?;
        curve.push(x, v, &d);
    }
    Ok(curve)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = simpleStationary)]
pub fn simple_stationary(a: f64, b: f64, x_max: f64, n: usize) -> std::result::Result<String, JsError> {
    to_js(stationary(a, b, x_max, n))
}

#[wasm_bindgen(js_name = simpleTransient)]
pub fn simple_transient(a: f64, b: f64, z: f64, t_max: f64, n: usize) -> std::result::Result<String, JsError> {
    to_js(transient(a, b, z, t_max, n))
}

#[wasm_bindgen(js_name = ruinProbability)]
pub fn ruin_probability(theta1: f64, theta2: f64, x_max: f64, n: usize) -> std::result::Result<String, JsError> {
    to_js(ruin(theta1, theta2, x_max, n))
}
