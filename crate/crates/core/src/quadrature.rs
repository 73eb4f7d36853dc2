//! Adaptive Gauss–Kronrod (7, 15) quadrature for vector-valued integrands.
#![allow(clippy::excessive_precision)]

use crate::error::{Result, SfmError};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod<F>(f: &F, a: f64, b: f64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let n = fc.len();
    let mut k: Vec<f64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut g: Vec<f64> = fc.iter().map(|v| v * WG[3]).collect();
    for i in 0..7 {
        let f1 = f(c - h * XGK[i])?;
        let f2 = f(c + h * XGK[i])?;
        for j in 0..n {
            let s = f1[j] + f2[j];
            k[j] += WGK[i] * s;
            if i % 2 == 1 {
                g[j] += WG[i / 2] * s;
            }
        }
    }
    let err = k.iter().zip(&g).fold(0.0f64, |m, (x, y)| m.max((x - y).abs() * h));
    Ok((k.into_iter().map(|v| v * h).collect(), err))
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` (max norm).
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let mut pending = vec![(a, b, kronrod(&f, a, b)?)];
    let mut total: Option<Vec<f64>> = None;
    let mut err_total = 0.0;
    let mut evals = 0usize;
    while let Some((lo, hi, (val, err))) = pending.pop() {
        let local_tol = tol * (hi - lo) / (b - a);
        if err <= local_tol.max(1e-15 * val.iter().fold(0.0f64, |m, v| m.max(v.abs()))) || hi - lo < 1e-12 * (b - a) {
            err_total += err;
            match total.as_mut() {
                Some(t) => t.iter_mut().zip(&val).for_each(|(t, v)| *t += v),
                None => total = Some(val),
            }
            continue;
        }
        evals += 1;
        if evals > 100_000 {
            return Err(SfmError::NoConvergence { iterations: evals, residual: err });
        }
        let mid = 0.5 * (lo + hi);
        pending.push((lo, mid, kronrod(&f, lo, mid)?));
        pending.push((mid, hi, kronrod(&f, mid, hi)?));
    }
    Ok((total.unwrap_or_default(), err_total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let (v, _) = integrate(|x| Ok(vec![x * x, (-x).exp()]), 0.0, 3.0, 1e-12).unwrap();
        assert!((v[0] - 9.0).abs() < 1e-12);
        assert!((v[1] - (1.0 - (-3.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand() {
        let (v, _) = integrate(|x| Ok(vec![1.0 / (1e-4 + (x - 0.3) * (x - 0.3))]), 0.0, 1.0, 1e-10).unwrap();
        let exact = 100.0 * ((0.7f64 / 1e-2).atan() + (0.3f64 / 1e-2).atan());
        assert!((v[0] - exact).abs() < 1e-8);
    }
}
