pub mod analyze;
pub mod hydro;
pub mod ruin;
pub mod simple;
pub mod simulate;

use fluidsens::matcalc::Diff;

/// Real part of entry `(i, j)`.
pub(crate) fn value(d: &Diff, i: usize, j: usize) -> f64 {
    d.v[(i, j)].re
}

/// Real parts of the jacobian of entry `(i, j)`, one per parameter.
pub(crate) fn gradient(d: &Diff, i: usize, j: usize) -> Vec<f64> {
    (0..d.params()).map(|k| d.d.block(k)[(i, j)].re).collect()
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
