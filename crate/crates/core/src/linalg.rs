//! Dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, SfmError};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Pivot ratio below which an LU factorisation is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn complexify(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn ones_col(n: usize) -> CMat {
    CMat::from_element(n, 1, C64::new(1.0, 0.0))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf(m: &CMat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn lu_checked(a: &CMat) -> Result<nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(SfmError::DimensionMismatch(format!(
            "cannot factor a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if !is_finite(a) {
        return Err(SfmError::NonFinite);
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..u.nrows() {
        let d = u[(i, i)].norm();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if u.nrows() > 0 && (hi == 0.0 || lo <= SINGULAR_PIVOT_RATIO * hi.max(max_abs(a))) {
        return Err(SfmError::SingularMatrix);
    }
    Ok(lu)
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    if a.nrows() == 0 {
        return Ok(zeros(0, 0));
    }
    lu_checked(a)?.try_inverse().ok_or(SfmError::SingularMatrix)
}

/// Solves `A X = B`.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.nrows() != b.nrows() {
        return Err(SfmError::DimensionMismatch(format!(
            "solve: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    if a.nrows() == 0 {
        return Ok(zeros(0, b.ncols()));
    }
    lu_checked(a)?.solve(b).ok_or(SfmError::SingularMatrix)
}

/// Solves `X A = B` for row-oriented right-hand sides.
pub fn solve_right(a: &CMat, b: &CMat) -> Result<CMat> {
    Ok(solve(&a.transpose(), &b.transpose())?.transpose())
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
pub fn expm(a: &CMat) -> Result<CMat> {
    if a.nrows() == 0 {
        return Ok(zeros(0, 0));
    }
    if !is_finite(a) {
        return Err(SfmError::NonFinite);
    }
    let e = a.exp();
    if is_finite(&e) {
        Ok(e)
    } else {
        Err(SfmError::NonFinite)
    }
}

pub fn hstack(parts: &[&CMat]) -> CMat {
    let rows = parts.first().map_or(0, |m| m.nrows());
    let cols = parts.iter().map(|m| m.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut c0 = 0;
    for m in parts {
        assert_eq!(m.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c0), (rows, m.ncols())).copy_from(*m);
        c0 += m.ncols();
    }
    out
}

pub fn vstack(parts: &[&CMat]) -> CMat {
    let cols = parts.first().map_or(0, |m| m.ncols());
    let rows = parts.iter().map(|m| m.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut r0 = 0;
    for m in parts {
        assert_eq!(m.ncols(), cols, "vstack column mismatch");
        out.view_mut((r0, 0), (m.nrows(), cols)).copy_from(*m);
        r0 += m.nrows();
    }
    out
}

/// Extracts the submatrix with the given row and column index lists.
pub fn select(m: &RMat, rows: &[usize], cols: &[usize]) -> RMat {
    RMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Sum of the entries of each row, as a column.
pub fn row_sums(m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), 1, |i, _| m.row(i).iter().sum())
}

pub fn diag(values: impl IntoIterator<Item = C64>) -> CMat {
    let v: Vec<C64> = values.into_iter().collect();
    CMat::from_diagonal(&DVector::from_vec(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let a = diag([c64(-1.0, 0.0), c64(0.5, 1.0)]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - c64((-1.0f64).exp(), 0.0)).norm() < 1e-15);
        assert!((e[(1, 1)] - c64(0.5, 1.0).exp()).norm() < 1e-14);

        let n = CMat::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(3.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        let e = expm(&n).unwrap();
        assert!((e[(0, 1)] - c64(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn expm_of_stiff_generator_keeps_rows_stochastic() {
        // rates spanning five orders of magnitude
        let t = RMat::from_row_slice(3, 3, &[-2e5, 2e5, 0.0, 1.0, -3.0, 2.0, 0.0, 7e4, -7e4]);
        let e = expm(&complexify(&t)).unwrap();
        for i in 0..3 {
            let s: C64 = e.row(i).iter().sum();
            assert!((s - c64(1.0, 0.0)).norm() < 1e-10, "row {i} sums to {s}");
            assert!(e.row(i).iter().all(|z| z.re > -1e-12));
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = complexify(&RMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert_eq!(inverse(&a), Err(SfmError::SingularMatrix));
        assert!(inverse(&zeros(0, 0)).unwrap().is_empty());
    }

    #[test]
    fn solve_right_inverts_from_the_right() {
        let a = complexify(&RMat::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]));
        let b = complexify(&RMat::from_row_slice(1, 2, &[4.0, 5.0]));
        let x = solve_right(&a, &b).unwrap();
        assert!(max_abs(&(x * &a - b)) < 1e-14);
    }
}
