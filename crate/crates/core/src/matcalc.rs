//! Matrix derivative calculus over a parameter vector.
//!
//! A derivative of an `m x n` matrix with respect to `p` parameters is kept as
//! the block row `[dA/dθ1 | ... | dA/dθp]`, so that `dA (I ⊗ B)` is a blockwise
//! right multiplication.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Result, SfmError};
use crate::ilt::{self, InversionSpec};
use crate::linalg::{self, c64, CMat, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    rows: usize,
    cols: usize,
    params: usize,
    data: CMat,
}

impl BlockJacobian {
    pub fn zeros(rows: usize, cols: usize, params: usize) -> Self {
        Self {
            rows,
            cols,
            params,
            data: CMat::zeros(rows, cols * params),
        }
    }

    pub fn from_blocks(rows: usize, cols: usize, blocks: Vec<CMat>) -> Result<Self> {
        let params = blocks.len();
        let mut out = Self::zeros(rows, cols, params);
        for (k, b) in blocks.into_iter().enumerate() {
            out.set_block(k, &b)?;
        }
        Ok(out)
    }

    /// Wraps an existing `rows x (cols * params)` block row.
    pub fn from_data(cols: usize, params: usize, data: CMat) -> Result<Self> {
        if data.ncols() != cols * params {
            return Err(SfmError::DimensionMismatch(format!(
                "block row has {} columns, expected {cols} x {params}",
                data.ncols()
            )));
        }
        Ok(Self {
            rows: data.nrows(),
            cols,
            params,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> usize {
        self.params
    }

    pub fn data(&self) -> &CMat {
        &self.data
    }

    pub fn block(&self, k: usize) -> CMat {
        self.data
            .view((0, k * self.cols), (self.rows, self.cols))
            .into_owned()
    }

    pub fn set_block(&mut self, k: usize, b: &CMat) -> Result<()> {
        if b.shape() != (self.rows, self.cols) || k >= self.params {
            return Err(SfmError::DimensionMismatch(format!(
                "block {k} of shape {:?} does not fit a {}x{} jacobian with {} params",
                b.shape(),
                self.rows,
                self.cols,
                self.params
            )));
        }
        self.data
            .view_mut((0, k * self.cols), (self.rows, self.cols))
            .copy_from(b);
        Ok(())
    }

    pub fn blocks(&self) -> impl Iterator<Item = CMat> + '_ {
        (0..self.params).map(move |k| self.block(k))
    }

    pub fn map_blocks(&self, f: impl Fn(usize, CMat) -> CMat) -> Self {
        let blocks: Vec<CMat> = (0..self.params).map(|k| f(k, self.block(k))).collect();
        let (rows, cols) = match blocks.first() {
            Some(b) => b.shape(),
            None => f(0, CMat::zeros(self.rows, self.cols)).shape(),
        };
        let mut out = Self::zeros(rows, cols, self.params);
        for (k, b) in blocks.iter().enumerate() {
            out.data.view_mut((0, k * cols), (rows, cols)).copy_from(b);
        }
        out
    }

    pub fn try_map_blocks(&self, f: impl Fn(usize, CMat) -> Result<CMat>) -> Result<Self> {
        let blocks = (0..self.params)
            .map(|k| f(k, self.block(k)))
            .collect::<Result<Vec<_>>>()?;
        let (rows, cols) = match blocks.first() {
            Some(b) => b.shape(),
            None => f(0, CMat::zeros(self.rows, self.cols))?.shape(),
        };
        Self::from_blocks(rows, cols, blocks)
    }

    /// `A · dX`, blockwise.
    pub fn left_mul(&self, a: &CMat) -> Self {
        Self {
            rows: a.nrows(),
            cols: self.cols,
            params: self.params,
            data: a * &self.data,
        }
    }

    /// `dX · (I ⊗ B)`.
    pub fn right_kron(&self, b: &CMat) -> Self {
        let bc = b.ncols();
        let mut data = CMat::zeros(self.rows, bc * self.params);
        for k in 0..self.params {
            let mut out = data.view_mut((0, k * bc), (self.rows, bc));
            self.data.view((0, k * self.cols), (self.rows, self.cols)).mul_to(b, &mut out);
        }
        Self { rows: self.rows, cols: bc, params: self.params, data }
    }

    pub fn scale(&self, z: C64) -> Self {
        Self {
            data: self.data.map(|v| v * z),
            ..self.clone()
        }
    }

    pub fn transpose_blocks(&self) -> Self {
        self.map_blocks(|_, x| x.transpose())
    }

    pub fn submatrix(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Self {
        self.map_blocks(|_, x| x.view((r0, c0), (nr, nc)).into_owned())
    }

    pub fn hstack(parts: &[&BlockJacobian]) -> Self {
        let params = parts.first().map_or(0, |j| j.params);
        let rows = parts.first().map_or(0, |j| j.rows);
        let cols = parts.iter().map(|j| j.cols).sum();
        let mut out = Self::zeros(rows, cols, params);
        for k in 0..params {
            let refs: Vec<CMat> = parts.iter().map(|j| j.block(k)).collect();
            let r: Vec<&CMat> = refs.iter().collect();
            out.set_block(k, &linalg::hstack(&r)).expect("hstack shapes");
        }
        out
    }

    pub fn vstack(parts: &[&BlockJacobian]) -> Self {
        let params = parts.first().map_or(0, |j| j.params);
        let cols = parts.first().map_or(0, |j| j.cols);
        let rows = parts.iter().map(|j| j.rows).sum();
        let mut out = Self::zeros(rows, cols, params);
        for k in 0..params {
            let refs: Vec<CMat> = parts.iter().map(|j| j.block(k)).collect();
            let r: Vec<&CMat> = refs.iter().collect();
            out.set_block(k, &linalg::vstack(&r)).expect("vstack shapes");
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.data)
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(
            (self.rows, self.cols, self.params),
            (other.rows, other.cols, other.params),
            "jacobian shape mismatch"
        );
    }
}

impl Add for &BlockJacobian {
    type Output = BlockJacobian;
    fn add(self, rhs: Self) -> BlockJacobian {
        self.check_same(rhs);
        BlockJacobian {
            data: &self.data + &rhs.data,
            ..self.clone()
        }
    }
}

impl Sub for &BlockJacobian {
    type Output = BlockJacobian;
    fn sub(self, rhs: Self) -> BlockJacobian {
        self.check_same(rhs);
        BlockJacobian {
            data: &self.data - &rhs.data,
            ..self.clone()
        }
    }
}

impl Neg for &BlockJacobian {
    type Output = BlockJacobian;
    fn neg(self) -> BlockJacobian {
        BlockJacobian {
            data: -&self.data,
            ..self.clone()
        }
    }
}

fn conform(a: &CMat, b: &CMat, what: &str) -> Result<()> {
    if a.ncols() != b.nrows() {
        return Err(SfmError::DimensionMismatch(format!(
            "{what}: {}x{} times {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Product rule: `dA (I ⊗ B) + A dB`.
pub fn dproduct(a: &CMat, da: &BlockJacobian, b: &CMat, db: &BlockJacobian) -> Result<BlockJacobian> {
    conform(a, b, "dproduct")?;
    if da.params != db.params {
        return Err(SfmError::DimensionMismatch(format!(
            "dproduct: {} vs {} parameters",
            da.params, db.params
        )));
    }
    if da.rows != a.nrows() || da.cols != a.ncols() || db.rows != b.nrows() || db.cols != b.ncols() {
        return Err(SfmError::DimensionMismatch("dproduct: jacobian shapes".into()));
    }
    Ok(&da.right_kron(b) + &db.left_mul(a))
}

/// Inverse rule: `-A⁻¹ dA (I ⊗ A⁻¹)`.
pub fn dinverse(a: &CMat, da: &BlockJacobian) -> Result<BlockJacobian> {
    let inv = linalg::inverse(a)?;
    Ok(dinverse_with(&inv, da))
}

pub fn dinverse_with(inv: &CMat, da: &BlockJacobian) -> BlockJacobian {
    -&da.left_mul(inv).right_kron(inv)
}

/// Derivative of `exp(A x)` from the top-right block of the augmented
/// exponential `exp([[A, dA], [0, A]] x)`.
pub fn dexp(a: &CMat, da: &BlockJacobian, x: f64) -> Result<BlockJacobian> {
    Ok(exp_with_derivative(a, da, x)?.1)
}

/// Both `exp(A x)` and its derivative.
///
/// Scaling and squaring is shared across parameters: the augmented
/// exponential is taken at `A x / 2^k` with `‖A x‖ / 2^k ≤ 1/2`, then the
/// pair is squared back up with `(X, Y) ↦ (X², XY + YX)`.
pub fn exp_with_derivative(a: &CMat, da: &BlockJacobian, x: f64) -> Result<(CMat, BlockJacobian)> {
    let n = a.nrows();
    let ax = a.map(|z| z * x);
    let norm = ax.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    if !norm.is_finite() {
        return Err(crate::error::SfmError::NonFinite);
    }
    let k = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(k) * x;
    let small = a.map(|z| z * scale);
    let mut e = linalg::expm(&small)?;
    let mut ys = (0..da.params)
        .map(|p| {
            let d = da.block(p);
            if linalg::max_abs(&d) == 0.0 {
                return Ok(None);
            }
            let mut big = CMat::zeros(2 * n, 2 * n);
            big.view_mut((0, 0), (n, n)).copy_from(&small);
            big.view_mut((n, n), (n, n)).copy_from(&small);
            big.view_mut((0, n), (n, n)).copy_from(&d.map(|z| z * scale));
            Ok(Some(linalg::expm(&big)?.view((0, n), (n, n)).into_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..k {
        for y in ys.iter_mut().flatten() {
            *y = &e * &*y + &*y * &e;
        }
        e = &e * &e;
    }
    if !linalg::is_finite(&e) {
        return Err(crate::error::SfmError::NonFinite);
    }
    let blocks = ys.into_iter().map(|y| y.unwrap_or_else(|| CMat::zeros(n, n))).collect();
    Ok((e, BlockJacobian::from_blocks(n, n, blocks)?))
}

/// Derivative of `exp(A x)` by inverting its Laplace transform in `x`,
/// `(vI - A)⁻¹ dA (I ⊗ (vI - A)⁻¹)`. Requires a stable `A`.
pub fn dexp_via_ilt(a: &CMat, da: &BlockJacobian, x: f64, spec: &InversionSpec) -> Result<BlockJacobian> {
    let n = a.nrows();
    let p = da.params;
    let transform = |v: C64| -> Result<CMat> {
        let r = linalg::inverse(&(CMat::identity(n, n) * v - a))?;
        Ok(da.left_mul(&r).right_kron(&r).data)
    };
    let inv = ilt::invert(transform, x, spec)?;
    BlockJacobian::from_data(n, p, linalg::complexify(&inv.value))
}

/// A matrix value paired with its parameter jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct Diff {
    pub v: CMat,
    pub d: BlockJacobian,
}

impl Diff {
    pub fn new(v: CMat, d: BlockJacobian) -> Self {
        debug_assert_eq!(v.shape(), (d.rows, d.cols));
        Self { v, d }
    }

    pub fn constant(v: CMat, params: usize) -> Self {
        let (r, c) = v.shape();
        Self {
            v,
            d: BlockJacobian::zeros(r, c, params),
        }
    }

    pub fn identity(n: usize, params: usize) -> Self {
        Self::constant(CMat::identity(n, n), params)
    }

    pub fn params(&self) -> usize {
        self.d.params
    }

    pub fn shape(&self) -> (usize, usize) {
        self.v.shape()
    }

    pub fn inv(&self) -> Result<Self> {
        let inv = linalg::inverse(&self.v)?;
        let d = dinverse_with(&inv, &self.d);
        Ok(Self { v: inv, d })
    }

    pub fn exp(&self, x: f64) -> Result<Self> {
        if x == 0.0 {
            return Ok(Self::identity(self.v.nrows(), self.params()));
        }
        let (v, d) = exp_with_derivative(&self.v, &self.d, x)?;
        Ok(Self { v, d })
    }

    pub fn scale(&self, z: C64) -> Self {
        Self {
            v: self.v.map(|w| w * z),
            d: self.d.scale(z),
        }
    }

    pub fn scale_re(&self, x: f64) -> Self {
        self.scale(c64(x, 0.0))
    }

    pub fn transpose(&self) -> Self {
        Self {
            v: self.v.transpose(),
            d: self.d.transpose_blocks(),
        }
    }

    pub fn sub_block(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Self {
        Self {
            v: self.v.view((r0, c0), (nr, nc)).into_owned(),
            d: self.d.submatrix(r0, nr, c0, nc),
        }
    }

    pub fn hstack(parts: &[&Diff]) -> Self {
        let vs: Vec<&CMat> = parts.iter().map(|p| &p.v).collect();
        let ds: Vec<&BlockJacobian> = parts.iter().map(|p| &p.d).collect();
        Self {
            v: linalg::hstack(&vs),
            d: BlockJacobian::hstack(&ds),
        }
    }

    pub fn vstack(parts: &[&Diff]) -> Self {
        let vs: Vec<&CMat> = parts.iter().map(|p| &p.v).collect();
        let ds: Vec<&BlockJacobian> = parts.iter().map(|p| &p.d).collect();
        Self {
            v: linalg::vstack(&vs),
            d: BlockJacobian::vstack(&ds),
        }
    }

    /// Product with a constant matrix on the right.
    pub fn mul_const(&self, b: &CMat) -> Self {
        Self {
            v: &self.v * b,
            d: self.d.right_kron(b),
        }
    }

    /// Product with a constant matrix on the left.
    pub fn const_mul(a: &CMat, x: &Diff) -> Self {
        Self {
            v: a * &x.v,
            d: x.d.left_mul(a),
        }
    }

    pub fn row_sums(&self) -> Self {
        let ones = linalg::ones_col(self.v.ncols());
        self.mul_const(&ones)
    }
}

impl Mul for &Diff {
    type Output = Diff;
    fn mul(self, rhs: &Diff) -> Diff {
        assert_eq!(self.v.ncols(), rhs.v.nrows(), "Diff product shapes");
        Diff {
            v: &self.v * &rhs.v,
            d: &self.d.right_kron(&rhs.v) + &rhs.d.left_mul(&self.v),
        }
    }
}

impl Add for &Diff {
    type Output = Diff;
    fn add(self, rhs: &Diff) -> Diff {
        Diff {
            v: &self.v + &rhs.v,
            d: &self.d + &rhs.d,
        }
    }
}

impl Sub for &Diff {
    type Output = Diff;
    fn sub(self, rhs: &Diff) -> Diff {
        Diff {
            v: &self.v - &rhs.v,
            d: &self.d - &rhs.d,
        }
    }
}

impl Neg for &Diff {
    type Output = Diff;
    fn neg(self) -> Diff {
        Diff {
            v: -&self.v,
            d: -&self.d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complexify, RMat};

    fn cm(r: usize, c: usize, v: &[f64]) -> CMat {
        complexify(&RMat::from_row_slice(r, c, v))
    }

    // polynomial families used as finite-difference targets
    fn a_of(t: &[f64]) -> CMat {
        cm(3, 3, &[
            1.0 + t[0], t[1] * t[1], 0.3,
            -t[0] * t[1], 2.0, t[0],
            0.5, 1.0 - t[1], 3.0 + t[0] * t[0],
        ])
    }

    fn b_of(t: &[f64]) -> CMat {
        cm(3, 3, &[
            t[1], 1.0, 0.0,
            2.0, t[0] * t[1], 1.0,
            -1.0, 0.0, 2.0 + t[0],
        ])
    }

    fn fd(f: impl Fn(&[f64]) -> CMat, t: &[f64]) -> Vec<CMat> {
        let h = 1e-6;
        (0..t.len())
            .map(|k| {
                let mut tp = t.to_vec();
                let mut tm = t.to_vec();
                tp[k] += h;
                tm[k] -= h;
                (f(&tp) - f(&tm)) / c64(2.0 * h, 0.0)
            })
            .collect()
    }

    fn jac(f: impl Fn(&[f64]) -> CMat, t: &[f64]) -> BlockJacobian {
        let blocks = fd(&f, t);
        let (r, c) = blocks[0].shape();
        BlockJacobian::from_blocks(r, c, blocks).unwrap()
    }

    fn rel_err(a: &BlockJacobian, b: &[CMat]) -> f64 {
        let scale = b.iter().map(linalg::max_abs).fold(1e-300, f64::max);
        b.iter()
            .enumerate()
            .map(|(k, m)| linalg::max_abs(&(a.block(k) - m)))
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn blocks_tile_storage() {
        let j = BlockJacobian::from_blocks(2, 2, vec![cm(2, 2, &[1., 2., 3., 4.]), cm(2, 2, &[5., 6., 7., 8.])]).unwrap();
        assert_eq!(j.data().shape(), (2, 4));
        assert_eq!(j.block(1)[(1, 0)], c64(7.0, 0.0));
        assert_eq!(j.data()[(0, 2)], c64(5.0, 0.0));
    }

    #[test]
    fn scalar_product_rule() {
        let a = cm(1, 1, &[3.0]);
        let b = cm(1, 1, &[5.0]);
        let da = BlockJacobian::from_data(1, 2, cm(1, 2, &[1.0, 0.0])).unwrap();
        let db = BlockJacobian::from_data(1, 2, cm(1, 2, &[0.0, 1.0])).unwrap();
        let d = dproduct(&a, &da, &b, &db).unwrap();
        assert_eq!(d.data(), &cm(1, 2, &[5.0, 3.0]));
    }

    #[test]
    fn product_rule_matches_finite_differences() {
        let t = [0.7, -0.4];
        let d = dproduct(&a_of(&t), &jac(a_of, &t), &b_of(&t), &jac(b_of, &t)).unwrap();
        let oracle = fd(|t| a_of(t) * b_of(t), &t);
        assert!(rel_err(&d, &oracle) < 1e-8);
    }

    #[test]
    fn product_rule_identities() {
        let t = [0.2, 0.9];
        let a = a_of(&t);
        let da = jac(a_of, &t);
        let i = CMat::identity(3, 3);
        let z = BlockJacobian::zeros(3, 3, 2);
        assert!((&dproduct(&a, &da, &i, &z).unwrap() - &da).max_abs() < 1e-15);
        assert!((&dproduct(&i, &z, &a, &da).unwrap() - &da).max_abs() < 1e-15);
        let inv = linalg::inverse(&a).unwrap();
        let dinv = dinverse(&a, &da).unwrap();
        assert!(dproduct(&a, &da, &inv, &dinv).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn inverse_rule_diagonal_and_random() {
        let a = cm(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let da = BlockJacobian::from_blocks(2, 2, vec![cm(2, 2, &[1., 0., 0., 0.]), cm(2, 2, &[0., 0., 0., 1.])]).unwrap();
        let d = dinverse(&a, &da).unwrap();
        assert!((d.block(0)[(0, 0)] - c64(-0.25, 0.0)).norm() < 1e-15);
        assert_eq!(d.block(0)[(1, 1)], c64(0.0, 0.0));

        let f = |t: &[f64]| {
            let mut m = a_of(t) + b_of(t).transpose() * c64(0.1, 0.0);
            m[(0, 1)] += c64(t[0].sin(), 0.0);
            m
        };
        let t = [0.3, 0.8];
        let d = dinverse(&f(&t), &jac(f, &t)).unwrap();
        let oracle = fd(|t| linalg::inverse(&f(t)).unwrap(), &t);
        assert!(rel_err(&d, &oracle) < 1e-7);
    }

    #[test]
    fn scalar_exponential_derivative() {
        let a = cm(1, 1, &[-1.0]);
        let da = BlockJacobian::from_data(1, 1, cm(1, 1, &[-1.0])).unwrap();
        let d = dexp(&a, &da, 2.0).unwrap();
        assert!((d.block(0)[(0, 0)].re + 2.0 * (-2.0f64).exp()).abs() < 1e-14);
        assert!((d.block(0)[(0, 0)].re + 0.27067).abs() < 1e-5);
    }

    fn stable_of(t: &[f64]) -> CMat {
        cm(3, 3, &[
            -2.0 - t[0], 0.5 * t[1], 0.3,
            t[0] * t[1], -1.5, 0.4,
            0.2, 1.0 - t[1], -3.0 + t[0] * t[0] * 0.1,
        ])
    }

    fn series_dexp(a: &CMat, da: &CMat, x: f64) -> CMat {
        // sum_n x^n/n! sum_k A^k dA A^(n-1-k)
        let n = a.nrows();
        let mut total = CMat::zeros(n, n);
        let mut pows = vec![CMat::identity(n, n)];
        let mut fact = 1.0;
        for order in 1..200 {
            fact *= order as f64;
            pows.push(&pows[order - 1] * a);
            let mut term = CMat::zeros(n, n);
            for k in 0..order {
                term += &pows[k] * da * &pows[order - 1 - k];
            }
            let term = term * c64(x.powi(order as i32) / fact, 0.0);
            total += &term;
            if linalg::max_abs(&term) < 1e-16 && order > 5 {
                break;
            }
        }
        total
    }

    #[test]
    fn dexp_agrees_with_series_and_finite_differences() {
        let t = [0.4, 0.6];
        let a = stable_of(&t);
        let da = jac(stable_of, &t);
        for x in [0.1, 1.0, 2.5] {
            let d = dexp(&a, &da, x).unwrap();
            let series: Vec<CMat> = da.blocks().map(|b| series_dexp(&a, &b, x)).collect();
            assert!(rel_err(&d, &series) < 1e-10, "series x={x}");
            let oracle = fd(|t| linalg::expm(&(stable_of(t) * c64(x, 0.0))).unwrap(), &t);
            assert!(rel_err(&d, &oracle) < 1e-7, "fd x={x}");
        }
    }

    #[test]
    fn dexp_semigroup() {
        let t = [0.1, 1.2];
        let a = stable_of(&t);
        let da = jac(stable_of, &t);
        let (x, y) = (0.7, 1.9);
        let (ex, dx) = exp_with_derivative(&a, &da, x).unwrap();
        let (ey, dy) = exp_with_derivative(&a, &da, y).unwrap();
        let dxy = dexp(&a, &da, x + y).unwrap();
        let rhs = dproduct(&ex, &dx, &ey, &dy).unwrap();
        assert!((&dxy - &rhs).max_abs() <= 1e-8 * dxy.max_abs());
    }

    #[test]
    fn dexp_via_laplace_route_agrees() {
        let t = [0.5, 0.2];
        let a = stable_of(&t);
        let da = jac(stable_of, &t);
        for x in [0.5, 2.0] {
            let d = dexp(&a, &da, x).unwrap();
            let via = dexp_via_ilt(&a, &da, x, &InversionSpec::default()).unwrap();
            assert!((&d - &via).max_abs() <= 1e-6 * d.max_abs(), "x={x}");
        }
    }

    #[test]
    fn diff_combinators_follow_calculus() {
        let t = [0.3, 0.5];
        let a = Diff::new(a_of(&t), jac(a_of, &t));
        let b = Diff::new(b_of(&t), jac(b_of, &t));
        let expr = &(&a * &b.inv().unwrap()) - &a.scale_re(2.0);
        let oracle = fd(
            |t| a_of(t) * linalg::inverse(&b_of(t)).unwrap() - a_of(t) * c64(2.0, 0.0),
            &t,
        );
        assert!(rel_err(&expr.d, &oracle) < 1e-7);
    }
}
