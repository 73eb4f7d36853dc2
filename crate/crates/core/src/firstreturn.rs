//! First-return matrices Ψ(s), Ξ(s), their closures D, U, K, J and all
//! parameter derivatives.

use crate::error::{Result, SfmError};
use crate::linalg::{self, c64, CMat, C64};
use crate::matcalc::{BlockJacobian, Diff};
use crate::model::{fluid_generator, fluid_generator_diff, ParamModel, QBlocks, QDiff, QJacobians, SfmModel};

/// Largest `n·m` handled by the dense Kronecker Sylvester solver.
pub const SYLVESTER_MAX: usize = 2500;
pub const RICCATI_MAX_ITER: usize = 200;
const RICCATI_RTOL: f64 = 1e-12;
const STEP_RTOL: f64 = 1e-14;
const NULL_RECURRENT_TOL: f64 = 1e-10;

/// Solves `A X + X B = C` through `(I ⊗ A + Bᵀ ⊗ I) vec X = vec C`.
pub fn sylvester(a: &CMat, b: &CMat, c: &CMat) -> Result<CMat> {
    let (n, m) = (a.nrows(), b.nrows());
    if a.ncols() != n || b.ncols() != m || c.shape() != (n, m) {
        return Err(SfmError::DimensionMismatch(format!(
            "sylvester: A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    if n * m > SYLVESTER_MAX {
        return Err(SfmError::SylvesterTooLarge(n * m));
    }
    if n * m == 0 {
        return Ok(CMat::zeros(n, m));
    }
    let nm = n * m;
    let mut big = CMat::zeros(nm, nm);
    for blk in 0..m {
        big.view_mut((blk * n, blk * n), (n, n)).copy_from(a);
    }
    for i in 0..m {
        for j in 0..m {
            let bji = b[(j, i)];
            if bji != C64::new(0.0, 0.0) {
                for r in 0..n {
                    big[(i * n + r, j * n + r)] += bji;
                }
            }
        }
    }
    let rhs = CMat::from_column_slice(nm, 1, c.as_slice());
    let x = linalg::solve(&big, &rhs).map_err(|e| match e {
        SfmError::SingularMatrix => SfmError::SpectraOverlap,
        other => other,
    })?;
    Ok(CMat::from_column_slice(n, m, x.as_slice()))
}

/// Residual of `0 = A + B X + X C + X E X`.
fn residual(a: &CMat, b: &CMat, c: &CMat, e: &CMat, x: &CMat) -> CMat {
    a + b * x + x * c + x * e * x
}

/// Newton iteration for `0 = A + B X + X C + X E X` from `x0`.
fn riccati_newton(a: &CMat, b: &CMat, c: &CMat, e: &CMat, x0: CMat, max_iter: usize) -> Result<CMat> {
    let qnorm = [a, b, c, e].iter().map(|m| linalg::norm_inf(m)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = RICCATI_RTOL * qnorm;
    let mut x = x0;
    let mut r = residual(a, b, c, e, &x);
    let mut rn = linalg::norm_inf(&r);
    let mut polish = 0;
    for _ in 0..max_iter {
        if rn == 0.0 {
            return Ok(x);
        }
        let lhs_a = b + &x * e;
        let lhs_b = c + e * &x;
        let h = sylvester(&lhs_a, &lhs_b, &(-&r))?;
        let next = &x + &h;
        if !linalg::is_finite(&next) {
            return Err(SfmError::NonFinite);
        }
        let r_next = residual(a, b, c, e, &next);
        let rn_next = linalg::norm_inf(&r_next);
        let small_step = linalg::norm_inf(&h) <= STEP_RTOL * linalg::norm_inf(&next);
        if rn <= tol || small_step {
            // converged; keep polishing while it still helps
            if rn_next < rn {
                x = next;
                r = r_next;
                rn = rn_next;
            }
            polish += 1;
            if polish >= 2 || rn_next >= rn {
                return Ok(x);
            }
            continue;
        }
        x = next;
        r = r_next;
        rn = rn_next;
    }
    if rn <= tol {
        Ok(x)
    } else {
        Err(SfmError::NoConvergence { iterations: max_iter, residual: rn })
    }
}

/// Minimal nonnegative solution of `0 = Q₊₋ + Q₊₊Ψ + ΨQ₋₋ + ΨQ₋₊Ψ` for real `s`.
pub fn solve_psi(q: &QBlocks) -> Result<CMat> {
    let x0 = CMat::zeros(q.pm.nrows(), q.pm.ncols());
    riccati_newton(&q.pm, &q.pp, &q.mm, &q.mp, x0, RICCATI_MAX_ITER)
}

/// Minimal nonnegative solution of `0 = Q₋₊ + Q₋₋Ξ + ΞQ₊₊ + ΞQ₊₋Ξ` for real `s`.
pub fn solve_xi(q: &QBlocks) -> Result<CMat> {
    let x0 = CMat::zeros(q.mp.nrows(), q.mp.ncols());
    riccati_newton(&q.mp, &q.mm, &q.pp, &q.pm, x0, RICCATI_MAX_ITER)
}

pub fn riccati_residual_psi(q: &QBlocks, psi: &CMat) -> f64 {
    linalg::norm_inf(&residual(&q.pm, &q.pp, &q.mm, &q.mp, psi))
}

pub fn riccati_residual_xi(q: &QBlocks, xi: &CMat) -> f64 {
    linalg::norm_inf(&residual(&q.mp, &q.mm, &q.pp, &q.pm, xi))
}

/// Residual of the parameter-differentiated Riccati equation, maximised over
/// parameters.
pub fn differentiated_residual(q: &QBlocks, dq: &QJacobians, psi: &CMat, dpsi: &BlockJacobian) -> f64 {
    (0..dpsi.params())
        .map(|k| {
            let x = dpsi.block(k);
            let r = dq.pm.block(k)
                + dq.pp.block(k) * psi
                + &q.pp * &x
                + &x * &q.mm
                + psi * dq.mm.block(k)
                + &x * &q.mp * psi
                + psi * dq.mp.block(k) * psi
                + psi * &q.mp * &x;
            linalg::norm_inf(&r)
        })
        .fold(0.0, f64::max)
}

fn spectral_abscissa(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let (_, t) = m.clone().schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)].re).fold(f64::NEG_INFINITY, f64::max)
}

/// Whether `Ψ` yields strictly stable `K = Q₊₊ + ΨQ₋₊` and `D = Q₋₋ + Q₋₊Ψ`.
fn psi_branch_ok(q: &QBlocks, psi: &CMat) -> bool {
    let k = &q.pp + psi * &q.mp;
    let d = &q.mm + &q.mp * psi;
    spectral_abscissa(&k) < 0.0 && spectral_abscissa(&d) < 0.0
}

fn xi_branch_ok(q: &QBlocks, xi: &CMat) -> bool {
    let u = &q.pp + &q.pm * xi;
    let j = &q.mm + xi * &q.pm;
    spectral_abscissa(&u) < 0.0 && spectral_abscissa(&j) < 0.0
}

/// Continues the real-axis solutions at `Re s` up to `s` in the imaginary part.
fn continue_to(
    model: &SfmModel,
    s: C64,
    psi0: CMat,
    xi0: CMat,
) -> Result<(QBlocks, CMat, CMat)> {
    let sigma = s.re;
    let omega = s.im;
    let (mut psi, mut xi) = (psi0, xi0);
    let mut at = 0.0f64;
    let mut step = omega;
    let mut halvings = 0;
    loop {
        let target = if (at + step).abs() >= omega.abs() { omega } else { at + step };
        let q = fluid_generator(model, c64(sigma, target))?;
        let trial = riccati_newton(&q.pm, &q.pp, &q.mm, &q.mp, psi.clone(), 30).and_then(|p| {
            let x = riccati_newton(&q.mp, &q.mm, &q.pp, &q.pm, xi.clone(), 30)?;
            Ok((p, x))
        });
        match trial {
            Ok((p, x)) if psi_branch_ok(&q, &p) && xi_branch_ok(&q, &x) => {
                psi = p;
                xi = x;
                at = target;
                if target == omega {
                    return Ok((q, psi, xi));
                }
                step *= 2.0;
            }
            _ => {
                step /= 2.0;
                halvings += 1;
                if halvings > 60 {
                    return Err(SfmError::NoConvergence { iterations: halvings, residual: f64::NAN });
                }
            }
        }
    }
}

/// Ψ, Ξ and the closures at one transform point, with their jacobians.
#[derive(Debug, Clone)]
pub struct FirstReturnBundle {
    pub s: C64,
    pub q: QDiff,
    pub psi: Diff,
    pub xi: Diff,
    pub d: Diff,
    pub u: Diff,
    pub k: Diff,
    pub j: Diff,
}

impl FirstReturnBundle {
    /// Full bundle with parameter derivatives.
    pub fn compute(pm: &ParamModel, s: C64) -> Result<Self> {
        Self::build(pm.model(), Some(pm), s)
    }

    /// Values only (jacobians have zero parameters).
    pub fn values(model: &SfmModel, s: C64) -> Result<Self> {
        Self::build(model, None, s)
    }

    fn build(model: &SfmModel, pm: Option<&ParamModel>, s: C64) -> Result<Self> {
        if s.re < 0.0 {
            return Err(SfmError::InvalidArgument(format!("Re(s) = {} must be nonnegative", s.re)));
        }
        if s == c64(0.0, 0.0) {
            let mu = model.drift()?;
            if mu.abs() < NULL_RECURRENT_TOL {
                return Err(SfmError::NullRecurrent { drift: mu });
            }
        }
        let real = fluid_generator(model, c64(s.re, 0.0))?;
        let psi_r = solve_psi(&real)?;
        let xi_r = solve_xi(&real)?;
        let (psi, xi) = if s.im == 0.0 {
            (psi_r, xi_r)
        } else {
            let (_, p, x) = continue_to(model, s, psi_r, xi_r)?;
            (p, x)
        };
        let q = match pm {
            Some(pm) => fluid_generator_diff(pm, s)?,
            None => {
                let v = fluid_generator(model, s)?;
                QDiff {
                    s,
                    pp: Diff::constant(v.pp, 0),
                    pm: Diff::constant(v.pm, 0),
                    mm: Diff::constant(v.mm, 0),
                    mp: Diff::constant(v.mp, 0),
                }
            }
        };
        Self::assemble(q, psi, xi)
    }

    fn assemble(q: QDiff, psi: CMat, xi: CMat) -> Result<Self> {
        let p = q.pp.params();
        let (qv, dq) = (q.values(), q.jacobians());
        let kv = &qv.pp + &psi * &qv.mp;
        let dv = &qv.mm + &qv.mp * &psi;
        let uv = &qv.pp + &qv.pm * &xi;
        let jv = &qv.mm + &xi * &qv.pm;

        let dpsi = dpsi(&dq, &psi, &kv, &dv, p)?;
        let dxi = dxi(&dq, &xi, &jv, &uv, p)?;
        let psi = Diff::new(psi, dpsi);
        let xi = Diff::new(xi, dxi);
        let (d, u, k, j) = dclosures(&q, &psi, &xi);
        Ok(Self { s: q.s, q, psi, xi, d, u, k, j })
    }

    pub fn q_values(&self) -> QBlocks {
        self.q.values()
    }

    pub fn params(&self) -> usize {
        self.psi.params()
    }
}

/// Per-parameter Sylvester solves `K X + X D = −R_k`.
pub fn dpsi(dq: &QJacobians, psi: &CMat, k: &CMat, d: &CMat, params: usize) -> Result<BlockJacobian> {
    let mut out = BlockJacobian::zeros(psi.nrows(), psi.ncols(), params);
    for p in 0..params {
        let r = dq.pm.block(p) + dq.pp.block(p) * psi + psi * dq.mm.block(p) + psi * dq.mp.block(p) * psi;
        out.set_block(p, &sylvester(k, d, &(-r))?)?;
    }
    Ok(out)
}

/// Per-parameter Sylvester solves `J X + X U = −R'_k`.
pub fn dxi(dq: &QJacobians, xi: &CMat, j: &CMat, u: &CMat, params: usize) -> Result<BlockJacobian> {
    let mut out = BlockJacobian::zeros(xi.nrows(), xi.ncols(), params);
    for p in 0..params {
        let r = dq.mp.block(p) + dq.mm.block(p) * xi + xi * dq.pp.block(p) + xi * dq.pm.block(p) * xi;
        out.set_block(p, &sylvester(j, u, &(-r))?)?;
    }
    Ok(out)
}

/// `D, U, K, J` with their jacobians.
pub fn dclosures(q: &QDiff, psi: &Diff, xi: &Diff) -> (Diff, Diff, Diff, Diff) {
    let d = &q.mm + &(&q.mp * psi);
    let u = &q.pp + &(&q.pm * xi);
    let k = &q.pp + &(psi * &q.mp);
    let j = &q.mm + &(xi * &q.pm);
    (d, u, k, j)
}
