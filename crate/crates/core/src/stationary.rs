//! Stationary distribution of the SFM: boundary masses, level densities,
//! their Laplace transform in the level, and all parameter derivatives.

use crate::error::{Result, SfmError};
use crate::firstreturn::FirstReturnBundle;
use crate::linalg::{self, c64, CMat, RMat, RVec, C64};
use crate::matcalc::{BlockJacobian, Diff};
use crate::model::{ParamModel, Partition, PhaseClass, Pieces, SfmModel};

const CONSTRAINT_TOL: f64 = 1e-10;

/// Values over the three phase classes, each paired with its jacobian.
#[derive(Debug, Clone)]
pub struct ClassVectors {
    pub plus: Diff,
    pub minus: Diff,
    pub zero: Diff,
}

impl ClassVectors {
    /// Values scattered back to the model's phase order.
    pub fn by_phase(&self, part: &Partition) -> RVec {
        let mut out = RVec::zeros(part.plus.len() + part.minus.len() + part.zero.len());
        for (idx, d) in [(&part.plus, &self.plus), (&part.minus, &self.minus), (&part.zero, &self.zero)] {
            for (j, &i) in idx.iter().enumerate() {
                out[i] = d.v[(0, j)].re;
            }
        }
        out
    }

    /// Jacobian scattered to phase order, one column per parameter.
    pub fn jacobian_by_phase(&self, part: &Partition) -> RMat {
        let p = self.plus.params();
        let m = part.plus.len() + part.minus.len() + part.zero.len();
        let mut out = RMat::zeros(m, p);
        for (idx, d) in [(&part.plus, &self.plus), (&part.minus, &self.minus), (&part.zero, &self.zero)] {
            for k in 0..p {
                let b = d.d.block(k);
                for (j, &i) in idx.iter().enumerate() {
                    out[(i, k)] = b[(0, j)].re;
                }
            }
        }
        out
    }

    pub fn total(&self) -> Diff {
        let parts = [&self.plus, &self.minus, &self.zero];
        let sums: Vec<Diff> = parts.iter().map(|d| d.row_sums()).collect();
        &(&sums[0] + &sums[1]) + &sums[2]
    }
}

#[derive(Debug, Clone)]
pub struct StationaryBundle {
    partition: Partition,
    pub xi: Diff,
    pub alpha: Diff,
    /// Boundary mass over `S₋ ∪ S₀`, minus phases first.
    pub p: Diff,
    /// `p T⊖₊`, the row vector feeding the level density.
    ptp: Diff,
    k: Diff,
    b: Diff,
    /// `T±₀ (−T₀₀)⁻¹`.
    to_zero: Diff,
    drift: f64,
}

fn solve_constrained(i_minus_m: &CMat, rhs: &CMat, sum: C64) -> Result<CMat> {
    // x (I − M) = rhs, x 1 = sum, stacked and solved in least squares
    let n = i_minus_m.nrows();
    let mut a = CMat::zeros(n + 1, n);
    a.view_mut((0, 0), (n, n)).copy_from(&i_minus_m.transpose());
    for j in 0..n {
        a[(n, j)] = c64(1.0, 0.0);
    }
    let mut b = CMat::zeros(n + 1, 1);
    b.view_mut((0, 0), (n, 1)).copy_from(&rhs.transpose());
    b[(n, 0)] = sum;
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-14)
        .map_err(|_| SfmError::SingularConstraintSystem(f64::NAN))?;
    let resid = linalg::max_abs(&(&a * &x - &b));
    if !(resid <= CONSTRAINT_TOL) {
        return Err(SfmError::SingularConstraintSystem(resid));
    }
    Ok(x.transpose())
}

impl StationaryBundle {
    pub fn compute(pm: &ParamModel) -> Result<Self> {
        let fr = FirstReturnBundle::compute(pm, c64(0.0, 0.0))?;
        Self::build(pm.model(), Some(pm), &fr)
    }

    pub fn values(model: &SfmModel) -> Result<Self> {
        let fr = FirstReturnBundle::values(model, c64(0.0, 0.0))?;
        Self::build(model, None, &fr)
    }

    /// Uses an already computed first-return bundle at `s = 0`.
    pub fn from_first_return(model: &SfmModel, pm: Option<&ParamModel>, fr: &FirstReturnBundle) -> Result<Self> {
        Self::build(model, pm, fr)
    }

    fn build(model: &SfmModel, pm: Option<&ParamModel>, fr: &FirstReturnBundle) -> Result<Self> {
        let drift = model.drift()?;
        let part = model.partition().clone();
        if drift >= 0.0 || part.minus.is_empty() {
            return Err(SfmError::UnstableModel { drift });
        }
        let (np, nm, nz) = (part.n_plus(), part.n_minus(), part.n_zero());
        let params = fr.params();
        let pc = Pieces::new(model, pm);
        let mz = part.minus_zero();
        let pmi = part.plus_minus();

        let t_oo = pc.t_idx(&mz, &mz);
        let t_op = pc.t_idx(&mz, &part.plus);
        let t_pm0 = pc.t_idx(&pmi, &part.zero);
        let t_00 = pc.t(PhaseClass::Zero, PhaseClass::Zero);
        let n_inv = t_oo.scale_re(-1.0).inv()?;
        let to_zero = &t_pm0 * &t_00.scale_re(-1.0).inv()?;

        // fixed-point operator of ξ
        let m_op = &(&n_inv * &t_op).sub_block(0, nm, 0, np) * &fr.psi;
        let i_minus_m = CMat::identity(nm, nm) - &m_op.v;
        let xi_v = solve_constrained(&i_minus_m, &CMat::zeros(1, nm), c64(1.0, 0.0))?;
        let mut dxi = BlockJacobian::zeros(1, nm, params);
        for k in 0..params {
            let rhs = &xi_v * m_op.d.block(k);
            dxi.set_block(k, &solve_constrained(&i_minus_m, &rhs, c64(0.0, 0.0))?)?;
        }
        let xi = Diff::new(xi_v, dxi);
        let xi_pad = Diff::hstack(&[&xi, &Diff::constant(CMat::zeros(1, nz), params)]);

        let k_neg_inv = fr.k.scale_re(-1.0).inv().map_err(|_| SfmError::SingularK)?;
        let cp = pc.inv_abs_rates(PhaseClass::Plus);
        let cm = pc.inv_abs_rates(PhaseClass::Minus);
        let b = Diff::hstack(&[&cp, &(&fr.psi * &cm)]);

        let ones_pm = Diff::constant(linalg::ones_col(np + nm), params);
        let ones_mz = Diff::constant(linalg::ones_col(nm + nz), params);
        let ones_z = Diff::constant(linalg::ones_col(nz), params);
        let inner = &ones_pm + &(&to_zero * &ones_z);
        let bracket = &ones_mz + &(&(&(&t_op * &k_neg_inv) * &b) * &inner);
        let z = &(&xi_pad * &n_inv) * &bracket;
        let alpha = z.inv()?;
        let p = &alpha * &(&xi_pad * &n_inv);
        let ptp = &p * &t_op;
        Ok(Self { partition: part, xi, alpha, p, ptp, k: fr.k.clone(), b, to_zero, drift })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn params(&self) -> usize {
        self.alpha.params()
    }

    pub fn p_minus(&self) -> Diff {
        self.p.sub_block(0, 1, 0, self.partition.n_minus())
    }

    pub fn p_zero(&self) -> Diff {
        self.p.sub_block(0, 1, self.partition.n_minus(), self.partition.n_zero())
    }

    /// Boundary masses as class vectors (the plus part is identically zero).
    pub fn boundary(&self) -> ClassVectors {
        ClassVectors {
            plus: Diff::constant(CMat::zeros(1, self.partition.n_plus()), self.params()),
            minus: self.p_minus(),
            zero: self.p_zero(),
        }
    }

    fn split(&self, pm_row: Diff) -> ClassVectors {
        let np = self.partition.n_plus();
        let nm = self.partition.n_minus();
        let zero = &pm_row * &self.to_zero;
        ClassVectors {
            plus: pm_row.sub_block(0, 1, 0, np),
            minus: pm_row.sub_block(0, 1, np, nm),
            zero,
        }
    }

    /// Level densities `π₊, π₋, π₀` at `x > 0`.
    pub fn density(&self, x: f64) -> Result<ClassVectors> {
        if !(x >= 0.0) {
            return Err(SfmError::InvalidArgument(format!("level x = {x} must be nonnegative")));
        }
        let row = &(&self.ptp * &self.k.exp(x)?) * &self.b;
        Ok(self.split(row))
    }

    /// Laplace transform in the level, `∫ e^{−vx} π(x) dx`.
    pub fn density_transform(&self, v: C64) -> Result<ClassVectors> {
        let n = self.k.v.nrows();
        let shifted = Diff::new(CMat::identity(n, n) * v - &self.k.v, -&self.k.d);
        let row = &(&self.ptp * &shifted.inv()?) * &self.b;
        Ok(self.split(row))
    }

    /// Total density mass, computed in closed form.
    pub fn density_mass(&self) -> Result<Diff> {
        Ok(self.density_transform(c64(0.0, 0.0))?.total())
    }

    /// Rightmost real part in the spectrum of `K`, the density's decay rate.
    pub fn decay_rate(&self) -> f64 {
        let (_, t) = self.k.v.clone().schur().unpack();
        (0..t.nrows()).map(|i| t[(i, i)].re).fold(f64::NEG_INFINITY, f64::max)
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

    #[test]
    fn simple_model_masses() {
        let st = StationaryBundle::compute(&simple_pm(1.0, 0.5)).unwrap();
        assert!((st.xi.v[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((st.alpha.v[(0, 0)].re - 1.0 / 6.0).abs() < 1e-14);
        let pm = st.p_minus();
        assert!((pm.v[(0, 0)].re - 1.0 / 3.0).abs() < 1e-14);
        assert!((pm.d.block(0)[(0, 0)].re - 4.0 / 9.0).abs() < 1e-12);
        assert!((pm.d.block(1)[(0, 0)].re + 8.0 / 9.0).abs() < 1e-12);
        assert!(st.xi.d.max_abs() < 1e-14);
    }

    #[test]
    fn simple_model_density() {
        let st = StationaryBundle::compute(&simple_pm(1.0, 0.5)).unwrap();
        for x in [0.1, 1.0, 4.0] {
            let d = st.density(x).unwrap();
            let exact = (1.0 / 3.0) * 0.5 * (-0.5 * x).exp();
            assert!((d.plus.v[(0, 0)].re - exact).abs() < 1e-14);
            assert!((d.minus.v[(0, 0)].re - exact).abs() < 1e-14);
            assert!((&d.plus.d - &d.minus.d).max_abs() < 1e-14);
        }
        let mass = st.density_mass().unwrap();
        assert!((mass.v[(0, 0)].re - 2.0 / 3.0).abs() < 1e-14);
        assert!((st.decay_rate() + 0.5).abs() < 1e-14);
    }

    #[test]
    fn total_mass_by_quadrature() {
        let pm = simple_pm(1.3, 0.4);
        let st = StationaryBundle::compute(&pm).unwrap();
        let xmax = 40.0 / st.decay_rate().abs();
        let (v, _) = quadrature::integrate(|x| Ok(vec![st.density(x)?.total().v[(0, 0)].re]), 0.0, xmax, 1e-12).unwrap();
        let boundary = st.p.row_sums().v[(0, 0)].re;
        assert!((boundary + v[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unstable_model_is_rejected() {
        let st = StationaryBundle::compute(&simple_pm(0.5, 1.0));
        assert!(matches!(st, Err(SfmError::UnstableModel { .. })));
    }
}
