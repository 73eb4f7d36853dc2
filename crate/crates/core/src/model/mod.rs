//! Stochastic fluid models and their parameterised families.

mod family;
mod file;
mod fluid;

pub use family::{AffineFamily, FnFamily, ModelFamily, ParamModel};
pub use file::{ModelFile, ParamEntry};
pub(crate) use fluid::Pieces;
pub use fluid::{fluid_generator, fluid_generator_diff, fluid_generator_jacobian, QBlocks, QDiff, QJacobians};

use nalgebra::DVector;

use crate::error::{Result, SfmError};
use crate::linalg::{self, RMat, RVec};

/// Relative tolerance for generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseClass {
    Plus,
    Minus,
    Zero,
}

impl PhaseClass {
    pub fn of_rate(c: f64) -> Self {
        if c > 0.0 {
            PhaseClass::Plus
        } else if c < 0.0 {
            PhaseClass::Minus
        } else {
            PhaseClass::Zero
        }
    }
}

/// Ordered index sets of the up, down and zero-rate phases.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    pub zero: Vec<usize>,
}

impl Partition {
    pub fn from_rates(c: &[f64]) -> Self {
        let mut p = Partition::default();
        for (i, &ci) in c.iter().enumerate() {
            match PhaseClass::of_rate(ci) {
                PhaseClass::Plus => p.plus.push(i),
                PhaseClass::Minus => p.minus.push(i),
                PhaseClass::Zero => p.zero.push(i),
            }
        }
        p
    }

    pub fn class_of(&self, phase: usize) -> Option<PhaseClass> {
        if self.plus.contains(&phase) {
            Some(PhaseClass::Plus)
        } else if self.minus.contains(&phase) {
            Some(PhaseClass::Minus)
        } else if self.zero.contains(&phase) {
            Some(PhaseClass::Zero)
        } else {
            None
        }
    }

    pub fn indices(&self, class: PhaseClass) -> &[usize] {
        match class {
            PhaseClass::Plus => &self.plus,
            PhaseClass::Minus => &self.minus,
            PhaseClass::Zero => &self.zero,
        }
    }

    /// Minus phases followed by zero phases.
    pub fn minus_zero(&self) -> Vec<usize> {
        self.minus.iter().chain(&self.zero).copied().collect()
    }

    /// Plus phases followed by minus phases.
    pub fn plus_minus(&self) -> Vec<usize> {
        self.plus.iter().chain(&self.minus).copied().collect()
    }

    pub fn n_plus(&self) -> usize {
        self.plus.len()
    }

    pub fn n_minus(&self) -> usize {
        self.minus.len()
    }

    pub fn n_zero(&self) -> usize {
        self.zero.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfmModel {
    t: RMat,
    c: RVec,
    partition: Partition,
}

impl SfmModel {
    /// Builds and validates a model, deriving the partition from the rate signs.
    pub fn new(t: RMat, c: Vec<f64>) -> Result<Self> {
        let partition = Partition::from_rates(&c);
        Self::with_partition(t, c, partition)
    }

    pub fn with_partition(t: RMat, c: Vec<f64>, partition: Partition) -> Result<Self> {
        let m = Self {
            t,
            c: DVector::from_vec(c),
            partition,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.t.nrows();
        if m == 0 || self.t.ncols() != m || self.c.len() != m {
            return Err(SfmError::DimensionMismatch(format!(
                "generator is {}x{} with {} rates",
                self.t.nrows(),
                self.t.ncols(),
                self.c.len()
            )));
        }
        if self.t.iter().chain(self.c.iter()).any(|x| !x.is_finite()) {
            return Err(SfmError::NonFinite);
        }
        let p = &self.partition;
        let mut seen = vec![0u8; m];
        for &i in p.plus.iter().chain(&p.minus).chain(&p.zero) {
            if i >= m {
                return Err(SfmError::DimensionMismatch(format!("phase index {i} out of range")));
            }
            seen[i] += 1;
        }
        if let Some(i) = seen.iter().position(|&n| n != 1) {
            return Err(SfmError::DimensionMismatch(format!(
                "phase {i} appears {} times in the partition",
                seen[i]
            )));
        }
        for i in 0..m {
            let class = p.class_of(i).expect("covered above");
            if class != PhaseClass::of_rate(self.c[i]) {
                return Err(SfmError::SignPartitionMismatch { phase: i, rate: self.c[i] });
            }
        }
        for i in 0..m {
            for j in 0..m {
                if i != j && self.t[(i, j)] < 0.0 {
                    return Err(SfmError::NegativeOffDiagonal { row: i, col: j });
                }
            }
        }
        let tol = ROW_SUM_TOL * norm_inf(&self.t).max(f64::MIN_POSITIVE);
        for i in 0..m {
            let sum: f64 = self.t.row(i).sum();
            if sum.abs() > tol {
                return Err(SfmError::GeneratorRowSum { row: i, sum });
            }
        }
        if !irreducible(&self.t) {
            return Err(SfmError::NotIrreducible);
        }
        Ok(())
    }

    pub fn phase_count(&self) -> usize {
        self.t.nrows()
    }

    pub fn generator(&self) -> &RMat {
        &self.t
    }

    pub fn rates(&self) -> &RVec {
        &self.c
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn block(&self, rows: PhaseClass, cols: PhaseClass) -> RMat {
        let p = &self.partition;
        linalg::select(&self.t, p.indices(rows), p.indices(cols))
    }

    pub fn block_idx(&self, rows: &[usize], cols: &[usize]) -> RMat {
        linalg::select(&self.t, rows, cols)
    }

    pub fn rates_of(&self, class: PhaseClass) -> Vec<f64> {
        self.partition.indices(class).iter().map(|&i| self.c[i]).collect()
    }

    /// Stationary vector of the modulating chain.
    pub fn ctmc_stationary(&self) -> Result<RVec> {
        ctmc_stationary(&self.t)
    }

    /// Long-run drift `Σ c_i ν_i`.
    pub fn drift(&self) -> Result<f64> {
        Ok(self.ctmc_stationary()?.dot(&self.c))
    }
}

pub fn norm_inf(t: &RMat) -> f64 {
    t.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn reach(t: &RMat, transpose: bool) -> bool {
    let m = t.nrows();
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..m {
            let w = if transpose { t[(j, i)] } else { t[(i, j)] };
            if i != j && w > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn irreducible(t: &RMat) -> bool {
    reach(t, false) && reach(t, true)
}

/// Solves `νT = 0`, `ν1 = 1`.
pub fn ctmc_stationary(t: &RMat) -> Result<RVec> {
    let m = t.nrows();
    let mut a = t.transpose();
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = RVec::zeros(m);
    rhs[m - 1] = 1.0;
    let lu = a.lu();
    let nu = lu.solve(&rhs).ok_or(SfmError::SingularSystem)?;
    if nu.iter().any(|x| !x.is_finite()) {
        return Err(SfmError::SingularSystem);
    }
    let resid = (t.transpose() * &nu).amax();
    if resid > 1e-10 * norm_inf(t).max(1.0) {
        return Err(SfmError::SingularSystem);
    }
    Ok(nu.map(|x| x.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn simple(a: f64, b: f64) -> SfmModel {
        SfmModel::new(RMat::from_row_slice(2, 2, &[-a, a, b, -b]), vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn simple_model_validates() {
        let m = simple(1.0, 0.5);
        assert_eq!(m.partition().plus, vec![0]);
        assert_eq!(m.partition().minus, vec![1]);
        assert!(m.partition().zero.is_empty());
    }

    #[test]
    fn sign_contradiction_is_rejected() {
        let t = RMat::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let part = Partition { plus: vec![0], minus: vec![1], zero: vec![] };
        assert!(matches!(
            SfmModel::with_partition(t, vec![1.0, 1.0], part),
            Err(SfmError::SignPartitionMismatch { phase: 1, .. })
        ));
    }

    #[test]
    fn bad_row_sum_is_rejected() {
        let t = RMat::from_row_slice(2, 2, &[-1.0, 1.0, 0.9, -1.0]);
        assert!(matches!(SfmModel::new(t, vec![1.0, -1.0]), Err(SfmError::GeneratorRowSum { row: 1, .. })));
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let t = RMat::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 0.5, 0.5, -1.0]);
        assert_eq!(SfmModel::new(t, vec![1.0, -1.0, 0.0]), Err(SfmError::NotIrreducible));
    }

    #[test]
    fn stationary_and_drift() {
        let m = simple(1.0, 0.5);
        let nu = m.ctmc_stationary().unwrap();
        assert!((nu[0] - 1.0 / 3.0).abs() < 1e-15 && (nu[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.drift().unwrap() + 1.0 / 3.0).abs() < 1e-15);

        let sym = SfmModel::new(RMat::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]), vec![0.0, 0.0]).unwrap();
        let nu = sym.ctmc_stationary().unwrap();
        assert!((nu[0] - 0.5).abs() < 1e-15);
        assert_eq!(sym.drift().unwrap(), 0.0);
    }

    #[test]
    fn blocks_reassemble_the_generator() {
        let t = RMat::from_row_slice(4, 4, &[
            -3.0, 1.0, 1.0, 1.0,
            2.0, -4.0, 1.0, 1.0,
            0.5, 0.5, -2.0, 1.0,
            1.0, 2.0, 3.0, -6.0,
        ]);
        let m = SfmModel::new(t.clone(), vec![0.0, -1.0, 2.0, -0.5]).unwrap();
        let mut rebuilt = RMat::zeros(4, 4);
        for rc in [PhaseClass::Plus, PhaseClass::Minus, PhaseClass::Zero] {
            for cc in [PhaseClass::Plus, PhaseClass::Minus, PhaseClass::Zero] {
                let b = m.block(rc, cc);
                for (bi, &i) in m.partition().indices(rc).iter().enumerate() {
                    for (bj, &j) in m.partition().indices(cc).iter().enumerate() {
                        rebuilt[(i, j)] = b[(bi, bj)];
                    }
                }
            }
        }
        assert_eq!(rebuilt, t);
    }
}
