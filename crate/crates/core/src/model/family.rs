use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::{norm_inf, Partition, SfmModel, ROW_SUM_TOL};
use crate::error::{Result, SfmError};
use crate::linalg::{RMat, RVec};

/// A smooth family of models indexed by a real parameter vector.
pub trait ModelFamily: Send + Sync + fmt::Debug {
    fn param_names(&self) -> Vec<String>;
    fn generator(&self, theta: &[f64]) -> RMat;
    fn rates(&self, theta: &[f64]) -> Vec<f64>;
    fn d_generator(&self, theta: &[f64], k: usize) -> RMat;
    fn d_rates(&self, theta: &[f64], k: usize) -> Vec<f64>;
}

/// `T(θ) = T₀ + Σ (θ_k − θ₀_k) dT_k`, and likewise for the rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFamily {
    pub names: Vec<String>,
    pub theta0: Vec<f64>,
    pub t0: RMat,
    pub c0: Vec<f64>,
    pub dt: Vec<RMat>,
    pub dc: Vec<Vec<f64>>,
}

impl ModelFamily for AffineFamily {
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn generator(&self, theta: &[f64]) -> RMat {
        let mut t = self.t0.clone();
        for (k, d) in self.dt.iter().enumerate() {
            t += d * (theta[k] - self.theta0[k]);
        }
        t
    }

    fn rates(&self, theta: &[f64]) -> Vec<f64> {
        let mut c = self.c0.clone();
        for (k, d) in self.dc.iter().enumerate() {
            for (ci, di) in c.iter_mut().zip(d) {
                *ci += di * (theta[k] - self.theta0[k]);
            }
        }
        c
    }

    fn d_generator(&self, _theta: &[f64], k: usize) -> RMat {
        self.dt[k].clone()
    }

    fn d_rates(&self, _theta: &[f64], k: usize) -> Vec<f64> {
        self.dc[k].clone()
    }
}

type MatFn = dyn Fn(&[f64]) -> RMat + Send + Sync;
type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type DMatFn = dyn Fn(&[f64], usize) -> RMat + Send + Sync;
type DVecFn = dyn Fn(&[f64], usize) -> Vec<f64> + Send + Sync;

/// A family given by closures.
#[derive(Clone)]
pub struct FnFamily {
    pub names: Vec<String>,
    pub generator: Arc<MatFn>,
    pub rates: Arc<VecFn>,
    pub d_generator: Arc<DMatFn>,
    pub d_rates: Arc<DVecFn>,
}

impl fmt::Debug for FnFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFamily").field("names", &self.names).finish_non_exhaustive()
    }
}

impl ModelFamily for FnFamily {
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
    fn generator(&self, theta: &[f64]) -> RMat {
        (self.generator)(theta)
    }
    fn rates(&self, theta: &[f64]) -> Vec<f64> {
        (self.rates)(theta)
    }
    fn d_generator(&self, theta: &[f64], k: usize) -> RMat {
        (self.d_generator)(theta, k)
    }
    fn d_rates(&self, theta: &[f64], k: usize) -> Vec<f64> {
        (self.d_rates)(theta, k)
    }
}

/// A model family evaluated at a parameter point, with its derivatives.
#[derive(Debug, Clone)]
pub struct ParamModel {
    family: Arc<dyn ModelFamily>,
    theta: Vec<f64>,
    model: SfmModel,
    dt: Vec<RMat>,
    dc: Vec<RVec>,
}

impl ParamModel {
    pub fn new(family: Arc<dyn ModelFamily>, theta: Vec<f64>) -> Result<Self> {
        let p = family.param_names().len();
        if theta.len() != p {
            return Err(SfmError::ParameterCount { expected: p, got: theta.len() });
        }
        let model = SfmModel::new(family.generator(&theta), family.rates(&theta))?;
        let m = model.phase_count();
        let scale = norm_inf(model.generator()).max(1.0);
        let mut dt = Vec::with_capacity(p);
        let mut dc = Vec::with_capacity(p);
        for k in 0..p {
            let d = family.d_generator(&theta, k);
            let r = family.d_rates(&theta, k);
            if d.shape() != (m, m) || r.len() != m {
                return Err(SfmError::DimensionMismatch(format!("derivative for parameter {k} has the wrong shape")));
            }
            if d.row_iter().any(|row| row.sum().abs() > ROW_SUM_TOL * scale.max(norm_inf(&d))) {
                return Err(SfmError::DerivativeRowSum { param: k });
            }
            if let Some(i) = model.partition().zero.iter().copied().find(|&i| r[i] != 0.0) {
                return Err(SfmError::ZeroRateDerivative { param: k, phase: i });
            }
            dt.push(d);
            dc.push(DVector::from_vec(r));
        }
        Ok(Self { family, theta, model, dt, dc })
    }

    /// The same family at another parameter point; the phase partition must not change.
    pub fn at(&self, theta: Vec<f64>) -> Result<Self> {
        let next = Self::new(self.family.clone(), theta)?;
        if next.model.partition() != self.model.partition() {
            return Err(SfmError::PartitionChanged);
        }
        Ok(next)
    }

    pub fn perturbed(&self, k: usize, h: f64) -> Result<Self> {
        let mut theta = self.theta.clone();
        theta[k] += h;
        self.at(theta)
    }

    pub fn model(&self) -> &SfmModel {
        &self.model
    }

    pub fn partition(&self) -> &Partition {
        self.model.partition()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn params(&self) -> usize {
        self.theta.len()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.family.param_names()
    }

    pub fn family(&self) -> &Arc<dyn ModelFamily> {
        &self.family
    }

    pub fn dt(&self, k: usize) -> &RMat {
        &self.dt[k]
    }

    pub fn dc(&self, k: usize) -> &RVec {
        &self.dc[k]
    }

    /// Largest relative gap between the declared derivatives and central
    /// differences of the family at step `h`.
    pub fn self_test(&self, h: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for k in 0..self.params() {
            let mut tp = self.theta.clone();
            let mut tm = self.theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let fd_t = (self.family.generator(&tp) - self.family.generator(&tm)) / (2.0 * h);
            let fd_c = (RVec::from_vec(self.family.rates(&tp)) - RVec::from_vec(self.family.rates(&tm))) / (2.0 * h);
            let scale = fd_t.amax().max(fd_c.amax()).max(1e-300);
            let gap = (fd_t - &self.dt[k]).amax().max((fd_c - &self.dc[k]).amax());
            worst = worst.max(gap / scale.max(1.0));
        }
        Ok(worst)
    }
}
