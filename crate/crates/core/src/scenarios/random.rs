//! Random smooth model families for property and gradient testing.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SfmError};
use crate::linalg::RMat;
use crate::model::{FnFamily, ModelFamily, ParamModel};

/// Shape of the generated families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub phases: usize,
    pub params: usize,
    pub zero_phases: usize,
    /// Required drift bound, `μ ≤ −min_drift`.
    pub min_drift: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec { phases: 4, params: 2, zero_phases: 0, min_drift: 0.05 }
    }
}

/// `T_ij = base_ij·exp(w_ij·θ)` off the diagonal, `c_i = c0_i·exp(v_i·θ)`.
#[derive(Debug, Clone)]
struct ExpFamily {
    base: RMat,
    w: Vec<RMat>,
    c0: Vec<f64>,
    v: Vec<Vec<f64>>,
}

impl ExpFamily {
    fn generator(&self, theta: &[f64]) -> RMat {
        let m = self.base.nrows();
        let mut t = RMat::from_fn(m, m, |i, j| {
            if i == j {
                return 0.0;
            }
            let e: f64 = theta.iter().zip(&self.w).map(|(th, w)| th * w[(i, j)]).sum();
            self.base[(i, j)] * e.exp()
        });
        for i in 0..m {
            t[(i, i)] = -t.row(i).sum();
        }
        t
    }

    fn d_generator(&self, theta: &[f64], k: usize) -> RMat {
        let t = self.generator(theta);
        let m = t.nrows();
        let mut d = RMat::from_fn(m, m, |i, j| if i == j { 0.0 } else { t[(i, j)] * self.w[k][(i, j)] });
        for i in 0..m {
            d[(i, i)] = -d.row(i).sum();
        }
        d
    }

    fn rates(&self, theta: &[f64]) -> Vec<f64> {
        self.c0
            .iter()
            .zip(&self.v)
            .map(|(c, v)| c * theta.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().exp())
            .collect()
    }

    fn d_rates(&self, theta: &[f64], k: usize) -> Vec<f64> {
        self.rates(theta).iter().zip(&self.v).map(|(c, v)| c * v[k]).collect()
    }
}

fn into_family(f: ExpFamily, params: usize) -> Arc<dyn ModelFamily> {
    let f = Arc::new(f);
    let (f1, f2, f3, f4) = (f.clone(), f.clone(), f.clone(), f);
    Arc::new(FnFamily {
        names: (1..=params).map(|k| format!("theta{k}")).collect(),
        generator: Arc::new(move |th| f1.generator(th)),
        rates: Arc::new(move |th| f2.rates(th)),
        d_generator: Arc::new(move |th, k| f3.d_generator(th, k)),
        d_rates: Arc::new(move |th, k| f4.d_rates(th, k)),
    })
}

/// Draws a stable family and a parameter point from `seed`.
///
/// Draws are rejected until the model at the point has drift at most
/// `−min_drift`; the search is deterministic in `seed`.
pub fn stable_family(spec: RandomSpec, seed: u64) -> Result<ParamModel> {
    let m = spec.phases;
    if m < 2 || spec.zero_phases + 2 > m {
        return Err(SfmError::InvalidArgument(format!("need at least one up and one down phase, got {m} phases")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let base = RMat::from_fn(m, m, |i, j| {
            // Dense enough to stay irreducible: a ring plus random chords.
            if i == j {
                0.0
            } else if (i + 1) % m == j || rng.random_bool(0.5) {
                rng.random_range(0.2..2.0)
            } else {
                0.0
            }
        });
        let w = (0..spec.params)
            .map(|_| RMat::from_fn(m, m, |_, _| rng.random_range(-0.5..0.5)))
            .collect();
        let n_sign = m - spec.zero_phases;
        let n_plus = rng.random_range(1..n_sign);
        let c0 = (0..m)
            .map(|i| {
                if i < n_plus {
                    rng.random_range(0.3..2.0)
                } else if i < n_sign {
                    -rng.random_range(0.3..2.0)
                } else {
                    0.0
                }
            })
            .collect();
        let v = (0..m).map(|_| (0..spec.params).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let theta: Vec<f64> = (0..spec.params).map(|_| rng.random_range(-0.5..0.5)).collect();
        let fam = into_family(ExpFamily { base, w, c0, v }, spec.params);
        let Ok(pm) = ParamModel::new(fam, theta) else { continue };
        match pm.model().drift() {
            Ok(mu) if mu <= -spec.min_drift => return Ok(pm),
            _ => continue,
        }
    }
    Err(SfmError::NoConvergence { iterations: 10_000, residual: f64::NAN })
}
