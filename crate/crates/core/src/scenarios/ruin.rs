//! Ruin of a compound Poisson surplus process with phase-type claims,
//! through its fluid embedding.

use std::sync::Arc;

use crate::error::{Result, SfmError};
use crate::firstreturn::FirstReturnBundle;
use crate::linalg::{self, c64, RMat};
use crate::matcalc::Diff;
use crate::model::{AffineFamily, ModelFamily, ParamModel, SfmModel};

/// Premium rate, claim intensity and claim law `(α, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuinSpec {
    pub premium: f64,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub m: RMat,
}

impl RuinSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.alpha.len();
        if !(self.premium > 0.0 && self.lambda > 0.0) {
            return Err(SfmError::InvalidPhaseType("premium and claim intensity must be positive".into()));
        }
        if self.m.shape() != (n, n) || n == 0 {
            return Err(SfmError::InvalidPhaseType(format!("claim generator must be {n}x{n}")));
        }
        if self.alpha.iter().any(|&a| !(a >= 0.0)) || self.alpha.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(SfmError::InvalidPhaseType("initial law must be nonnegative with mass at most 1".into()));
        }
        if self.alpha.iter().sum::<f64>() <= 0.0 {
            return Err(SfmError::InvalidPhaseType("claims have no positive part".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !(self.m[(i, j)] >= 0.0) {
                    return Err(SfmError::InvalidPhaseType(format!("negative off-diagonal M[{i},{j}]")));
                }
            }
        }
        if self.exit_rates().iter().any(|&t| t < -1e-12 * linalg::max_abs_real(&self.m)) {
            return Err(SfmError::InvalidPhaseType("M has a positive row sum".into()));
        }
        if self.m.clone().lu().determinant() == 0.0 {
            return Err(SfmError::InvalidPhaseType("M is singular".into()));
        }
        Ok(())
    }

    /// `t = −M1`.
    pub fn exit_rates(&self) -> Vec<f64> {
        self.m.row_iter().map(|r| -r.sum()).collect()
    }

    pub fn mean_claim(&self) -> Result<f64> {
        let n = self.alpha.len();
        let minv = self.m.clone().try_inverse().ok_or_else(|| SfmError::InvalidPhaseType("M is singular".into()))?;
        let a = RMat::from_row_slice(1, n, &self.alpha);
        Ok(-(a * minv * RMat::from_element(n, 1, 1.0))[(0, 0)])
    }

    /// `λE[U]/c`, the probability of ruin from zero surplus.
    pub fn load_factor(&self) -> Result<f64> {
        Ok(self.lambda * self.mean_claim()? / self.premium)
    }

    /// Decay rate of the claim tail, `−max Re λ(M)`.
    pub fn claim_decay(&self) -> f64 {
        -self.m.complex_eigenvalues().iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
    }

    /// Moment generating function of a claim, for `r` below the decay rate.
    pub fn claim_mgf(&self, r: f64) -> Result<f64> {
        let n = self.alpha.len();
        let a = -&self.m - RMat::identity(n, n) * r;
        let inv = a.try_inverse().ok_or(SfmError::SingularMatrix)?;
        let t = RMat::from_column_slice(n, 1, &self.exit_rates());
        let atom = 1.0 - self.alpha.iter().sum::<f64>();
        Ok(atom + (RMat::from_row_slice(1, n, &self.alpha) * inv * t)[(0, 0)])
    }

    /// Adjustment coefficient `R > 0` solving `λ(E e^{RU} − 1) = cR`, so
    /// that `ψ(x) ≤ e^{−Rx}`.
    pub fn adjustment_coefficient(&self) -> Result<f64> {
        self.validate()?;
        if self.load_factor()? >= 1.0 {
            return Err(SfmError::NegativeLoading { drift: self.premium - self.lambda * self.mean_claim()? });
        }
        let g = |r: f64| -> Result<f64> { Ok(self.lambda * (self.claim_mgf(r)? - 1.0) - self.premium * r) };
        let rho = self.claim_decay();
        let mut hi = 0.5 * rho;
        while g(hi)? < 0.0 {
            hi = 0.5 * (hi + rho);
            if rho - hi < 1e-14 * rho {
                return Err(SfmError::NoConvergence { iterations: 0, residual: g(hi)? });
            }
        }
        let mut lo = 0.0;
        // g < 0 just above zero, g(hi) ≥ 0
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-15 * hi {
                break;
            }
            if g(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Embedded generator: phase 0 earns premium, phases `1..=N` pay out a
    /// claim at unit speed.
    pub fn embedded_generator(&self) -> RMat {
        let n = self.alpha.len();
        let mut t = RMat::zeros(n + 1, n + 1);
        t[(0, 0)] = -self.lambda * self.alpha.iter().sum::<f64>();
        for k in 0..n {
            t[(0, k + 1)] = self.lambda * self.alpha[k];
        }
        t.view_mut((1, 1), (n, n)).copy_from(&self.m);
        for (k, tk) in self.exit_rates().into_iter().enumerate() {
            t[(k + 1, 0)] = tk;
        }
        t
    }

    pub fn embedded_rates(&self) -> Vec<f64> {
        let mut c = vec![-1.0; self.alpha.len() + 1];
        c[0] = self.premium;
        c
    }

    pub fn embed(&self) -> Result<SfmModel> {
        self.validate()?;
        SfmModel::new(self.embedded_generator(), self.embedded_rates())
    }

    /// Family in which `M` moves affinely, `M(θ) = M + Σ (θ_k − θ₀_k) dM_k`.
    pub fn family(&self, names: Vec<String>, theta0: Vec<f64>, dm: Vec<RMat>) -> Result<Arc<dyn ModelFamily>> {
        self.validate()?;
        if names.len() != theta0.len() || dm.len() != theta0.len() {
            return Err(SfmError::ParameterCount { expected: names.len(), got: dm.len().min(theta0.len()) });
        }
        let n = self.alpha.len();
        let dt = dm
            .iter()
            .map(|d| {
                let mut t = RMat::zeros(n + 1, n + 1);
                t.view_mut((1, 1), (n, n)).copy_from(d);
                for k in 0..n {
                    t[(k + 1, 0)] = -d.row(k).sum();
                }
                t
            })
            .collect();
        Ok(Arc::new(AffineFamily {
            names,
            theta0,
            t0: self.embedded_generator(),
            c0: self.embedded_rates(),
            dt,
            dc: vec![vec![0.0; n + 1]; dm.len()],
        }))
    }
}

fn erlang2(theta: f64) -> RMat {
    RMat::from_row_slice(2, 2, &[-theta, theta, 0.0, -theta])
}

/// Equal mixture of Erlang(2, θ₁) and Erlang(2, θ₂) claims, `λ = 1`, `c = 4`.
pub fn erlang_mixture(theta1: f64, theta2: f64) -> RuinSpec {
    let mut m = RMat::zeros(4, 4);
    m.view_mut((0, 0), (2, 2)).copy_from(&erlang2(theta1));
    m.view_mut((2, 2), (2, 2)).copy_from(&erlang2(theta2));
    RuinSpec { premium: 4.0, lambda: 1.0, alpha: vec![0.5, 0.0, 0.5, 0.0], m }
}

pub fn erlang_mixture_model(theta1: f64, theta2: f64) -> Result<ParamModel> {
    let spec = erlang_mixture(theta1, theta2);
    let mut d1 = RMat::zeros(4, 4);
    d1.view_mut((0, 0), (2, 2)).copy_from(&erlang2(1.0));
    let mut d2 = RMat::zeros(4, 4);
    d2.view_mut((2, 2), (2, 2)).copy_from(&erlang2(1.0));
    let fam = spec.family(vec!["theta1".into(), "theta2".into()], vec![theta1, theta2], vec![d1, d2])?;
    ParamModel::new(fam, vec![theta1, theta2])
}

/// Ruin probabilities of an embedded model at one parameter point.
#[derive(Debug, Clone)]
pub struct Ruin {
    fr: FirstReturnBundle,
    drift: f64,
}

impl Ruin {
    /// The model must have a single up phase, which earns the premium.
    pub fn new(pm: &ParamModel) -> Result<Self> {
        let part = pm.partition();
        if part.plus != [0] || !part.zero.is_empty() {
            return Err(SfmError::InvalidArgument("ruin model needs phase 0 as its only up phase".into()));
        }
        let drift = pm.model().drift()?;
        if drift <= 0.0 {
            return Err(SfmError::NegativeLoading { drift });
        }
        Ok(Ruin { fr: FirstReturnBundle::compute(pm, c64(0.0, 0.0))?, drift })
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// `ψ(x) = Ψe^{Dx}1` as a 1×1 value with its jacobian.
    pub fn probability(&self, x: f64) -> Result<Diff> {
        if !(x >= 0.0) {
            return Err(SfmError::InvalidArgument(format!("surplus x = {x} must be nonnegative")));
        }
        Ok((&self.fr.psi * &self.fr.d.exp(x)?).row_sums())
    }

    /// `ψ(x)` and its gradient, real parts.
    pub fn probability_with_gradient(&self, x: f64) -> Result<(f64, Vec<f64>)> {
        let d = self.probability(x)?;
        Ok((d.v[(0, 0)].re, d.d.blocks().map(|b| b[(0, 0)].re).collect()))
    }
}
