use super::{ParamModel, PhaseClass, SfmModel};
use crate::error::{Result, SfmError};
use crate::linalg::{self, complexify, CMat, RMat, C64};
use crate::matcalc::{BlockJacobian, Diff};

/// The four blocks of the fluid generator at a transform point `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct QBlocks {
    pub s: C64,
    pub pp: CMat,
    pub pm: CMat,
    pub mm: CMat,
    pub mp: CMat,
}

impl QBlocks {
    /// Max-row-sum norm of the assembled generator.
    pub fn norm(&self) -> f64 {
        let top = linalg::hstack(&[&self.pp, &self.pm]);
        let bottom = linalg::hstack(&[&self.mp, &self.mm]);
        linalg::norm_inf(&linalg::vstack(&[&top, &bottom]))
    }

    pub fn assembled(&self) -> CMat {
        let top = linalg::hstack(&[&self.pp, &self.pm]);
        let bottom = linalg::hstack(&[&self.mp, &self.mm]);
        linalg::vstack(&[&top, &bottom])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QJacobians {
    pub pp: BlockJacobian,
    pub pm: BlockJacobian,
    pub mm: BlockJacobian,
    pub mp: BlockJacobian,
}

impl QJacobians {
    pub fn zeros_like(q: &QBlocks, params: usize) -> Self {
        let z = |m: &CMat| BlockJacobian::zeros(m.nrows(), m.ncols(), params);
        Self { pp: z(&q.pp), pm: z(&q.pm), mm: z(&q.mm), mp: z(&q.mp) }
    }
}

/// Q blocks paired with their jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct QDiff {
    pub s: C64,
    pub pp: Diff,
    pub pm: Diff,
    pub mm: Diff,
    pub mp: Diff,
}

impl QDiff {
    pub fn values(&self) -> QBlocks {
        QBlocks {
            s: self.s,
            pp: self.pp.v.clone(),
            pm: self.pm.v.clone(),
            mm: self.mm.v.clone(),
            mp: self.mp.v.clone(),
        }
    }

    pub fn jacobians(&self) -> QJacobians {
        QJacobians {
            pp: self.pp.d.clone(),
            pm: self.pm.d.clone(),
            mm: self.mm.d.clone(),
            mp: self.mp.d.clone(),
        }
    }
}

pub(crate) struct Pieces<'a> {
    model: &'a SfmModel,
    dt: Vec<RMat>,
    dc: Vec<Vec<f64>>,
}

impl<'a> Pieces<'a> {
    pub(crate) fn new(model: &'a SfmModel, pm: Option<&ParamModel>) -> Self {
        match pm {
            Some(pm) => Self {
                model,
                dt: (0..pm.params()).map(|k| pm.dt(k).clone()).collect(),
                dc: (0..pm.params()).map(|k| pm.dc(k).iter().copied().collect()).collect(),
            },
            None => Self { model, dt: vec![], dc: vec![] },
        }
    }

    /// A generator block over explicit index lists, with its jacobian.
    pub(crate) fn t_idx(&self, rows: &[usize], cols: &[usize]) -> Diff {
        let v = complexify(&self.model.block_idx(rows, cols));
        let blocks = self
            .dt
            .iter()
            .map(|d| complexify(&linalg::select(d, rows, cols)))
            .collect();
        Diff::new(v, BlockJacobian::from_blocks(rows.len(), cols.len(), blocks).expect("block shapes"))
    }

    pub(crate) fn t(&self, rows: PhaseClass, cols: PhaseClass) -> Diff {
        let p = self.model.partition();
        self.t_idx(p.indices(rows), p.indices(cols))
    }

    /// `diag(1/|c_i|)` over a class, with its jacobian.
    pub(crate) fn inv_abs_rates(&self, class: PhaseClass) -> Diff {
        let idx = self.model.partition().indices(class);
        let c = self.model.rates();
        let v = linalg::diag(idx.iter().map(|&i| C64::new(1.0 / c[i].abs(), 0.0)));
        let blocks = self
            .dc
            .iter()
            .map(|dc| {
                // d(1/|c|) = -sign(c) dc / c²
                linalg::diag(idx.iter().map(|&i| C64::new(-c[i].signum() * dc[i] / (c[i] * c[i]), 0.0)))
            })
            .collect();
        Diff::new(v, BlockJacobian::from_blocks(idx.len(), idx.len(), blocks).expect("diag shapes"))
    }
}

fn shifted(d: &Diff, s: C64) -> Diff {
    let n = d.v.nrows();
    Diff::new(&d.v - CMat::identity(n, n) * s, d.d.clone())
}

fn build(model: &SfmModel, pm: Option<&ParamModel>, s: C64) -> Result<QDiff> {
    use PhaseClass::{Minus as M, Plus as P, Zero as Z};
    let pc = Pieces::new(model, pm);
    let w = shifted(&pc.t(Z, Z), s).inv().map_err(|_| SfmError::SingularTabooBlock)?;
    let t0p = pc.t(Z, P);
    let t0m = pc.t(Z, M);
    let wp = &w * &t0p;
    let wm = &w * &t0m;
    let cp = pc.inv_abs_rates(P);
    let cm = pc.inv_abs_rates(M);

    let pp = &cp * &(&shifted(&pc.t(P, P), s) - &(&pc.t(P, Z) * &wp));
    let pmq = &cp * &(&pc.t(P, M) - &(&pc.t(P, Z) * &wm));
    let mm = &cm * &(&shifted(&pc.t(M, M), s) - &(&pc.t(M, Z) * &wm));
    let mp = &cm * &(&pc.t(M, P) - &(&pc.t(M, Z) * &wp));
    let out = QDiff { s, pp, pm: pmq, mm, mp };
    for d in [&out.pp, &out.pm, &out.mm, &out.mp] {
        if !linalg::is_finite(&d.v) || !linalg::is_finite(d.d.data()) {
            return Err(SfmError::NonFinite);
        }
    }
    Ok(out)
}

pub fn fluid_generator(model: &SfmModel, s: C64) -> Result<QBlocks> {
    Ok(build(model, None, s)?.values())
}

pub fn fluid_generator_diff(pm: &ParamModel, s: C64) -> Result<QDiff> {
    build(pm.model(), Some(pm), s)
}

pub fn fluid_generator_jacobian(pm: &ParamModel, s: C64) -> Result<QJacobians> {
    Ok(fluid_generator_diff(pm, s)?.jacobians())
}
