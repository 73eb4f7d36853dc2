use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AffineFamily, ParamModel, SfmModel};
use crate::error::{Result, SfmError};
use crate::linalg::RMat;

/// On-disk model description (TOML).
///
/// ```toml
/// phases = ["up", "down"]
/// T = [[-1.0, 1.0], [0.5, -0.5]]
/// c = [1.0, -1.0]
///
/// [[params]]
/// name = "a"
/// value = 1.0
/// dT = [[-1.0, 1.0], [0.0, 0.0]]
/// ```
///
/// `dT` and `dC` default to zero. The family is affine in the parameters
/// around the stated values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub phases: Vec<String>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub value: f64,
    #[serde(rename = "dT", default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<Vec<Vec<f64>>>,
    #[serde(rename = "dC", default, skip_serializing_if = "Option::is_none")]
    pub dc: Option<Vec<f64>>,
}

fn matrix(rows: &[Vec<f64>], m: usize, what: &str) -> Result<RMat> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(SfmError::DimensionMismatch(format!("{what} must be {m}x{m}")));
    }
    Ok(RMat::from_fn(m, m, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let f: ModelFile = toml::from_str(text).map_err(|e| SfmError::Parse(e.to_string()))?;
        let m = f.c.len();
        if !f.phases.is_empty() && f.phases.len() != m {
            return Err(SfmError::DimensionMismatch(format!("{} phase names for {m} rates", f.phases.len())));
        }
        Ok(f)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model files always serialise")
    }

    pub fn model(&self) -> Result<SfmModel> {
        SfmModel::new(matrix(&self.t, self.c.len(), "T")?, self.c.clone())
    }

    pub fn param_model(&self) -> Result<ParamModel> {
        let m = self.c.len();
        let mut dt = Vec::new();
        let mut dc = Vec::new();
        for p in &self.params {
            dt.push(match &p.dt {
                Some(rows) => matrix(rows, m, &format!("dT for `{}`", p.name))?,
                None => RMat::zeros(m, m),
            });
            let r = p.dc.clone().unwrap_or_else(|| vec![0.0; m]);
            if r.len() != m {
                return Err(SfmError::DimensionMismatch(format!("dC for `{}` must have {m} entries", p.name)));
            }
            dc.push(r);
        }
        let theta: Vec<f64> = self.params.iter().map(|p| p.value).collect();
        let fam = AffineFamily {
            names: self.params.iter().map(|p| p.name.clone()).collect(),
            theta0: theta.clone(),
            t0: matrix(&self.t, m, "T")?,
            c0: self.c.clone(),
            dt,
            dc,
        };
        ParamModel::new(Arc::new(fam), theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMPLE: &str = r#"
phases = ["up", "down"]
T = [[-1.0, 1.0], [0.5, -0.5]]
c = [1.0, -1.0]

[[params]]
name = "a"
value = 1.0
dT = [[-1.0, 1.0], [0.0, 0.0]]

[[params]]
name = "b"
value = 0.5
dT = [[0.0, 0.0], [1.0, -1.0]]
"#;

    #[test]
    fn parses_and_round_trips() {
        let f = ModelFile::parse(SIMPLE).unwrap();
        let pm = f.param_model().unwrap();
        assert_eq!(pm.params(), 2);
        assert_eq!(pm.perturbed(0, 0.5).unwrap().model().generator()[(0, 1)], 1.5);
        assert_eq!(ModelFile::parse(&f.to_toml()).unwrap(), f);
    }

    #[test]
    fn invalid_models_are_rejected() {
        let bad = SIMPLE.replace("[0.5, -0.5]]\nc", "[0.4, -0.5]]\nc");
        let f = ModelFile::parse(&bad).unwrap();
        assert!(matches!(f.model(), Err(SfmError::GeneratorRowSum { row: 1, .. })));
        assert!(matches!(ModelFile::parse("T = 3"), Err(SfmError::Parse(_))));
        let bad = SIMPLE.replace("dT = [[0.0, 0.0], [1.0, -1.0]]", "dT = [[0.0, 0.0], [1.0, -2.0]]");
        assert_eq!(
            ModelFile::parse(&bad).unwrap().param_model().unwrap_err(),
            SfmError::DerivativeRowSum { param: 1 }
        );
    }
}
