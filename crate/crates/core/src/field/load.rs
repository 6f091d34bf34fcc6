//! JSON field documents.
//!
//! Either a model field
//! `{"kind": "model2d", "params": {"nu": 2}}`
//! or explicit expressions
//! `{"potential": ["-x2/2", "x1/2"], "metric": [["1", "0"], ["0", "1"]]}`.
//! Both forms accept an optional `"scalar"` expression for `V` and an optional
//! `"metric"`; the metric defaults to the identity.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{Map, Value};

use super::{
    canonical_field, CanonicalKind, Euclidean, ExprMetric, ExprPotential, ExprScalar, FieldError, MagneticTwoForm,
    MetricField, ScalarField, VectorPotential,
};
use crate::expr::Expr;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FieldDocument {
    pub kind: Option<String>,
    #[serde(default)]
    pub params: Map<String, Value>,
    pub potential: Option<Vec<String>>,
    pub metric: Option<Vec<Vec<String>>>,
    pub scalar: Option<String>,
}

#[derive(Clone)]
pub struct LoadedField {
    pub potential: Arc<dyn VectorPotential>,
    pub form: MagneticTwoForm,
    pub metric: Arc<dyn MetricField>,
    pub scalar: Option<Arc<dyn ScalarField>>,
    pub kind: Option<CanonicalKind>,
}

impl LoadedField {
    pub fn dim(&self) -> usize {
        self.form.dim()
    }
}

fn take_uint(params: &Map<String, Value>, key: &str, default: u64) -> Result<u64, FieldError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| FieldError::InvalidParams(format!("{key} must be a nonnegative integer"))),
    }
}

fn reject_unknown(params: &Map<String, Value>, allowed: &[&str]) -> Result<(), FieldError> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(FieldError::InvalidParams(format!("unknown parameter {k:?}"))),
        None => Ok(()),
    }
}

impl CanonicalKind {
    /// Model field from its name and a parameter map.
    pub fn from_name(name: &str, params: &Map<String, Value>) -> Result<Self, FieldError> {
        let kind = match name {
            "darboux" => {
                reject_unknown(params, &["dim"])?;
                CanonicalKind::Darboux {
                    dim: take_uint(params, "dim", 2)? as usize,
                }
            }
            "martinet2d" | "model2d" => {
                reject_unknown(params, &["nu"])?;
                let nu = take_uint(params, "nu", 2)?;
                let nu = u32::try_from(nu).map_err(|_| FieldError::InvalidParams("nu too large".into()))?;
                if name == "model2d" {
                    CanonicalKind::Model2d { nu }
                } else {
                    CanonicalKind::Martinet2d { nu }
                }
            }
            "nondeg4d" => {
                reject_unknown(params, &[])?;
                CanonicalKind::Nondeg4d
            }
            "roussarie4d" => {
                reject_unknown(params, &[])?;
                CanonicalKind::Roussarie4d
            }
            "constant" => {
                reject_unknown(params, &["f", "dim"])?;
                let f: Vec<f64> = params
                    .get("f")
                    .and_then(Value::as_array)
                    .ok_or_else(|| FieldError::InvalidParams("constant field needs a list \"f\"".into()))?
                    .iter()
                    .map(|v| v.as_f64().ok_or_else(|| FieldError::InvalidParams("f entries must be numbers".into())))
                    .collect::<Result<_, _>>()?;
                let dim = take_uint(params, "dim", 2 * f.len() as u64)? as usize;
                CanonicalKind::Constant { intensities: f, dim }
            }
            other => return Err(FieldError::UnknownKind(other.to_string())),
        };
        Ok(kind)
    }
}

fn parse_all(src: &[String]) -> Result<Vec<Expr>, FieldError> {
    src.iter().map(|s| Expr::parse(s).map_err(FieldError::from)).collect()
}

impl FieldDocument {
    pub fn build(&self) -> Result<LoadedField, FieldError> {
        let (potential, form, kind): (Arc<dyn VectorPotential>, MagneticTwoForm, Option<CanonicalKind>) =
            match (&self.kind, &self.potential) {
                (Some(name), None) => {
                    let kind = CanonicalKind::from_name(name, &self.params)?;
                    let (p, f) = canonical_field(&kind)?;
                    (p, f, Some(kind))
                }
                (None, Some(src)) => {
                    if !self.params.is_empty() {
                        return Err(FieldError::InvalidParams("\"params\" only applies to \"kind\" documents".into()));
                    }
                    let comps = parse_all(src)?;
                    let d = comps.len();
                    if d < 2 {
                        return Err(FieldError::InvalidParams("potential needs at least 2 components".into()));
                    }
                    if let Some(e) = comps.iter().find(|e| e.arity() > d) {
                        return Err(FieldError::InvalidParams(format!(
                            "expression {e} uses a variable beyond x{d}"
                        )));
                    }
                    let p: Arc<dyn VectorPotential> = Arc::new(ExprPotential::new(comps));
                    let f = MagneticTwoForm::from_potential(p.clone());
                    (p, f, None)
                }
                _ => {
                    return Err(FieldError::InvalidParams(
                        "a field document needs exactly one of \"kind\" or \"potential\"".into(),
                    ))
                }
            };
        let d = potential.dim();
        let metric: Arc<dyn MetricField> = match &self.metric {
            None => Arc::new(Euclidean(d)),
            Some(rows) => {
                let parsed = rows.iter().map(|r| parse_all(r)).collect::<Result<Vec<_>, _>>()?;
                let m = ExprMetric::new(parsed)?;
                if m.dim() != d {
                    return Err(FieldError::DimensionMismatch {
                        expected: d,
                        got: m.dim(),
                    });
                }
                Arc::new(m)
            }
        };
        let scalar: Option<Arc<dyn ScalarField>> = match &self.scalar {
            None => None,
            Some(s) => Some(Arc::new(ExprScalar::new(Expr::parse(s)?, d))),
        };
        Ok(LoadedField {
            potential,
            form,
            metric,
            scalar,
            kind,
        })
    }
}

pub fn parse_field(json: &str) -> Result<LoadedField, FieldError> {
    let doc: FieldDocument =
        serde_json::from_str(json).map_err(|e| FieldError::InvalidParams(format!("field document: {e}")))?;
    doc.build()
}

pub fn load_field(path: &Path) -> Result<LoadedField, FieldError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FieldError::InvalidParams(format!("cannot read {}: {e}", path.display())))?;
    parse_field(&text)
}
