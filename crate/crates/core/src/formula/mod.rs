//! Model formulae: `response ~ term + term ...` with `s()` and `te()` smooths.
//!
//! The accepted language is deliberately small: `+`-separated main effects,
//! `s(...)` / `te(...)` with the keyword options `by`, `bs` (`"fs"` or `"re"`),
//! `k` and `m`, and the literal `1` for an intercept-only model.

mod bind;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GammError, Result};

pub use bind::{validate_against, BoundBy, BoundParametric, BoundSmooth, BoundSpec, ParamKind};
pub use parser::parse_formula;

pub const DEFAULT_TPRS_K: usize = 10;
pub const DEFAULT_TENSOR_K: usize = 5;
pub const DEFAULT_FS_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothKind {
    Tprs,
    Tensor,
    FactorSmooth,
    RandomEffect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothTerm {
    pub kind: SmoothKind,
    pub covariates: Vec<String>,
    pub by_var: Option<String>,
    /// One entry per marginal for tensors, one entry for `s()`/`fs`, empty for `re`.
    pub basis_dim_k: Vec<usize>,
    pub shrinkage_order_m: Option<u32>,
    pub label: String,
}

impl SmoothTerm {
    pub fn new(
        kind: SmoothKind,
        covariates: Vec<String>,
        by_var: Option<String>,
        k: Option<usize>,
        m: Option<u32>,
    ) -> Result<Self> {
        let n_cov = covariates.len();
        let bad = |msg: String| Err(GammError::Semantic(msg));
        match kind {
            SmoothKind::Tprs if n_cov != 1 => {
                return bad(format!(
                    "s() without bs takes exactly one covariate, got {n_cov}"
                ))
            }
            SmoothKind::Tensor if n_cov < 2 => {
                return bad(format!("te() needs at least two covariates, got {n_cov}"))
            }
            SmoothKind::FactorSmooth if n_cov != 2 => {
                return bad(format!(
                    "bs=\"fs\" needs one numeric covariate and one factor, got {n_cov} columns"
                ))
            }
            SmoothKind::RandomEffect if !(1..=2).contains(&n_cov) => {
                return bad(format!("bs=\"re\" takes one or two columns, got {n_cov}"))
            }
            _ => {}
        }
        if m.is_some() && kind != SmoothKind::FactorSmooth {
            return bad("m= is only meaningful for factor smooths (bs=\"fs\")".into());
        }
        if by_var.is_some() && matches!(kind, SmoothKind::FactorSmooth | SmoothKind::RandomEffect)
        {
            return bad("by= is not supported for bs=\"fs\" or bs=\"re\" smooths".into());
        }
        if kind == SmoothKind::RandomEffect && k.is_some() {
            return bad("k= is not meaningful for bs=\"re\" smooths".into());
        }
        if let Some(m) = m {
            if !(1..=2).contains(&m) {
                return bad(format!("m={m} not supported; use 1 or 2"));
            }
        }
        let basis_dim_k = match kind {
            SmoothKind::Tprs => vec![k.unwrap_or(DEFAULT_TPRS_K)],
            SmoothKind::Tensor => vec![k.unwrap_or(DEFAULT_TENSOR_K); n_cov],
            SmoothKind::FactorSmooth => vec![k.unwrap_or(DEFAULT_FS_K)],
            SmoothKind::RandomEffect => vec![],
        };
        if matches!(kind, SmoothKind::Tprs | SmoothKind::Tensor | SmoothKind::FactorSmooth)
            && basis_dim_k.iter().any(|&k| k < 3)
        {
            return bad("basis dimension k must be at least 3".into());
        }
        for (i, c) in covariates.iter().enumerate() {
            if covariates[..i].contains(c) {
                return bad(format!("covariate `{c}` repeated within one smooth"));
            }
        }
        if let Some(by) = &by_var {
            if covariates.contains(by) {
                return bad(format!("by variable `{by}` is also a covariate"));
            }
        }
        let label = term_label(kind, &covariates, by_var.as_deref());
        Ok(SmoothTerm {
            kind,
            covariates,
            by_var,
            basis_dim_k,
            shrinkage_order_m: m,
            label,
        })
    }

    /// Every column this term reads, by-variable included.
    pub fn referenced_columns(&self) -> impl Iterator<Item = &str> {
        self.covariates
            .iter()
            .map(String::as_str)
            .chain(self.by_var.as_deref())
    }
}

fn term_label(kind: SmoothKind, covariates: &[String], by: Option<&str>) -> String {
    let covs = covariates.join(",");
    let base = match kind {
        SmoothKind::Tprs => format!("s({covs}"),
        SmoothKind::Tensor => format!("te({covs}"),
        SmoothKind::FactorSmooth => format!("fs({covs}"),
        SmoothKind::RandomEffect => format!("re({covs}"),
    };
    match by {
        Some(b) => format!("{base},by={b})"),
        None => format!("{base})"),
    }
}

/// Parsed model formula plus the AR(1) fit options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub parametric_terms: Vec<String>,
    pub smooth_terms: Vec<SmoothTerm>,
    pub rho: f64,
    pub ar_start_column: Option<String>,
    pub family: Family,
}

impl ModelSpec {
    /// Attaches AR(1) options. `rho > 0` requires a series-start column.
    pub fn with_ar(mut self, rho: f64, ar_start_column: Option<String>) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) || !rho.is_finite() {
            return Err(GammError::InvalidArgument(format!(
                "rho must lie in [0, 1), got {rho}"
            )));
        }
        if rho > 0.0 && ar_start_column.is_none() {
            return Err(GammError::Semantic(
                "rho > 0 requires an AR start column".into(),
            ));
        }
        self.rho = rho;
        self.ar_start_column = ar_start_column;
        Ok(self)
    }

    /// Labels of all terms in source order, parametric first.
    pub fn term_labels(&self) -> Vec<String> {
        self.parametric_terms
            .iter()
            .cloned()
            .chain(self.smooth_terms.iter().map(|s| s.label.clone()))
            .collect()
    }

    pub(crate) fn check_invariants(&self) -> Result<()> {
        let labels = self.term_labels();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(GammError::Semantic(format!("duplicate term `{l}`")));
            }
        }
        let response_used = self.parametric_terms.contains(&self.response)
            || self
                .smooth_terms
                .iter()
                .any(|s| s.referenced_columns().any(|c| c == self.response));
        if response_used {
            return Err(GammError::Semantic(format!(
                "response `{}` also appears as a predictor",
                self.response
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SmoothTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = if self.kind == SmoothKind::Tensor { "te" } else { "s" };
        write!(f, "{head}({}", self.covariates.join(", "))?;
        if let Some(by) = &self.by_var {
            write!(f, ", by={by}")?;
        }
        match self.kind {
            SmoothKind::FactorSmooth => write!(f, ", bs=\"fs\"")?,
            SmoothKind::RandomEffect => write!(f, ", bs=\"re\"")?,
            _ => {}
        }
        if let Some(m) = self.shrinkage_order_m {
            write!(f, ", m={m}")?;
        }
        if let Some(&k) = self.basis_dim_k.first() {
            write!(f, ", k={k}")?;
        }
        write!(f, ")")
    }
}

/// Canonical text that re-parses to an identical term list.
impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ ", self.response)?;
        let terms: Vec<String> = self
            .parametric_terms
            .iter()
            .cloned()
            .chain(self.smooth_terms.iter().map(ToString::to_string))
            .collect();
        if terms.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_encode_kind_and_by() {
        let t = SmoothTerm::new(
            SmoothKind::Tprs,
            vec!["Time".into()],
            Some("Order".into()),
            None,
            None,
        )
        .unwrap();
        assert_eq!(t.label, "s(Time,by=Order)");
        assert_eq!(t.basis_dim_k, vec![10]);
        let fs = SmoothTerm::new(
            SmoothKind::FactorSmooth,
            vec!["Trial".into(), "Subject".into()],
            None,
            Some(5),
            Some(1),
        )
        .unwrap();
        assert_eq!(fs.label, "fs(Trial,Subject)");
    }

    #[test]
    fn contradictory_options_rejected() {
        assert!(SmoothTerm::new(SmoothKind::Tprs, vec!["x".into()], None, None, Some(1)).is_err());
        assert!(SmoothTerm::new(SmoothKind::Tprs, vec!["x".into()], None, Some(2), None).is_err());
        assert!(
            SmoothTerm::new(SmoothKind::RandomEffect, vec!["g".into()], None, Some(4), None)
                .is_err()
        );
    }

    #[test]
    fn rho_requires_start_column() {
        let spec = parse_formula("y ~ x").unwrap();
        assert!(spec.clone().with_ar(0.3, None).is_err());
        assert!(spec.clone().with_ar(1.0, Some("s".into())).is_err());
        let s = spec.with_ar(0.3, Some("s".into())).unwrap();
        assert_eq!(s.rho, 0.3);
    }
}
