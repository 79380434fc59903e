//! Model summaries, smooth-term tests, curves with confidence bands,
//! model comparison and random-effect coefficient analyses.

mod curves;
mod recoefs;

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::engine::FittedGamm;
use crate::error::{GammError, Result};
use crate::linalg::sorted_eigen;

pub use curves::{
    evaluate_difference, evaluate_factor_curve, evaluate_smooth, evaluate_smooth_with,
    evaluate_surface, CurveEstimate, SurfaceEstimate, Z95,
};
pub use recoefs::{coef_correlation, pearson_test, random_effect_coefs, CoefCorrelation, ReRow, ReTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothRow {
    pub label: String,
    pub edf: f64,
    pub ref_df: f64,
    pub f_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFooter {
    pub adjusted_r2: f64,
    pub reml_score: f64,
    pub aic: f64,
    pub n: usize,
    pub rho: f64,
    pub edf_total: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub formula: String,
    pub parametric: Vec<ParametricRow>,
    pub smooths: Vec<SmoothRow>,
    pub footer: SummaryFooter,
}

fn residual_df(model: &FittedGamm) -> f64 {
    model.n() as f64 - model.edf_total
}

/// `1 − (RSS/(n − τ)) / var(y)` with raw residuals and divisor `n − 1` for
/// the response variance.
pub fn adjusted_r2(model: &FittedGamm) -> f64 {
    let y = &model.response;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    1.0 - (model.rss_raw / residual_df(model)) / var
}

/// `−2 log L + 2τ` with the Gaussian likelihood of the whitened residuals
/// at the fitted scale, mapped back to the raw response by the whitening
/// Jacobian.
pub fn aic(model: &FittedGamm) -> f64 {
    let n = model.n() as f64;
    let s2 = model.sigma2;
    let loglik = -0.5 * n * (2.0 * std::f64::consts::PI * s2).ln() - model.rss_whitened / (2.0 * s2)
        + model.log_det_whitening;
    -2.0 * loglik + 2.0 * model.edf_total
}

fn t_p_value(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Rank-truncated Wald statistic for one block, on the scale of the term's
/// values at the observed rows.
fn smooth_test(model: &FittedGamm, columns: Range<usize>, edf: f64) -> (f64, f64) {
    let w = columns.len();
    let xb = model.design.x.columns(columns.start, w).into_owned();
    let r_factor = if xb.nrows() >= w {
        xb.qr().r()
    } else {
        xb
    };
    let beta: DVector<f64> = model.beta.rows(columns.start, w).into_owned();
    let v: DMatrix<f64> = model
        .v_beta
        .view((columns.start, columns.start), (w, w))
        .into_owned();
    let f = &r_factor * beta;
    let mut c = &r_factor * v * r_factor.transpose();
    c = 0.5 * (&c + c.transpose());
    let (values, vectors) = sorted_eigen(&c);
    let r = ((edf - 1e-9).ceil().max(1.0) as usize).min(w);
    let max = values.first().copied().unwrap_or(0.0);
    let mut stat = 0.0;
    let mut used = 0;
    for i in 0..r.min(values.len()) {
        if values[i] <= 1e-12 * max || values[i] <= 0.0 {
            break;
        }
        let proj = vectors.column(i).dot(&f);
        stat += proj * proj / values[i];
        used += 1;
    }
    if used == 0 {
        return (0.0, 1.0);
    }
    let stat = stat / used as f64;
    let dist = FisherSnedecor::new(used as f64, residual_df(model)).expect("positive df");
    (stat, (1.0 - dist.cdf(stat)).clamp(0.0, 1.0))
}

pub fn summarize(model: &FittedGamm) -> SummaryTable {
    let df = residual_df(model);
    let parametric = model
        .design
        .parametric
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = model.beta[j];
            let std_error = model.v_beta[(j, j)].max(0.0).sqrt();
            let t_value = estimate / std_error;
            ParametricRow {
                name: name.clone(),
                estimate,
                std_error,
                t_value,
                p_value: t_p_value(t_value, df),
            }
        })
        .collect();
    let smooths = model
        .design
        .blocks
        .iter()
        .filter(|b| !b.penalties.is_empty())
        .map(|b| {
            let edf = model.edf_of(&b.label).unwrap_or(0.0);
            let (f_value, p_value) = smooth_test(model, b.columns.clone(), edf);
            SmoothRow {
                label: b.label.clone(),
                edf,
                ref_df: b.width() as f64,
                f_value,
                p_value,
            }
        })
        .collect();
    SummaryTable {
        formula: model.bound.spec.to_string(),
        parametric,
        smooths,
        footer: SummaryFooter {
            adjusted_r2: adjusted_r2(model),
            reml_score: model.reml_score,
            aic: aic(model),
            n: model.n(),
            rho: model.rho,
            edf_total: model.edf_total,
            scale: model.sigma2,
        },
    }
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        "< 0.0001".into()
    } else {
        format!("{p:.4}")
    }
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            let pad = w - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(header.iter().map(|h| h.to_string()).collect()));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.clone()));
    }
}

impl SummaryTable {
    /// Two-panel text layout: parametric coefficients, then smooth terms,
    /// then the fit statistics.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Formula: {}", self.formula);
        let _ = writeln!(out);
        let _ = writeln!(out, "A. parametric coefficients");
        let rows: Vec<Vec<String>> = self
            .parametric
            .iter()
            .map(|r| {
                vec![
                    r.name.clone(),
                    format!("{:.4}", r.estimate),
                    format!("{:.4}", r.std_error),
                    format!("{:.4}", r.t_value),
                    fmt_p(r.p_value),
                ]
            })
            .collect();
        table(&mut out, &["", "Estimate", "Std. Error", "t-value", "p-value"], &rows);
        let _ = writeln!(out);
        let _ = writeln!(out, "B. smooth terms");
        let rows: Vec<Vec<String>> = self
            .smooths
            .iter()
            .map(|r| {
                vec![
                    r.label.clone(),
                    format!("{:.4}", r.edf),
                    format!("{:.4}", r.ref_df),
                    format!("{:.4}", r.f_value),
                    fmt_p(r.p_value),
                ]
            })
            .collect();
        table(&mut out, &["", "edf", "Ref.df", "F-value", "p-value"], &rows);
        let _ = writeln!(out);
        let f = &self.footer;
        let _ = writeln!(
            out,
            "R-sq.(adj) = {:.4}   REML = {:.4}   AIC = {:.4}",
            f.adjusted_r2, f.reml_score, f.aic
        );
        let _ = writeln!(
            out,
            "n = {}   edf = {:.4}   scale = {:.6}   rho = {}",
            f.n, f.edf_total, f.scale, f.rho
        );
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub id: String,
    pub reml_score: f64,
    pub aic: f64,
    pub adjusted_r2: f64,
    pub edf_total: f64,
    pub rho: f64,
    /// Differences against the first model.
    pub delta_reml: f64,
    pub delta_aic: f64,
    pub delta_adjusted_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Reasons the models may not be comparable.
    pub notes: Vec<String>,
}

/// Side-by-side fit statistics for models of the same rows.
pub fn compare(models: &[(&str, &FittedGamm)]) -> Result<Comparison> {
    let Some((_, first)) = models.first() else {
        return Err(GammError::InvalidArgument("no models to compare".into()));
    };
    let mut notes = Vec::new();
    for (id, m) in &models[1..] {
        if m.n() != first.n() {
            return Err(GammError::InvalidArgument(format!(
                "model `{id}` has {} rows, the first has {}",
                m.n(),
                first.n()
            )));
        }
        if m.response != first.response {
            notes.push(format!("model `{id}` was fitted to a different response"));
        }
        if m.series != first.series {
            notes.push(format!("model `{id}` uses a different series structure"));
        }
    }
    let base = (first.reml_score, aic(first), adjusted_r2(first));
    let rows = models
        .iter()
        .map(|(id, m)| {
            let (r, a, adj) = (m.reml_score, aic(m), adjusted_r2(m));
            ComparisonRow {
                id: id.to_string(),
                reml_score: r,
                aic: a,
                adjusted_r2: adj,
                edf_total: m.edf_total,
                rho: m.rho,
                delta_reml: r - base.0,
                delta_aic: a - base.1,
                delta_adjusted_r2: adj - base.2,
            }
        })
        .collect();
    Ok(Comparison { rows, notes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_formatting() {
        assert_eq!(fmt_p(0.5), "0.5000");
        assert_eq!(fmt_p(1e-7), "< 0.0001");
    }

    #[test]
    fn two_sided_t() {
        assert!((t_p_value(0.0, 10.0) - 1.0).abs() < 1e-12);
        assert!((t_p_value(2.228138851986, 10.0) - 0.05).abs() < 1e-6);
    }
}
