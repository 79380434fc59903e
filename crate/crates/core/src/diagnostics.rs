//! Residual autocorrelation: per-series and pooled ACFs, a lag-1 guess for
//! ρ, ρ sweeps and a filter for series with persistent autocorrelation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, SeriesIndex};
use crate::engine::{fit_with, FitOptions, FittedGamm};
use crate::error::{GammError, Result};
use crate::formula::{validate_against, ModelSpec};

/// Label of the pooled ACF.
pub const POOLED: &str = "pooled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfResult {
    pub series: String,
    /// Values at lags `0..=L`.
    pub acf: Vec<f64>,
    pub n: usize,
    /// White-noise band `1.96/√n`.
    pub ci_bound: f64,
    /// `|acf| > ci_bound`, always false at lag 0.
    pub significant: Vec<bool>,
}

impl AcfResult {
    pub fn max_lag(&self) -> usize {
        self.acf.len() - 1
    }

    pub fn n_significant(&self) -> usize {
        self.significant.iter().filter(|&&s| s).count()
    }

    fn from_sums(series: String, cross: &[f64], n: usize) -> Self {
        let acf: Vec<f64> = cross.iter().map(|c| c / cross[0]).collect();
        let ci_bound = 1.96 / (n as f64).sqrt();
        let significant = acf
            .iter()
            .enumerate()
            .map(|(l, a)| l > 0 && a.abs() > ci_bound)
            .collect();
        AcfResult {
            series,
            acf,
            n,
            ci_bound,
            significant,
        }
    }
}

/// `Σ (x_t − x̄)(x_{t+l} − x̄)` for `l = 0..=L`.
fn lag_products(x: &[f64], max_lag: usize) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|l| d.iter().zip(&d[l..]).map(|(a, b)| a * b).sum())
        .collect()
}

fn check_series(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(GammError::InvalidArgument(
            "autocorrelation needs at least two values".into(),
        ));
    }
    if max_lag >= x.len() {
        return Err(GammError::InvalidArgument(format!(
            "max lag {max_lag} must be below the series length {}",
            x.len()
        )));
    }
    let sums = lag_products(x, max_lag);
    if !(sums[0] > 0.0) {
        return Err(GammError::Data(
            "autocorrelation of a constant series is undefined".into(),
        ));
    }
    Ok(sums)
}

/// Sample ACF with one overall mean and denominator `Σ (x_t − x̄)²`.
pub fn acf(x: &[f64], max_lag: usize) -> Result<AcfResult> {
    let sums = check_series(x, max_lag)?;
    Ok(AcfResult::from_sums("1".into(), &sums, x.len()))
}

/// ACFs of every series plus the pooled ACF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesAcf {
    /// Series are numbered from 1 in row order; skipped series are absent.
    pub series: Vec<AcfResult>,
    pub pooled: AcfResult,
    /// 1-based numbers of series too short or constant to analyse.
    pub skipped: Vec<usize>,
}

impl SeriesAcf {
    /// Per-series results followed by the pooled one.
    pub fn all(&self) -> impl Iterator<Item = &AcfResult> {
        self.series.iter().chain(std::iter::once(&self.pooled))
    }

    /// Series ordered by decreasing `|acf[1]|`, ties by series order.
    pub fn most_autocorrelated(&self, top: usize) -> Vec<&AcfResult> {
        let mut v: Vec<&AcfResult> = self.series.iter().collect();
        v.sort_by(|a, b| b.acf[1].abs().total_cmp(&a.acf[1].abs()));
        v.truncate(top);
        v
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| GammError::Io {
            path: "acf output".into(),
            message: e.to_string(),
        };
        w.write_record(["series", "lag", "acf", "ci", "significant"])
            .map_err(io)?;
        for r in self.all() {
            for (l, a) in r.acf.iter().enumerate() {
                w.write_record([
                    r.series.clone(),
                    l.to_string(),
                    format!("{a:.6}"),
                    format!("{:.6}", r.ci_bound),
                    r.significant[l].to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| GammError::Io {
            path: "acf output".into(),
            message: e.to_string(),
        })
    }
}

/// Per-series ACFs (each series demeaned separately) and the pooled ACF,
/// which sums the lag products of all usable series before normalising.
pub fn acf_by_series(residuals: &[f64], index: &SeriesIndex, max_lag: usize) -> Result<SeriesAcf> {
    if residuals.len() != index.n_rows() {
        return Err(GammError::InvalidArgument(format!(
            "{} residuals for a series index of {} rows",
            residuals.len(),
            index.n_rows()
        )));
    }
    let per: Vec<(usize, Result<Vec<f64>>)> = index
        .ranges()
        .into_par_iter()
        .enumerate()
        .map(|(i, r)| (i, check_series(&residuals[r], max_lag)))
        .collect();
    let mut series = Vec::new();
    let mut skipped = Vec::new();
    let mut pooled = vec![0.0; max_lag + 1];
    let mut n_pooled = 0;
    let lengths = index.series_lengths();
    for (i, sums) in per {
        match sums {
            Ok(s) => {
                for (p, v) in pooled.iter_mut().zip(&s) {
                    *p += v;
                }
                n_pooled += lengths[i];
                series.push(AcfResult::from_sums((i + 1).to_string(), &s, lengths[i]));
            }
            Err(_) => skipped.push(i + 1),
        }
    }
    if series.is_empty() {
        return Err(GammError::InvalidArgument(format!(
            "no series is longer than the max lag {max_lag} with nonzero variance"
        )));
    }
    Ok(SeriesAcf {
        series,
        pooled: AcfResult::from_sums(POOLED.into(), &pooled, n_pooled),
        skipped,
    })
}

/// Whitened-residual ACFs of a fitted model.
pub fn model_acf(model: &FittedGamm, max_lag: usize) -> Result<SeriesAcf> {
    acf_by_series(&model.residuals_whitened, &model.series, max_lag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSuggestion {
    pub rho: f64,
    pub pooled_lag1: f64,
    pub notice: Option<String>,
}

/// Pooled lag-1 autocorrelation of raw residuals, clipped to `[0, 0.99]`.
pub fn suggest_rho(raw_residuals: &[f64], index: &SeriesIndex) -> Result<RhoSuggestion> {
    let a = acf_by_series(raw_residuals, index, 1)?;
    let lag1 = a.pooled.acf[1];
    let notice = (lag1 < 0.0).then(|| {
        format!("pooled lag-1 autocorrelation is negative ({lag1:.4}); suggesting rho = 0")
    });
    Ok(RhoSuggestion {
        rho: lag1.clamp(0.0, 0.99),
        pooled_lag1: lag1,
        notice,
    })
}

pub fn suggest_rho_for(model: &FittedGamm) -> Result<RhoSuggestion> {
    suggest_rho(&model.residuals_raw, &model.series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoCandidate {
    pub rho: f64,
    /// Pooled lag-1 ACF of whitened residuals.
    pub pooled_lag1: f64,
    /// Series with any significant lag in `1..=L`.
    pub n_significant: usize,
    /// Series with a significantly negative lag-1 value.
    pub n_negative_lag1: usize,
    pub reml_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub max_lag: usize,
    pub n_series: usize,
    pub candidates: Vec<RhoCandidate>,
    /// Smallest candidate minimising `n_significant + n_negative_lag1`.
    pub recommended: Option<f64>,
    /// Candidates that could not be fitted, with the reason.
    pub failures: Vec<(f64, String)>,
}

fn candidate_from(rho: f64, model: &FittedGamm, max_lag: usize) -> Result<RhoCandidate> {
    let a = model_acf(model, max_lag)?;
    Ok(RhoCandidate {
        rho,
        pooled_lag1: a.pooled.acf[1],
        n_significant: a.series.iter().filter(|r| r.n_significant() > 0).count(),
        n_negative_lag1: a
            .series
            .iter()
            .filter(|r| r.significant[1] && r.acf[1] < 0.0)
            .count(),
        reml_score: model.reml_score,
    })
}

/// Refits the model at every candidate ρ and summarises the whitened
/// residual autocorrelation of each fit.
pub fn rho_sweep(
    spec: &ModelSpec,
    data: &Dataset,
    candidates: &[f64],
    max_lag: usize,
    options: &FitOptions,
) -> Result<RhoReport> {
    if candidates.is_empty() {
        return Err(GammError::InvalidArgument("no candidate rho values".into()));
    }
    if max_lag == 0 {
        return Err(GammError::InvalidArgument("max lag must be at least 1".into()));
    }
    if let Some(bad) = candidates.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(GammError::InvalidArgument(format!(
            "candidate rho {bad} outside [0, 1)"
        )));
    }
    let runs: Vec<(f64, Result<RhoCandidate>)> = candidates
        .par_iter()
        .map(|&rho| {
            let r = spec
                .clone()
                .with_ar(rho, spec.ar_start_column.clone())
                .and_then(|s| validate_against(&s, data))
                .and_then(|b| fit_with(&b, data, options))
                .and_then(|m| candidate_from(rho, &m, max_lag));
            (rho, r)
        })
        .collect();
    let n_series = match &spec.ar_start_column {
        Some(c) => crate::dataio::build_series_index(data, c)?.n_series(),
        None => 1,
    };
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for (rho, r) in runs {
        match r {
            Ok(c) => out.push(c),
            Err(e) => failures.push((rho, e.to_string())),
        }
    }
    let recommended = out
        .iter()
        .min_by(|a, b| {
            (a.n_significant + a.n_negative_lag1)
                .cmp(&(b.n_significant + b.n_negative_lag1))
                .then(a.rho.total_cmp(&b.rho))
        })
        .map(|c| c.rho);
    Ok(RhoReport {
        max_lag,
        n_series,
        candidates: out,
        recommended,
        failures,
    })
}

/// Row mask dropping series with at least `ceil(0.2·L)` significant lags.
pub fn persistent_event_filter(acfs: &SeriesAcf, index: &SeriesIndex) -> Vec<bool> {
    let mut mask = vec![true; index.n_rows()];
    let ranges = index.ranges();
    for r in &acfs.series {
        let threshold = (0.2 * r.max_lag() as f64).ceil() as usize;
        if r.n_significant() >= threshold.max(1) {
            let i: usize = r.series.parse::<usize>().expect("numbered series") - 1;
            mask[ranges[i].clone()].fill(false);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let a = acf(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert_eq!(a.acf[0], 1.0);
        assert!((a.acf[1] - 0.25).abs() < 1e-15);
        let b = acf(&[1.0, -1.0, 1.0, -1.0], 1).unwrap();
        assert!((b.acf[1] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(acf(&[1.0], 0).is_err());
        assert!(acf(&[1.0, 2.0], 2).is_err());
        assert!(matches!(acf(&[3.0; 5], 1), Err(GammError::Data(_))));
    }

    #[test]
    fn single_series_pooled_equals_series() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let s = acf_by_series(&x, &SeriesIndex::single(30), 5).unwrap();
        assert_eq!(s.series.len(), 1);
        assert_eq!(s.series[0].acf, s.pooled.acf);
        assert_eq!(s.series[0].significant, s.pooled.significant);
    }

    #[test]
    fn short_series_are_skipped() {
        let flags = [true, false, true, false, false, false, false];
        let idx = SeriesIndex::from_flags(&flags).unwrap();
        let x = [1.0, 2.0, 1.0, 3.0, 2.0, 5.0, 4.0];
        let s = acf_by_series(&x, &idx, 2).unwrap();
        assert_eq!(s.skipped, vec![1]);
        assert_eq!(s.series.len(), 1);
        assert!(acf_by_series(&x, &idx, 6).is_err());
    }

    #[test]
    fn negative_lag1_suggests_zero() {
        let x: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = suggest_rho(&x, &SeriesIndex::single(40)).unwrap();
        assert_eq!(s.rho, 0.0);
        assert!(s.notice.is_some());
    }

    #[test]
    fn no_persistent_series_keeps_all_rows() {
        let x: Vec<f64> = (0..60).map(|i| ((i * 37) % 17) as f64).collect();
        let idx = SeriesIndex::from_flags(&(0..60).map(|i| i % 30 == 0).collect::<Vec<_>>()).unwrap();
        let mut s = acf_by_series(&x, &idx, 5).unwrap();
        for r in &mut s.series {
            r.significant.fill(false);
        }
        assert!(persistent_event_filter(&s, &idx).iter().all(|&m| m));
    }
}
