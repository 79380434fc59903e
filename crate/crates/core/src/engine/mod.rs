//! AR(1) whitening, penalized least squares and REML smoothing-parameter
//! selection.

mod optimize;
mod pls;
mod reml;
mod whiten;

use nalgebra::{DMatrix, DVector};

use crate::basis::{assemble_design_with_cap, DesignBlocks, DEFAULT_TENSOR_CAP};
use crate::dataio::{build_series_index, Dataset, SeriesIndex};
use crate::error::{GammError, Result};
use crate::formula::BoundSpec;

pub use optimize::{
    optimize_lambdas, OptimizerReport, OptimizerSettings, StartOutcome, LOG_LAMBDA_MAX,
    LOG_LAMBDA_MIN,
};
pub use pls::{fit_pls, PlsFit, PlsProblem, SlotPenalty};
pub use reml::{PenaltyDeterminant, Reml, RemlEval};
pub use whiten::{log_det_whitening, whiten, whiten_vector, WhitenedSystem};

/// Largest number of smoothing parameters fitted by default.
pub const DEFAULT_MAX_SLOTS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub optimizer: OptimizerSettings,
    /// Skip REML and use these smoothing parameters.
    pub fixed_lambdas: Option<Vec<f64>>,
    pub max_slots: usize,
    pub tensor_cap: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            optimizer: OptimizerSettings::default(),
            fixed_lambdas: None,
            max_slots: DEFAULT_MAX_SLOTS,
            tensor_cap: DEFAULT_TENSOR_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermEdf {
    pub label: String,
    pub edf: f64,
}

/// A fitted model. Scores are on the scale of the raw response, so fits of
/// the same rows at different ρ can be compared.
#[derive(Debug, Clone)]
pub struct FittedGamm {
    pub bound: BoundSpec,
    pub design: DesignBlocks,
    pub series: SeriesIndex,
    pub beta: DVector<f64>,
    pub v_beta: DMatrix<f64>,
    pub lambdas: Vec<f64>,
    pub sigma2: f64,
    pub rho: f64,
    /// Diagonal of `F = (X̃ᵀX̃ + S_λ)⁻¹X̃ᵀX̃`.
    pub edf_per_coef: Vec<f64>,
    /// Parametric terms (intercept first) followed by smooth blocks.
    pub edf_per_term: Vec<TermEdf>,
    pub edf_total: f64,
    pub reml_score: f64,
    pub deviance: f64,
    pub rss_whitened: f64,
    pub rss_raw: f64,
    pub response: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals_raw: Vec<f64>,
    pub residuals_whitened: Vec<f64>,
    /// `ln` of the whitening map's determinant (zero when ρ = 0).
    pub log_det_whitening: f64,
    pub optimizer: Option<OptimizerReport>,
}

impl FittedGamm {
    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn edf_of(&self, label: &str) -> Option<f64> {
        self.edf_per_term
            .iter()
            .find(|t| t.label == label)
            .map(|t| t.edf)
    }

    /// Contribution of the coefficients in `range` to the fitted values.
    pub fn contribution(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let x = self.design.x.columns(range.start, range.len());
        let b = self.beta.rows(range.start, range.len());
        (x * b).iter().copied().collect()
    }
}

/// Series structure implied by the spec: the AR start column when given,
/// otherwise a single series.
pub fn series_for(bound: &BoundSpec, data: &Dataset) -> Result<SeriesIndex> {
    match &bound.spec.ar_start_column {
        Some(name) => build_series_index(data, name),
        None => Ok(SeriesIndex::single(data.n_rows())),
    }
}

pub fn fit(bound: &BoundSpec, data: &Dataset) -> Result<FittedGamm> {
    fit_with(bound, data, &FitOptions::default())
}

pub fn fit_with(bound: &BoundSpec, data: &Dataset, options: &FitOptions) -> Result<FittedGamm> {
    let design = assemble_design_with_cap(bound, data, options.tensor_cap)?;
    if design.n_lambda_slots > options.max_slots {
        return Err(GammError::InvalidArgument(format!(
            "model has {} smoothing parameters; at most {} are supported",
            design.n_lambda_slots, options.max_slots
        )));
    }
    let series = series_for(bound, data)?;
    let rho = bound.spec.rho;
    let y = data
        .columns()
        .get(bound.response)
        .and_then(|c| c.as_numeric())
        .ok_or_else(|| GammError::Data("response column is not numeric".into()))?
        .to_vec();
    let system = whiten(&design.x, &y, &series, rho)?;
    let log_det_w = log_det_whitening(&series, rho);
    let problem = PlsProblem::new(&system, &design)?;
    let reml = Reml::new(problem, design.null_dim_total, -log_det_w)?;

    let (lambdas, report) = match &options.fixed_lambdas {
        Some(l) => (l.clone(), None),
        None => {
            let r = optimize_lambdas(&reml, &options.optimizer)?;
            (r.lambdas.clone(), Some(r))
        }
    };
    let eval = reml.evaluate(&lambdas, false)?;
    let fit = &eval.fit;
    let a_inv = fit.a_inverse();
    let v_beta = eval.sigma2 * &a_inv;

    let edf_per_coef = edf_diagonal(&a_inv, &reml, &lambdas);
    let mut edf_per_term = vec![TermEdf {
        label: "(Intercept)".into(),
        edf: edf_per_coef[0],
    }];
    for (label, r) in &design.parametric.terms {
        edf_per_term.push(TermEdf {
            label: label.clone(),
            edf: edf_per_coef[r.clone()].iter().sum(),
        });
    }
    for b in &design.blocks {
        edf_per_term.push(TermEdf {
            label: b.label.clone(),
            edf: edf_per_coef[b.columns.clone()].iter().sum(),
        });
    }
    let edf_total = edf_per_coef.iter().sum();

    let fitted_vec = &design.x * &fit.beta;
    let fitted: Vec<f64> = fitted_vec.iter().copied().collect();
    let residuals_raw: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let wfit = &system.x * &fit.beta;
    let residuals_whitened: Vec<f64> = system.y.iter().zip(wfit.iter()).map(|(a, b)| a - b).collect();
    let rss_raw = residuals_raw.iter().map(|r| r * r).sum();

    Ok(FittedGamm {
        bound: bound.clone(),
        beta: fit.beta.clone(),
        v_beta,
        lambdas,
        sigma2: eval.sigma2,
        rho,
        edf_per_coef,
        edf_per_term,
        edf_total,
        reml_score: eval.score,
        deviance: fit.deviance,
        rss_whitened: fit.rss,
        rss_raw,
        response: y,
        fitted,
        residuals_raw,
        residuals_whitened,
        log_det_whitening: log_det_w,
        optimizer: report,
        design,
        series,
    })
}

/// `diag(F) = 1 − diag(A⁻¹ S_λ)`, computed block by block.
fn edf_diagonal(a_inv: &DMatrix<f64>, reml: &Reml, lambdas: &[f64]) -> Vec<f64> {
    let p = a_inv.nrows();
    let mut diag = vec![1.0; p];
    for pen in reml.problem.penalties() {
        let lam = lambdas[pen.slot];
        if lam == 0.0 {
            continue;
        }
        let r = pen.columns.clone();
        let inv = a_inv.view((r.start, r.start), (r.len(), r.len()));
        let prod = inv * &pen.matrix;
        for (i, j) in r.enumerate() {
            diag[j] -= lam * prod[(i, i)];
        }
    }
    diag
}

/// `τ` and per-coefficient edf of a whitened system at fixed λ.
pub fn edf(system: &WhitenedSystem, design: &DesignBlocks, lambdas: &[f64]) -> Result<(Vec<f64>, f64)> {
    let problem = PlsProblem::new(system, design)?;
    let reml = Reml::new(problem, design.null_dim_total, 0.0)?;
    let fit = reml.problem.solve(lambdas)?;
    let d = edf_diagonal(&fit.a_inverse(), &reml, lambdas);
    let total = d.iter().sum();
    Ok((d, total))
}

/// REML score of a whitened system at fixed λ, on the whitened scale.
pub fn reml_score(system: &WhitenedSystem, design: &DesignBlocks, lambdas: &[f64]) -> Result<f64> {
    let problem = PlsProblem::new(system, design)?;
    Reml::new(problem, design.null_dim_total, 0.0)?.score(lambdas)
}
