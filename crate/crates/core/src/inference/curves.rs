use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BlockBasis, TermBlock};
use crate::engine::FittedGamm;
use crate::error::{GammError, Result};
use crate::formula::SmoothKind;

/// Normal quantile for two-sided 95% bands.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub term: String,
    pub covariate: String,
    /// Level of the by-factor or the factor-smooth curve, when there is one.
    pub level: Option<String>,
    pub grid: Vec<f64>,
    pub fit: Vec<f64>,
    pub se: Vec<f64>,
    /// Set for the reference level of a difference smooth, whose curve is
    /// zero by construction.
    pub reference: bool,
    /// Fraction of grid points whose 95% band covers zero (difference curves).
    pub zero_containment: Option<f64>,
}

fn io_err(e: impl std::fmt::Display) -> GammError {
    GammError::Io {
        path: "curve output".into(),
        message: e.to_string(),
    }
}

impl CurveEstimate {
    pub fn lower(&self) -> Vec<f64> {
        self.fit.iter().zip(&self.se).map(|(f, s)| f - Z95 * s).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.fit.iter().zip(&self.se).map(|(f, s)| f + Z95 * s).collect()
    }

    /// Fraction of grid points whose 95% band covers zero.
    pub fn zero_coverage(&self) -> f64 {
        let covered = self
            .lower()
            .iter()
            .zip(self.upper())
            .filter(|(l, u)| **l <= 0.0 && *u >= 0.0)
            .count();
        covered as f64 / self.grid.len() as f64
    }

    /// Columns `grid, fit, se, lower95, upper95`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["grid", "fit", "se", "lower95", "upper95"])
            .map_err(io_err)?;
        for (((g, f), s), (l, u)) in self
            .grid
            .iter()
            .zip(&self.fit)
            .zip(&self.se)
            .zip(self.lower().iter().zip(self.upper()))
        {
            w.write_record([g, f, s, l, &u].map(|v| format!("{v:.6}")))
                .map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEstimate {
    pub term: String,
    pub covariates: [String; 2],
    /// Long format over the outer grid, first covariate varying slowest.
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub fit: Vec<f64>,
    pub se: Vec<f64>,
}

impl SurfaceEstimate {
    /// Columns `<x>, <z>, fit, se, lower95, upper95`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            self.covariates[0].as_str(),
            self.covariates[1].as_str(),
            "fit",
            "se",
            "lower95",
            "upper95",
        ])
        .map_err(io_err)?;
        for i in 0..self.fit.len() {
            let (f, s) = (self.fit[i], self.se[i]);
            w.write_record(
                [self.x[i], self.z[i], f, s, f - Z95 * s, f + Z95 * s].map(|v| format!("{v:.6}")),
            )
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

fn find_block<'a>(model: &'a FittedGamm, label: &str) -> Result<&'a TermBlock> {
    model
        .design
        .block(label)
        .ok_or_else(|| GammError::InvalidArgument(format!("no smooth term labelled `{label}`")))
}

fn check_range(block: &TermBlock, which: usize, grid: &[f64], allow: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(GammError::InvalidArgument("empty evaluation grid".into()));
    }
    if allow {
        return Ok(());
    }
    let (lo, hi) = block.covariate_ranges()[which];
    let slack = 1e-9 * (hi - lo).abs().max(1.0);
    if let Some(v) = grid.iter().find(|&&v| v < lo - slack || v > hi + slack) {
        return Err(GammError::InvalidArgument(format!(
            "grid value {v} for `{}` lies outside the observed range [{lo}, {hi}]",
            block.covariates[which]
        )));
    }
    Ok(())
}

/// Values and pointwise standard errors of `L β` for coefficients in
/// `columns`, where `l` holds the rows of `L` over those columns.
fn predict(model: &FittedGamm, l: &DMatrix<f64>, columns: &[Range<usize>]) -> (Vec<f64>, Vec<f64>) {
    let idx: Vec<usize> = columns.iter().flat_map(|r| r.clone()).collect();
    let beta = DVector::from_iterator(idx.len(), idx.iter().map(|&j| model.beta[j]));
    let v = DMatrix::from_fn(idx.len(), idx.len(), |a, b| model.v_beta[(idx[a], idx[b])]);
    let fit = l * &beta;
    let lv = l * v;
    let se = (0..l.nrows())
        .map(|i| lv.row(i).dot(&l.row(i)).max(0.0).sqrt())
        .collect();
    (fit.iter().copied().collect(), se)
}

/// Curve of a one-covariate smooth (or one level of a by-smooth) on `grid`,
/// rejecting points outside the observed covariate range.
pub fn evaluate_smooth(model: &FittedGamm, label: &str, grid: &[f64]) -> Result<CurveEstimate> {
    evaluate_smooth_with(model, label, grid, false)
}

pub fn evaluate_smooth_with(
    model: &FittedGamm,
    label: &str,
    grid: &[f64],
    allow_extrapolation: bool,
) -> Result<CurveEstimate> {
    let block = find_block(model, label)?;
    if !matches!(block.basis, BlockBasis::Tprs(_)) {
        return Err(GammError::InvalidArgument(format!(
            "`{label}` is not a one-covariate smooth"
        )));
    }
    check_range(block, 0, grid, allow_extrapolation)?;
    let l = block.smooth_matrix(&[grid])?;
    let (fit, se) = predict(model, &l, &[block.columns.clone()]);
    Ok(CurveEstimate {
        term: label.to_string(),
        covariate: block.covariates[0].clone(),
        level: block.by_level.as_ref().map(|b| b.level.clone()),
        grid: grid.to_vec(),
        fit,
        se,
        reference: false,
        zero_containment: None,
    })
}

/// Curve of one level of a factor smooth.
pub fn evaluate_factor_curve(
    model: &FittedGamm,
    label: &str,
    level: &str,
    grid: &[f64],
    allow_extrapolation: bool,
) -> Result<CurveEstimate> {
    let block = find_block(model, label)?;
    let BlockBasis::FactorSmooth { levels, .. } = &block.basis else {
        return Err(GammError::InvalidArgument(format!(
            "`{label}` is not a factor smooth"
        )));
    };
    let code = levels.iter().position(|l| l == level).ok_or_else(|| {
        GammError::InvalidArgument(format!("`{level}` is not a level of `{label}`"))
    })?;
    check_range(block, 0, grid, allow_extrapolation)?;
    let l = block.factor_smooth_matrix(grid, code)?;
    let (fit, se) = predict(model, &l, &[block.columns.clone()]);
    Ok(CurveEstimate {
        term: label.to_string(),
        covariate: block.covariates[0].clone(),
        level: Some(level.to_string()),
        grid: grid.to_vec(),
        fit,
        se,
        reference: false,
        zero_containment: None,
    })
}

/// Difference between the curve of `level` and that of the reference level
/// of an ordered by-factor: the level's difference smooth plus, when the
/// by-factor is also a parametric term, its treatment coefficient.
pub fn evaluate_difference(
    model: &FittedGamm,
    by_term_label: &str,
    level: &str,
    grid: &[f64],
    allow_extrapolation: bool,
) -> Result<CurveEstimate> {
    let smooth = model
        .bound
        .smooths
        .iter()
        .find(|s| s.term.label == by_term_label)
        .ok_or_else(|| {
            GammError::InvalidArgument(format!("no smooth term labelled `{by_term_label}`"))
        })?;
    let Some(by) = &smooth.by else {
        return Err(GammError::InvalidArgument(format!(
            "`{by_term_label}` has no by-factor"
        )));
    };
    if !by.ordered {
        return Err(GammError::InvalidArgument(format!(
            "by-factor `{}` is unordered, so `{by_term_label}` has no difference smooths",
            by.name
        )));
    }
    if by.levels.first().map(String::as_str) == Some(level) {
        let first = model
            .design
            .blocks
            .iter()
            .find(|b| b.term_index == smooth_index(model, by_term_label))
            .ok_or_else(|| GammError::InvalidArgument(format!("`{by_term_label}` has no blocks")))?;
        check_range(first, 0, grid, allow_extrapolation)?;
        return Ok(CurveEstimate {
            term: by_term_label.to_string(),
            covariate: smooth.term.covariates[0].clone(),
            level: Some(level.to_string()),
            grid: grid.to_vec(),
            fit: vec![0.0; grid.len()],
            se: vec![0.0; grid.len()],
            reference: true,
            zero_containment: Some(1.0),
        });
    }
    let label = format!("{by_term_label}:{level}");
    let block = find_block(model, &label)?;
    if block.kind != SmoothKind::Tprs {
        return Err(GammError::InvalidArgument(format!(
            "`{label}` is not a one-covariate smooth"
        )));
    }
    check_range(block, 0, grid, allow_extrapolation)?;
    let curve = block.smooth_matrix(&[grid])?;
    let dummy = format!("{}={}", by.name, level);
    let (l, columns) = match model.design.parametric.names.iter().position(|n| *n == dummy) {
        Some(j) => {
            let mut l = DMatrix::<f64>::zeros(grid.len(), curve.ncols() + 1);
            l.columns_mut(0, curve.ncols()).copy_from(&curve);
            l.column_mut(curve.ncols()).fill(1.0);
            (l, vec![block.columns.clone(), j..j + 1])
        }
        None => (curve, vec![block.columns.clone()]),
    };
    let (fit, se) = predict(model, &l, &columns);
    let mut est = CurveEstimate {
        term: by_term_label.to_string(),
        covariate: block.covariates[0].clone(),
        level: Some(level.to_string()),
        grid: grid.to_vec(),
        fit,
        se,
        reference: false,
        zero_containment: None,
    };
    est.zero_containment = Some(est.zero_coverage());
    Ok(est)
}

fn smooth_index(model: &FittedGamm, label: &str) -> usize {
    model
        .bound
        .smooths
        .iter()
        .position(|s| s.term.label == label)
        .unwrap_or(usize::MAX)
}

/// Tensor surface on the outer product of two grids.
pub fn evaluate_surface(
    model: &FittedGamm,
    label: &str,
    grid_x: &[f64],
    grid_z: &[f64],
    allow_extrapolation: bool,
) -> Result<SurfaceEstimate> {
    let block = find_block(model, label)?;
    match &block.basis {
        BlockBasis::Tensor(m) if m.len() == 2 => {}
        _ => {
            return Err(GammError::InvalidArgument(format!(
                "`{label}` is not a two-covariate tensor smooth"
            )))
        }
    }
    check_range(block, 0, grid_x, allow_extrapolation)?;
    check_range(block, 1, grid_z, allow_extrapolation)?;
    let mut x = Vec::with_capacity(grid_x.len() * grid_z.len());
    let mut z = Vec::with_capacity(x.capacity());
    for &a in grid_x {
        for &b in grid_z {
            x.push(a);
            z.push(b);
        }
    }
    let l = block.smooth_matrix(&[&x, &z])?;
    let (fit, se) = predict(model, &l, &[block.columns.clone()]);
    Ok(SurfaceEstimate {
        term: label.to_string(),
        covariates: [block.covariates[0].clone(), block.covariates[1].clone()],
        x,
        z,
        fit,
        se,
    })
}
