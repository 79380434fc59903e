//! Design matrices and wiggliness penalties for every term class.

pub mod crs;
mod terms;
pub mod tprs;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::dataio::Dataset;
use crate::error::{GammError, Result};
use crate::formula::{BoundSpec, SmoothKind};
use crate::linalg::{constraint_null_basis, psd_rank, sorted_eigen, RANK_TOL};

pub use crs::CrsBasis;
pub use terms::{
    build_by_smooth, build_crs_marginal, build_factor_smooth, build_parametric,
    build_random_effect, build_tensor, build_tprs, ParametricDesign, DEFAULT_TENSOR_CAP,
};
pub use tprs::TprsBasis;

/// Second column of a two-column random effect.
#[derive(Debug, Clone, PartialEq)]
pub enum ReSecond {
    Factor(Vec<String>),
    Slope,
}

/// What is needed to re-evaluate a block at new covariate values.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockBasis {
    Tprs(TprsBasis),
    Tensor(Vec<CrsBasis>),
    FactorSmooth {
        basis: CrsBasis,
        rotation: DMatrix<f64>,
        levels: Vec<String>,
    },
    RandomEffect {
        levels: Vec<String>,
        second: Option<ReSecond>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    /// Over the block's own coordinates.
    pub matrix: DMatrix<f64>,
    /// Global smoothing-parameter slot once assembled; local index before.
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ByLevel {
    pub column: String,
    pub code: usize,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermBlock {
    pub label: String,
    /// Index of the smooth term in the model formula.
    pub term_index: usize,
    pub kind: SmoothKind,
    pub covariates: Vec<String>,
    pub columns: Range<usize>,
    pub penalties: Vec<Penalty>,
    pub null_space_dim: usize,
    /// `Z` with raw basis `B` mapped to `B Z`; `None` when unconstrained.
    pub constraint: Option<DMatrix<f64>>,
    pub by_level: Option<ByLevel>,
    pub basis: BlockBasis,
}

/// A block together with its design columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltBlock {
    pub block: TermBlock,
    pub x: DMatrix<f64>,
}

impl TermBlock {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Rank of the summed penalties, from diagonals when every penalty is
    /// diagonal and from an eigen decomposition otherwise.
    pub fn penalty_rank(&self) -> usize {
        let w = self.penalties.first().map_or(0, |p| p.matrix.nrows());
        if w == 0 {
            return 0;
        }
        let mut sum = DMatrix::<f64>::zeros(w, w);
        for p in &self.penalties {
            sum += &p.matrix;
        }
        if is_diagonal(&sum) {
            let d: Vec<f64> = sum.diagonal().iter().copied().collect();
            psd_rank(&d, RANK_TOL)
        } else {
            psd_rank(&sorted_eigen(&sum).0, RANK_TOL)
        }
    }

    /// Constrained design rows for a smooth of numeric covariates, ignoring
    /// any by-variable mask (the curve of the block's own level).
    pub fn smooth_matrix(&self, covariates: &[&[f64]]) -> Result<DMatrix<f64>> {
        let raw = match &self.basis {
            BlockBasis::Tprs(b) => b.eval(covariates[0]),
            BlockBasis::Tensor(m) => {
                if covariates.len() != m.len() {
                    return Err(GammError::InvalidArgument(format!(
                        "{} needs {} covariates, got {}",
                        self.label,
                        m.len(),
                        covariates.len()
                    )));
                }
                let evals: Vec<DMatrix<f64>> =
                    m.iter().zip(covariates).map(|(b, x)| b.eval(x)).collect();
                terms::row_kronecker(&evals)
            }
            BlockBasis::FactorSmooth { .. } | BlockBasis::RandomEffect { .. } => {
                return Err(GammError::InvalidArgument(format!(
                    "{} is not a smooth of numeric covariates",
                    self.label
                )))
            }
        };
        Ok(match &self.constraint {
            Some(z) => raw * z,
            None => raw,
        })
    }

    /// Covariate ranges covered by the basis, one per numeric covariate.
    pub fn covariate_ranges(&self) -> Vec<(f64, f64)> {
        let crs = |b: &CrsBasis| {
            let k = b.knots();
            (k[0], k[k.len() - 1])
        };
        match &self.basis {
            BlockBasis::Tprs(b) => vec![b.range()],
            BlockBasis::Tensor(m) => m.iter().map(crs).collect(),
            BlockBasis::FactorSmooth { basis, .. } => vec![crs(basis)],
            BlockBasis::RandomEffect { .. } => vec![],
        }
    }

    /// Design rows of one level's curve of a factor smooth.
    pub fn factor_smooth_matrix(&self, x: &[f64], level: usize) -> Result<DMatrix<f64>> {
        let BlockBasis::FactorSmooth {
            basis,
            rotation,
            levels,
        } = &self.basis
        else {
            return Err(GammError::InvalidArgument(format!(
                "{} is not a factor smooth",
                self.label
            )));
        };
        if level >= levels.len() {
            return Err(GammError::InvalidArgument(format!(
                "level index {level} out of range for {}",
                self.label
            )));
        }
        let local = basis.eval(x) * rotation;
        let k = local.ncols();
        let mut out = DMatrix::<f64>::zeros(x.len(), self.width());
        out.columns_mut(level * k, k).copy_from(&local);
        Ok(out)
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Absorbs a sum-to-zero constraint into tprs, tensor and by-smooth blocks;
/// factor smooths and random effects pass through unchanged.
pub fn apply_constraints(built: BuiltBlock) -> BuiltBlock {
    if matches!(
        built.block.kind,
        SmoothKind::FactorSmooth | SmoothKind::RandomEffect
    ) {
        return built;
    }
    let sums = DVector::from_iterator(
        built.x.ncols(),
        built.x.column_iter().map(|c| c.iter().sum::<f64>()),
    );
    let z = constraint_null_basis(&sums);
    let x = &built.x * &z;
    let mut block = built.block;
    for p in &mut block.penalties {
        p.matrix = symmetrize(&(z.transpose() * &p.matrix * &z));
    }
    block.constraint = Some(match block.constraint {
        Some(prev) => prev * z,
        None => z,
    });
    block.columns = 0..x.ncols();
    BuiltBlock { block, x }
}

/// Rescales penalties to the size of the block's design so that smoothing
/// parameters for different terms live on comparable scales.
fn scale_penalties(built: &mut BuiltBlock) {
    let x_norm = built
        .x
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    for p in &mut built.block.penalties {
        let s_norm = p
            .matrix
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if s_norm > 0.0 && x_norm > 0.0 {
            p.matrix *= x_norm * x_norm / s_norm;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlocks {
    pub x: DMatrix<f64>,
    pub parametric: ParametricDesign,
    pub blocks: Vec<TermBlock>,
    pub n_lambda_slots: usize,
    /// Total unpenalized dimension `M_p`.
    pub null_dim_total: usize,
}

impl DesignBlocks {
    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    pub fn parametric_span(&self) -> Range<usize> {
        0..self.parametric.x.ncols()
    }

    pub fn block(&self, label: &str) -> Option<&TermBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    /// Label of the term owning coefficient `j`.
    pub fn owner_of(&self, j: usize) -> String {
        if let Some(b) = self.blocks.iter().find(|b| b.columns.contains(&j)) {
            return b.label.clone();
        }
        self.parametric
            .terms
            .iter()
            .find(|(_, r)| r.contains(&j))
            .map(|(l, _)| l.clone())
            .unwrap_or_else(|| "(Intercept)".into())
    }

    /// Name of every smoothing-parameter slot, in slot order.
    pub fn slot_labels(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.n_lambda_slots];
        for b in &self.blocks {
            let many = b.penalties.len() > 1;
            for (i, p) in b.penalties.iter().enumerate() {
                out[p.slot] = if many {
                    format!("{}[{}]", b.label, i + 1)
                } else {
                    b.label.clone()
                };
            }
        }
        out
    }
}

fn build_smooth_blocks(
    bound: &BoundSpec,
    data: &Dataset,
    index: usize,
    tensor_cap: usize,
) -> Result<Vec<BuiltBlock>> {
    let smooth = &bound.smooths[index];
    let term = &smooth.term;
    let cols = data.columns();
    let numeric = |c: usize| -> Result<&[f64]> {
        cols[c].as_numeric().ok_or_else(|| GammError::KindMismatch {
            column: cols[c].name().to_string(),
            expected: "numeric".into(),
            found: cols[c].kind().name().into(),
        })
    };
    let base = match term.kind {
        SmoothKind::Tprs => {
            let c = smooth.covariates[0];
            build_tprs(cols[c].name(), numeric(c)?, term.basis_dim_k[0], &term.label)?
        }
        SmoothKind::Tensor => {
            let xs: Vec<&[f64]> = smooth
                .covariates
                .iter()
                .map(|&c| numeric(c))
                .collect::<Result<_>>()?;
            build_tensor(
                &term.covariates,
                &xs,
                &term.basis_dim_k,
                tensor_cap,
                &term.label,
            )?
        }
        SmoothKind::FactorSmooth => {
            let (xc, fc) = (smooth.covariates[0], smooth.covariates[1]);
            let (codes, levels) = cols[fc]
                .as_factor()
                .ok_or_else(|| GammError::basis(&term.label, "second column must be a factor"))?;
            build_factor_smooth(
                [cols[xc].name(), cols[fc].name()],
                numeric(xc)?,
                codes,
                levels,
                term.basis_dim_k[0],
                term.shrinkage_order_m.unwrap_or(2),
                &term.label,
            )?
        }
        SmoothKind::RandomEffect => build_random_effect(data, &smooth.covariates, &term.label)?,
    };
    let mut built = match &smooth.by {
        None => vec![base],
        Some(by) => {
            let (codes, levels) = cols[by.column]
                .as_factor()
                .ok_or_else(|| GammError::basis(&term.label, "by variable must be a factor"))?;
            build_by_smooth(&base, &by.name, codes, levels, by.ordered)?
        }
    };
    for b in &mut built {
        b.block.term_index = index;
    }
    Ok(built)
}

/// Builds the full design: parametric span first, then smooth blocks in
/// formula order, with constraints absorbed and global slots assigned.
pub fn assemble_design(bound: &BoundSpec, data: &Dataset) -> Result<DesignBlocks> {
    assemble_design_with_cap(bound, data, DEFAULT_TENSOR_CAP)
}

pub fn assemble_design_with_cap(
    bound: &BoundSpec,
    data: &Dataset,
    tensor_cap: usize,
) -> Result<DesignBlocks> {
    let parametric = build_parametric(data, &bound.parametric)?;
    let mut built = Vec::new();
    for index in 0..bound.smooths.len() {
        for b in build_smooth_blocks(bound, data, index, tensor_cap)? {
            let mut b = apply_constraints(b);
            scale_penalties(&mut b);
            built.push(b);
        }
    }

    let n = data.n_rows();
    let p = parametric.x.ncols() + built.iter().map(|b| b.x.ncols()).sum::<usize>();
    if p >= n {
        let mut widths: Vec<(String, usize)> = built
            .iter()
            .map(|b| (b.block.label.clone(), b.x.ncols()))
            .chain(std::iter::once((
                "parametric".to_string(),
                parametric.x.ncols(),
            )))
            .collect();
        widths.sort_by(|a, b| b.1.cmp(&a.1));
        return Err(GammError::TooManyCoefficients {
            p,
            n,
            terms: widths
                .into_iter()
                .take(4)
                .map(|(l, w)| format!("{l} ({w})"))
                .collect(),
        });
    }

    let mut x = DMatrix::<f64>::zeros(n, p);
    x.columns_mut(0, parametric.x.ncols())
        .copy_from(&parametric.x);
    let mut offset = parametric.x.ncols();
    let mut slot = 0;
    let mut null_total = parametric.x.ncols();
    let mut blocks = Vec::with_capacity(built.len());
    for b in built {
        let w = b.x.ncols();
        x.columns_mut(offset, w).copy_from(&b.x);
        let mut block = b.block;
        block.columns = offset..offset + w;
        for pen in &mut block.penalties {
            pen.slot = slot;
            slot += 1;
        }
        block.null_space_dim = w - block.penalty_rank();
        null_total += block.null_space_dim;
        offset += w;
        blocks.push(block);
    }
    Ok(DesignBlocks {
        x,
        parametric,
        blocks,
        n_lambda_slots: slot,
        null_dim_total: null_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Column;
    use crate::formula::{parse_formula, validate_against};

    fn toy() -> Dataset {
        let n = 120;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let z: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7548).fract()).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin()).collect();
        let g: Vec<&str> = (0..n).map(|i| ["a", "b", "c"][i % 3]).collect();
        Dataset::new(vec![
            Column::numeric("y", y),
            Column::numeric("x", x),
            Column::numeric("z", z),
            Column::factor("g", &g),
        ])
        .unwrap()
    }

    fn design(text: &str) -> DesignBlocks {
        let data = toy();
        let bound = validate_against(&parse_formula(text).unwrap(), &data).unwrap();
        assemble_design(&bound, &data).unwrap()
    }

    #[test]
    fn tprs_block_after_centering() {
        let d = design("y ~ s(x, k=10)");
        let b = &d.blocks[0];
        assert_eq!(b.width(), 9);
        assert_eq!(b.null_space_dim, 1);
        assert_eq!(d.null_dim_total, 2);
        for c in b.columns.clone() {
            let mean = d.x.column(c).mean();
            assert!(mean.abs() < 1e-12, "column mean {mean}");
        }
    }

    #[test]
    fn tensor_block_after_centering() {
        let d = design("y ~ te(x, z, k=4)");
        let b = &d.blocks[0];
        assert_eq!(b.width(), 15);
        assert_eq!(b.penalties.len(), 2);
        assert_eq!(b.null_space_dim, 3);
        assert_eq!(d.n_lambda_slots, 2);
    }

    #[test]
    fn spans_partition_in_formula_order() {
        let d = design("y ~ g + s(x) + s(x, g, bs=\"fs\", k=5) + s(g, bs=\"re\")");
        assert_eq!(d.parametric_span(), 0..3);
        let labels: Vec<&str> = d.blocks.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, vec!["s(x)", "fs(x,g)", "re(g)"]);
        let mut next = 3;
        for b in &d.blocks {
            assert_eq!(b.columns.start, next);
            next = b.columns.end;
        }
        assert_eq!(next, d.n_coef());
        assert_eq!(d.n_lambda_slots, 4);
        // fs and re blocks are fully penalized.
        assert_eq!(d.null_dim_total, 3 + 1);
    }

    #[test]
    fn intercept_only() {
        let d = design("y ~ 1");
        assert_eq!(d.n_coef(), 1);
        assert_eq!(d.n_lambda_slots, 0);
        assert_eq!(d.null_dim_total, 1);
    }

    #[test]
    fn too_many_coefficients() {
        let data = toy();
        let bound =
            validate_against(&parse_formula("y ~ te(x, z, k=11)").unwrap(), &data).unwrap();
        assert!(matches!(
            assemble_design(&bound, &data),
            Err(GammError::TooManyCoefficients { .. })
        ));
    }

    #[test]
    fn fs_and_re_unconstrained() {
        let d = design("y ~ s(x, g, bs=\"fs\", k=5) + s(g, bs=\"re\")");
        assert!(d.blocks.iter().all(|b| b.constraint.is_none()));
    }

    #[test]
    fn assembly_is_bit_identical() {
        let a = design("y ~ g + s(x) + te(x, z, k=4) + s(x, by=g)");
        let b = design("y ~ g + s(x) + te(x, z, k=4) + s(x, by=g)");
        assert_eq!(a.x.as_slice(), b.x.as_slice());
        assert_eq!(a.blocks.len(), 1 + 1 + 3);
    }

    #[test]
    fn null_space_functions_have_zero_penalty() {
        let d = design("y ~ s(x) + te(x, z, k=4)");
        for b in &d.blocks {
            let w = b.width();
            let mut sum = DMatrix::<f64>::zeros(w, w);
            for p in &b.penalties {
                sum += &p.matrix;
            }
            let (values, vectors) = sorted_eigen(&sum);
            let scale = values[0];
            for j in w - b.null_space_dim..w {
                let v = vectors.column(j);
                for p in &b.penalties {
                    let q = (v.transpose() * &p.matrix * v)[0];
                    assert!(q.abs() < 1e-10 * scale, "{} {q}", b.label);
                }
            }
        }
    }

    #[test]
    fn smooth_matrix_replays_constraint() {
        let data = toy();
        let d = design("y ~ s(x) + te(x, z, k=4)");
        let x = data.numeric("x").unwrap();
        let z = data.numeric("z").unwrap();
        let b0 = &d.blocks[0];
        let m = b0.smooth_matrix(&[x]).unwrap();
        assert!((m - d.x.columns(b0.columns.start, b0.width())).abs().max() < 1e-10);
        let b1 = &d.blocks[1];
        let m = b1.smooth_matrix(&[x, z]).unwrap();
        assert!((m - d.x.columns(b1.columns.start, b1.width())).abs().max() < 1e-10);
    }
}
