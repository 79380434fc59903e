//! Builders for the individual model terms, before identifiability
//! constraints, scaling and slot numbering are applied.

use nalgebra::DMatrix;

use crate::dataio::{ColumnData, Dataset};
use crate::error::{GammError, Result};
use crate::formula::{BoundParametric, ParamKind, SmoothKind};
use crate::linalg::sorted_eigen;

use super::crs::CrsBasis;
use super::tprs::TprsBasis;
use super::{BlockBasis, BuiltBlock, Penalty, ReSecond, TermBlock};

/// Default cap on the product of tensor marginal dimensions.
pub const DEFAULT_TENSOR_CAP: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricDesign {
    /// Coefficient names, `(Intercept)` first.
    pub names: Vec<String>,
    /// Source term label and the coefficient range it occupies.
    pub terms: Vec<(String, std::ops::Range<usize>)>,
    pub x: DMatrix<f64>,
}

/// Intercept plus treatment-coded factors and numeric covariates.
pub fn build_parametric(data: &Dataset, terms: &[BoundParametric]) -> Result<ParametricDesign> {
    let n = data.n_rows();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut names = vec!["(Intercept)".to_string()];
    let mut spans = Vec::new();
    for term in terms {
        let start = cols.len();
        let column = &data.columns()[term.column];
        match (&term.kind, column.data()) {
            (ParamKind::Numeric, ColumnData::Numeric(v)) => {
                let first = v[0];
                if v.iter().all(|&x| x == first) {
                    return Err(GammError::Data(format!(
                        "numeric column `{}` is constant and collinear with the intercept",
                        term.name
                    )));
                }
                cols.push(v.clone());
                names.push(term.name.clone());
            }
            (ParamKind::Factor { levels, .. }, ColumnData::Factor { codes, .. }) => {
                for (code, level) in levels.iter().enumerate().skip(1) {
                    cols.push(codes.iter().map(|&c| f64::from(u8::from(c == code))).collect());
                    names.push(format!("{}={}", term.name, level));
                }
            }
            (ParamKind::Boolean, ColumnData::Boolean(v)) => {
                cols.push(v.iter().map(|&b| f64::from(u8::from(b))).collect());
                names.push(format!("{}=TRUE", term.name));
            }
            _ => {
                return Err(GammError::KindMismatch {
                    column: term.name.clone(),
                    expected: "the kind seen at validation".into(),
                    found: column.kind().name().into(),
                })
            }
        }
        spans.push((term.name.clone(), start..cols.len()));
    }
    let x = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
    Ok(ParametricDesign {
        names,
        terms: spans,
        x,
    })
}

fn new_block(
    label: &str,
    kind: SmoothKind,
    covariates: Vec<String>,
    basis: BlockBasis,
    penalties: Vec<DMatrix<f64>>,
    x: DMatrix<f64>,
) -> BuiltBlock {
    let width = x.ncols();
    BuiltBlock {
        block: TermBlock {
            label: label.to_string(),
            term_index: 0,
            kind,
            covariates,
            columns: 0..width,
            penalties: penalties
                .into_iter()
                .enumerate()
                .map(|(slot, matrix)| Penalty { matrix, slot })
                .collect(),
            null_space_dim: 0,
            constraint: None,
            by_level: None,
            basis,
        },
        x,
    }
}

/// One-dimensional thin plate regression spline, unconstrained (`k` columns).
pub fn build_tprs(name: &str, x: &[f64], k: usize, label: &str) -> Result<BuiltBlock> {
    let (basis, penalty) =
        TprsBasis::from_data(x, k).map_err(|e| relabel(e, label))?;
    let design = basis.eval(x);
    Ok(new_block(
        label,
        SmoothKind::Tprs,
        vec![name.to_string()],
        BlockBasis::Tprs(basis),
        vec![penalty],
        design,
    ))
}

/// Cubic regression spline marginal with its second-derivative penalty.
pub fn build_crs_marginal(x: &[f64], k: usize) -> Result<(CrsBasis, DMatrix<f64>)> {
    CrsBasis::from_data(x, k)
}

/// Row-wise Kronecker product of marginal design rows.
pub(crate) fn row_kronecker(marginals: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = marginals[0].nrows();
    let width: usize = marginals.iter().map(|m| m.ncols()).product();
    let mut out = DMatrix::<f64>::zeros(n, width);
    let mut row = Vec::with_capacity(width);
    let mut next = Vec::with_capacity(width);
    for i in 0..n {
        row.clear();
        row.push(1.0);
        for m in marginals {
            next.clear();
            for &a in &row {
                for c in 0..m.ncols() {
                    next.push(a * m[(i, c)]);
                }
            }
            std::mem::swap(&mut row, &mut next);
        }
        for (c, v) in row.iter().enumerate() {
            out[(i, c)] = *v;
        }
    }
    out
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Tensor product of cubic regression spline marginals, one penalty per margin.
pub fn build_tensor(
    names: &[String],
    covariates: &[&[f64]],
    ks: &[usize],
    cap: usize,
    label: &str,
) -> Result<BuiltBlock> {
    let product: usize = ks.iter().product();
    if product > cap {
        return Err(GammError::basis(
            label,
            format!("tensor basis would have {product} columns, above the cap of {cap}"),
        ));
    }
    let mut marginals = Vec::new();
    let mut penalties = Vec::new();
    for (x, &k) in covariates.iter().zip(ks) {
        let (b, s) = build_crs_marginal(x, k).map_err(|e| relabel(e, label))?;
        marginals.push(b);
        penalties.push(s);
    }
    let dims: Vec<usize> = marginals.iter().map(CrsBasis::dim).collect();
    let tensor_penalties = (0..marginals.len())
        .map(|j| {
            let mut acc = DMatrix::<f64>::identity(1, 1);
            for (i, &d) in dims.iter().enumerate() {
                let factor = if i == j {
                    penalties[j].clone()
                } else {
                    DMatrix::identity(d, d)
                };
                acc = kron(&acc, &factor);
            }
            acc
        })
        .collect();
    let evals: Vec<DMatrix<f64>> = marginals
        .iter()
        .zip(covariates)
        .map(|(b, x)| b.eval(x))
        .collect();
    let design = row_kronecker(&evals);
    Ok(new_block(
        label,
        SmoothKind::Tensor,
        names.to_vec(),
        BlockBasis::Tensor(marginals),
        tensor_penalties,
        design,
    ))
}

/// Per-level spline curves sharing one wiggliness and one null-space ridge
/// penalty. Each level's basis is rotated so that its wiggliness penalty is
/// `diag(0, 0, 1, …, 1)` and the ridge is `diag(1, 1, 0, …, 0)`.
pub fn build_factor_smooth(
    names: [&str; 2],
    x: &[f64],
    codes: &[usize],
    levels: &[String],
    k: usize,
    m: u32,
    label: &str,
) -> Result<BuiltBlock> {
    let n_levels = levels.len();
    for (code, level) in levels.iter().enumerate() {
        let mut values: Vec<f64> = codes
            .iter()
            .zip(x)
            .filter(|(&c, _)| c == code)
            .map(|(_, &v)| v)
            .collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        if values.len() < 3 {
            return Err(GammError::basis(
                label,
                format!(
                    "level `{level}` has {} distinct value(s) of `{}`; at least 3 are needed",
                    values.len(),
                    names[0]
                ),
            ));
        }
    }
    let (crs, second) = CrsBasis::from_data(x, k).map_err(|e| relabel(e, label))?;
    let (s, nd) = match m {
        1 => (crs.first_derivative_penalty(), 1),
        _ => (second, 2),
    };
    let kk = crs.dim();
    let raw = crs.eval(x);
    // Natural parameterization: columns orthonormal over the data, penalty
    // diagonal, so the penalized directions carry no constant component.
    let r_inv = raw
        .clone()
        .qr()
        .r()
        .try_inverse()
        .ok_or_else(|| GammError::basis(label, "basis columns are linearly dependent"))?;
    let mut st = r_inv.transpose() * &s * &r_inv;
    st = 0.5 * (&st + st.transpose());
    let (values, vectors) = sorted_eigen(&st);
    // Null space first, then the range scaled to unit penalty.
    let mut rotation = DMatrix::<f64>::zeros(kk, kk);
    for c in 0..nd {
        rotation.set_column(c, &(&r_inv * vectors.column(kk - nd + c)));
    }
    for c in 0..kk - nd {
        let col = &r_inv * vectors.column(c) / values[c].sqrt();
        rotation.set_column(c + nd, &col);
    }
    let local = raw * &rotation;
    let width = n_levels * kk;
    let mut design = DMatrix::<f64>::zeros(x.len(), width);
    for (i, &code) in codes.iter().enumerate() {
        for c in 0..kk {
            design[(i, code * kk + c)] = local[(i, c)];
        }
    }
    let wiggle = DMatrix::from_fn(width, width, |r, c| {
        f64::from(u8::from(r == c && r % kk >= nd))
    });
    let ridge = DMatrix::from_fn(width, width, |r, c| f64::from(u8::from(r == c && r % kk < nd)));
    Ok(new_block(
        label,
        SmoothKind::FactorSmooth,
        names.iter().map(|s| s.to_string()).collect(),
        BlockBasis::FactorSmooth {
            basis: crs,
            rotation,
            levels: levels.to_vec(),
        },
        vec![wiggle, ridge],
        design,
    ))
}

/// Random-effect columns: indicators of the first factor, optionally crossed
/// with a second factor or multiplied by a numeric covariate.
pub fn build_random_effect(data: &Dataset, columns: &[usize], label: &str) -> Result<BuiltBlock> {
    let n = data.n_rows();
    let first = &data.columns()[columns[0]];
    let (codes, levels) = first
        .as_factor()
        .ok_or_else(|| GammError::basis(label, "first column must be a factor"))?;
    let mut names = vec![first.name().to_string()];
    let (second, design) = match columns.get(1).map(|&c| &data.columns()[c]) {
        None => {
            let mut x = DMatrix::<f64>::zeros(n, levels.len());
            for (i, &c) in codes.iter().enumerate() {
                x[(i, c)] = 1.0;
            }
            (None, x)
        }
        Some(col) => {
            names.push(col.name().to_string());
            match col.data() {
                ColumnData::Factor {
                    codes: codes2,
                    levels: levels2,
                    ..
                } => {
                    let l2 = levels2.len();
                    let mut x = DMatrix::<f64>::zeros(n, levels.len() * l2);
                    for i in 0..n {
                        x[(i, codes[i] * l2 + codes2[i])] = 1.0;
                    }
                    (Some(ReSecond::Factor(levels2.clone())), x)
                }
                ColumnData::Numeric(v) => {
                    let mut x = DMatrix::<f64>::zeros(n, levels.len());
                    for i in 0..n {
                        x[(i, codes[i])] = v[i];
                    }
                    (Some(ReSecond::Slope), x)
                }
                ColumnData::Boolean(_) => {
                    return Err(GammError::basis(
                        label,
                        "second column must be a factor or numeric",
                    ))
                }
            }
        }
    };
    let width = design.ncols();
    Ok(new_block(
        label,
        SmoothKind::RandomEffect,
        names,
        BlockBasis::RandomEffect {
            levels: levels.to_vec(),
            second,
        },
        vec![DMatrix::identity(width, width)],
        design,
    ))
}

/// Copies of a base smooth masked to the rows of each block level of `by`.
/// Ordered factors skip the reference level (difference smooths).
pub fn build_by_smooth(
    base: &BuiltBlock,
    by_name: &str,
    codes: &[usize],
    levels: &[String],
    ordered: bool,
) -> Result<Vec<BuiltBlock>> {
    let width = base.x.ncols();
    let first = usize::from(ordered);
    let mut out = Vec::new();
    for (code, level) in levels.iter().enumerate().skip(first) {
        let rows = codes.iter().filter(|&&c| c == code).count();
        if rows < width {
            return Err(GammError::basis(
                &base.block.label,
                format!(
                    "level `{level}` of `{by_name}` has {rows} rows, too few for {width} basis functions"
                ),
            ));
        }
        let mut x = base.x.clone();
        for (i, &c) in codes.iter().enumerate() {
            if c != code {
                x.row_mut(i).fill(0.0);
            }
        }
        let mut built = BuiltBlock {
            block: base.block.clone(),
            x,
        };
        built.block.label = format!("{}:{}", base.block.label, level);
        built.block.by_level = Some(super::ByLevel {
            column: by_name.to_string(),
            code,
            level: level.clone(),
        });
        out.push(built);
    }
    Ok(out)
}

fn relabel(err: GammError, label: &str) -> GammError {
    match err {
        GammError::Basis { message, .. } => GammError::basis(label, message),
        other => other,
    }
}
