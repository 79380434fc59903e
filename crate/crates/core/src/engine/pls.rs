use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::basis::DesignBlocks;
use crate::error::{GammError, Result};
use crate::linalg::{psd_root, PivotedQr, RANK_TOL};

use super::whiten::WhitenedSystem;

/// One penalty over a column range, with its square-root factor.
#[derive(Debug, Clone)]
pub struct SlotPenalty {
    pub slot: usize,
    pub columns: Range<usize>,
    pub matrix: DMatrix<f64>,
    /// `B` with `BᵀB = matrix`, rows spanning the penalty's range.
    pub root: DMatrix<f64>,
}

impl SlotPenalty {
    pub fn new(slot: usize, columns: Range<usize>, matrix: DMatrix<f64>) -> Self {
        let root = psd_root(&matrix);
        SlotPenalty {
            slot,
            columns,
            matrix,
            root,
        }
    }

    /// `βᵀ S β` restricted to this penalty's columns.
    pub fn quadratic_form(&self, beta: &DVector<f64>) -> f64 {
        let b = beta.rows(self.columns.start, self.columns.len());
        (b.transpose() * &self.matrix * b)[0]
    }
}

/// The penalized least-squares problem after the one-off orthogonal
/// reduction `[X̃ | ỹ] = Q [R f; 0 r]`, so that each smoothing-parameter
/// trial only needs a decomposition of `p`-column matrices.
#[derive(Debug, Clone)]
pub struct PlsProblem {
    r: DMatrix<f64>,
    f: Vec<f64>,
    rss0: f64,
    n: usize,
    penalties: Vec<SlotPenalty>,
    n_slots: usize,
    owners: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PlsFit {
    pub beta: DVector<f64>,
    /// Whitened residual sum of squares.
    pub rss: f64,
    /// `βᵀ S_λ β`.
    pub penalty: f64,
    /// `rss + penalty`.
    pub deviance: f64,
    /// `log det(X̃ᵀX̃ + S_λ)`.
    pub log_det_a: f64,
    qr: PivotedQr,
    col_scale: Vec<f64>,
}

impl PlsFit {
    /// `P R⁻¹` scaled back to the original columns: rows of `W` with
    /// `(X̃ᵀX̃ + S_λ)⁻¹ = W Wᵀ`.
    fn inverse_factor(&self) -> DMatrix<f64> {
        let ri = self.qr.r_inverse();
        let p = ri.nrows();
        let perm = self.qr.permutation();
        let mut w = DMatrix::<f64>::zeros(p, p);
        for (pos, &orig) in perm.iter().enumerate() {
            let d = self.col_scale[orig];
            for c in 0..p {
                w[(orig, c)] = d * ri[(pos, c)];
            }
        }
        w
    }

    /// `(X̃ᵀX̃ + S_λ)⁻¹`.
    pub fn a_inverse(&self) -> DMatrix<f64> {
        let w = self.inverse_factor();
        let out = &w * w.transpose();
        0.5 * (&out + out.transpose())
    }

    /// Diagonal blocks of `(X̃ᵀX̃ + S_λ)⁻¹` for the given column ranges.
    pub fn a_inverse_blocks(&self, ranges: &[Range<usize>]) -> Vec<DMatrix<f64>> {
        let w = self.inverse_factor();
        ranges
            .iter()
            .map(|r| {
                let rows = w.rows(r.start, r.len());
                rows * rows.transpose()
            })
            .collect()
    }
}

impl PlsProblem {
    pub fn new(system: &WhitenedSystem, design: &DesignBlocks) -> Result<Self> {
        let penalties = design
            .blocks
            .iter()
            .flat_map(|b| {
                b.penalties
                    .iter()
                    .map(|p| SlotPenalty::new(p.slot, b.columns.clone(), p.matrix.clone()))
            })
            .collect();
        let owners = (0..design.n_coef()).map(|j| design.owner_of(j)).collect();
        Self::from_parts(&system.x, &system.y, penalties, design.n_lambda_slots, owners)
    }

    pub fn from_parts(
        x: &DMatrix<f64>,
        y: &[f64],
        penalties: Vec<SlotPenalty>,
        n_slots: usize,
        owners: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n <= p {
            return Err(GammError::InvalidArgument(format!(
                "{n} rows cannot support {p} coefficients"
            )));
        }
        let mut xy = DMatrix::<f64>::zeros(n, p + 1);
        xy.columns_mut(0, p).copy_from(x);
        xy.column_mut(p).copy_from_slice(y);
        let full = xy.qr().r();
        let r = full.view((0, 0), (p, p)).upper_triangle();
        let f = full.view((0, p), (p, 1)).iter().copied().collect();
        let last = full[(p, p)];
        Ok(PlsProblem {
            r,
            f,
            rss0: last * last,
            n,
            penalties,
            n_slots,
            owners,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_coef(&self) -> usize {
        self.r.ncols()
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn penalties(&self) -> &[SlotPenalty] {
        &self.penalties
    }

    /// `R` of the reduced system, so that `X̃ᵀX̃ = RᵀR`.
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Minimizes `‖ỹ − X̃β‖² + Σ λ_j βᵀS_jβ` by a column-pivoted QR of the
    /// reduced system stacked on the penalty square roots.
    pub fn solve(&self, lambdas: &[f64]) -> Result<PlsFit> {
        if lambdas.len() != self.n_slots {
            return Err(GammError::InvalidArgument(format!(
                "expected {} smoothing parameters, got {}",
                self.n_slots,
                lambdas.len()
            )));
        }
        if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(GammError::InvalidArgument(format!(
                "smoothing parameters must be finite and nonnegative, got {bad}"
            )));
        }
        let p = self.n_coef();
        let extra: usize = self
            .penalties
            .iter()
            .filter(|s| lambdas[s.slot] > 0.0)
            .map(|s| s.root.nrows())
            .sum();
        let mut m = DMatrix::<f64>::zeros(p + extra, p);
        m.view_mut((0, 0), (p, p)).copy_from(&self.r);
        let mut row = p;
        for s in &self.penalties {
            let lam = lambdas[s.slot];
            if lam <= 0.0 {
                continue;
            }
            let rt = lam.sqrt();
            let k = s.root.nrows();
            for i in 0..k {
                for (c, col) in s.columns.clone().enumerate() {
                    m[(row + i, col)] = rt * s.root[(i, c)];
                }
            }
            row += k;
        }
        let mut col_scale = vec![1.0; p];
        for (j, mut col) in m.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm > 0.0 {
                col_scale[j] = 1.0 / norm;
                col *= col_scale[j];
            }
        }
        let qr = PivotedQr::new(&m);
        let rank = qr.rank(RANK_TOL);
        if rank < p {
            let culprit = qr.permutation()[rank];
            return Err(GammError::RankDeficient(self.owners[culprit].clone()));
        }
        let mut rhs = vec![0.0; p + extra];
        rhs[..p].copy_from_slice(&self.f);
        qr.apply_qt(&mut rhs);
        let scaled = qr.solve_upper_permuted(&rhs, p);
        let beta = DVector::from_iterator(
            p,
            scaled.iter().zip(&col_scale).map(|(b, d)| b * d),
        );

        let fitted_r = &self.r * &beta;
        let rss = self.rss0
            + self
                .f
                .iter()
                .zip(fitted_r.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        let penalty: f64 = self
            .penalties
            .iter()
            .map(|s| lambdas[s.slot] * s.quadratic_form(&beta))
            .sum();
        let log_det_a = 2.0 * qr.r_diag().iter().map(|d| d.abs().ln()).sum::<f64>()
            - 2.0 * col_scale.iter().map(|d| d.ln()).sum::<f64>();
        Ok(PlsFit {
            beta,
            rss,
            penalty,
            deviance: rss + penalty,
            log_det_a,
            qr,
            col_scale,
        })
    }
}

/// Solves the penalized problem for a whitened system at fixed λ.
pub fn fit_pls(system: &WhitenedSystem, design: &DesignBlocks, lambdas: &[f64]) -> Result<PlsFit> {
    PlsProblem::new(system, design)?.solve(lambdas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        }
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = lcg(11);
        let (n, p) = (30, 8);
        let x = DMatrix::from_fn(n, p, |_, _| rng());
        let y: Vec<f64> = (0..n).map(|_| rng()).collect();
        let a = DMatrix::from_fn(4, 4, |_, _| rng());
        let s1 = a.transpose() * &a;
        let s2 = DMatrix::<f64>::identity(3, 3);
        let pens = vec![
            SlotPenalty::new(0, 1..5, s1.clone()),
            SlotPenalty::new(1, 5..8, s2.clone()),
        ];
        let prob = PlsProblem::from_parts(&x, &y, pens, 2, vec!["t".into(); p]).unwrap();
        let fit = prob.solve(&[2.0, 5.0]).unwrap();
        let mut s = DMatrix::<f64>::zeros(p, p);
        s.view_mut((1, 1), (4, 4)).copy_from(&(2.0 * s1));
        s.view_mut((5, 5), (3, 3)).copy_from(&(5.0 * s2));
        let a = x.transpose() * &x + &s;
        let yv = DVector::from_vec(y);
        let direct = a.clone().lu().solve(&(x.transpose() * &yv)).unwrap();
        let rel = (&fit.beta - &direct).norm() / direct.norm();
        assert!(rel < 1e-10, "{rel}");
        let inv = a.clone().try_inverse().unwrap();
        assert!((fit.a_inverse() - &inv).abs().max() < 1e-9 * inv.abs().max());
        assert!((fit.log_det_a - a.determinant().ln()).abs() < 1e-9);
        let resid = &yv - &x * &direct;
        let dev = resid.norm_squared() + (direct.transpose() * &s * &direct)[0];
        assert!((fit.deviance - dev).abs() < 1e-10 * dev);
    }

    #[test]
    fn rank_deficiency_names_term() {
        let n = 20;
        let x = DMatrix::from_fn(n, 3, |i, j| if j == 2 { 2.0 * i as f64 } else if j == 1 { i as f64 } else { 1.0 });
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let owners = vec!["(Intercept)".into(), "a".into(), "b".into()];
        let prob = PlsProblem::from_parts(&x, &y, vec![], 0, owners).unwrap();
        match prob.solve(&[]) {
            Err(GammError::RankDeficient(label)) => assert!(label == "a" || label == "b"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
