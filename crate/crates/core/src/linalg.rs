//! Dense linear algebra helpers on top of nalgebra.
//!
//! nalgebra's `ColPivQR` pivots on the largest single entry rather than the
//! largest remaining column norm, which does not reveal rank reliably, so the
//! column-pivoted Householder factorization used by the fitter lives here.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Householder QR with column pivoting: `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Column-major storage: `R` on and above the diagonal, Householder
    /// vectors (implicit leading one) below it.
    a: Vec<f64>,
    nrows: usize,
    ncols: usize,
    tau: Vec<f64>,
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn new(matrix: &DMatrix<f64>) -> Self {
        let (m, n) = matrix.shape();
        let mut a = matrix.as_slice().to_vec();
        let k = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![0.0; k];
        let col_norm2 = |a: &[f64], j: usize, from: usize| -> f64 {
            a[j * m + from..(j + 1) * m].iter().map(|v| v * v).sum()
        };
        let mut norms: Vec<f64> = (0..n).map(|j| col_norm2(&a, j, 0)).collect();
        let mut exact = norms.clone();

        for j in 0..k {
            let mut piv = j;
            for c in j + 1..n {
                if norms[c] > norms[piv] {
                    piv = c;
                }
            }
            if piv != j {
                for r in 0..m {
                    a.swap(j * m + r, piv * m + r);
                }
                norms.swap(j, piv);
                exact.swap(j, piv);
                perm.swap(j, piv);
            }

            let (head, tail) = a.split_at_mut((j + 1) * m);
            let col = &mut head[j * m..];
            let alpha = col[j];
            let xnorm2: f64 = col[j + 1..].iter().map(|v| v * v).sum();
            if xnorm2 == 0.0 {
                tau[j] = 0.0;
            } else {
                let beta = -alpha.signum() * (alpha * alpha + xnorm2).sqrt();
                tau[j] = (beta - alpha) / beta;
                let scale = 1.0 / (alpha - beta);
                col[j + 1..].iter_mut().for_each(|v| *v *= scale);
                col[j] = beta;
            }
            let t = tau[j];
            let v = &col[j + 1..m];
            for c in 0..n - j - 1 {
                let target = &mut tail[c * m..(c + 1) * m];
                if t != 0.0 {
                    let mut w = target[j];
                    for (x, vi) in target[j + 1..].iter().zip(v) {
                        w += vi * x;
                    }
                    w *= t;
                    target[j] -= w;
                    for (x, vi) in target[j + 1..].iter_mut().zip(v) {
                        *x -= w * vi;
                    }
                }
                let cc = j + 1 + c;
                let updated = norms[cc] - target[j] * target[j];
                if updated <= 1e-6 * exact[cc] || updated < 0.0 {
                    let fresh: f64 = target[j + 1..].iter().map(|x| x * x).sum();
                    norms[cc] = fresh;
                    exact[cc] = fresh;
                } else {
                    norms[cc] = updated;
                }
            }
        }
        PivotedQr {
            a,
            nrows: m,
            ncols: n,
            tau,
            perm,
        }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// `perm[j]` is the original index of the column placed at position `j`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn r_diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|j| self.a[j * self.nrows + j])
            .collect()
    }

    /// Numerical rank: diagonal entries above `rel_tol * |r_00|`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let d = self.r_diag();
        let Some(first) = d.first() else { return 0 };
        let cut = first.abs() * rel_tol;
        d.iter().take_while(|v| v.abs() > cut).count()
    }

    /// Overwrites `b` (length `nrows`) with `Qᵀ b`.
    pub fn apply_qt(&self, b: &mut [f64]) {
        let m = self.nrows;
        for j in 0..self.tau.len() {
            let t = self.tau[j];
            if t == 0.0 {
                continue;
            }
            let v = &self.a[j * m + j + 1..(j + 1) * m];
            let mut w = b[j];
            for (x, vi) in b[j + 1..].iter().zip(v) {
                w += vi * x;
            }
            w *= t;
            b[j] -= w;
            for (x, vi) in b[j + 1..].iter_mut().zip(v) {
                *x -= w * vi;
            }
        }
    }

    /// Upper triangular `R` (square, `ncols × ncols`; requires `nrows ≥ ncols`).
    pub fn r(&self) -> DMatrix<f64> {
        let n = self.ncols;
        let m = self.nrows;
        DMatrix::from_fn(n, n, |i, j| if i <= j { self.a[j * m + i] } else { 0.0 })
    }

    /// Solves `R x = g` for the leading `rank` block and maps back through the
    /// permutation; trailing coefficients are set to zero.
    pub fn solve_upper_permuted(&self, g: &[f64], rank: usize) -> Vec<f64> {
        let m = self.nrows;
        let mut z = vec![0.0; rank];
        for i in (0..rank).rev() {
            let mut s = g[i];
            for c in i + 1..rank {
                s -= self.a[c * m + i] * z[c];
            }
            z[i] = s / self.a[i * m + i];
        }
        let mut x = vec![0.0; self.ncols];
        for (pos, &orig) in self.perm.iter().enumerate().take(rank) {
            x[orig] = z[pos];
        }
        x
    }

    /// `R⁻¹` for a full-rank square factor, in pivoted coordinates.
    pub fn r_inverse(&self) -> DMatrix<f64> {
        let n = self.ncols;
        let m = self.nrows;
        let mut inv = DMatrix::<f64>::zeros(n, n);
        for col in 0..n {
            inv[(col, col)] = 1.0 / self.a[col * m + col];
            for i in (0..col).rev() {
                let mut s = 0.0;
                for c in i + 1..=col {
                    s += self.a[c * m + i] * inv[(c, col)];
                }
                inv[(i, col)] = -s / self.a[i * m + i];
            }
        }
        inv
    }

    /// `(AᵀA)⁻¹` in original column order, from `P R⁻¹ R⁻ᵀ Pᵀ`.
    pub fn inverse_gram(&self) -> DMatrix<f64> {
        let ri = self.r_inverse();
        let g = &ri * ri.transpose();
        let n = self.ncols;
        let mut out = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(self.perm[i], self.perm[j])] = g[(i, j)];
            }
        }
        out
    }
}

/// Symmetric eigen decomposition with eigenvalues sorted descending.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Rank by the rule `λ > rel_tol · λ_max` on eigenvalues of a PSD matrix.
pub fn psd_rank(values: &[f64], rel_tol: f64) -> usize {
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > rel_tol * max).count()
}

pub const RANK_TOL: f64 = 1e-10;

/// Square root factor `B` with `BᵀB = S` for a PSD matrix, keeping only the
/// range space (rows = rank).
pub fn psd_root(s: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(s);
    let rank = psd_rank(&values, RANK_TOL);
    let n = s.nrows();
    DMatrix::from_fn(rank, n, |i, j| values[i].sqrt() * vectors[(j, i)])
}

/// Orthonormal basis of the complement of a single constraint vector `c`
/// (a `w × (w-1)` matrix `Z` with `cᵀZ = 0`), from one Householder reflection.
pub fn constraint_null_basis(c: &DVector<f64>) -> DMatrix<f64> {
    let w = c.len();
    let norm = c.norm();
    let mut v = c.clone();
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * norm;
    let vnorm2 = v.norm_squared();
    let h = if vnorm2 == 0.0 {
        DMatrix::identity(w, w)
    } else {
        DMatrix::identity(w, w) - (2.0 / vnorm2) * &v * v.transpose()
    };
    h.columns(1, w - 1).into_owned()
}

/// Orthonormal basis of the null space of `Cᵀ` for a `w × q` constraint
/// matrix, via QR of `C`: the last `w - q` columns of the full `Q`.
pub fn null_space_of_columns(c: &DMatrix<f64>) -> DMatrix<f64> {
    let (w, q) = c.shape();
    let qr = c.clone().qr();
    let mut qt = DMatrix::<f64>::identity(w, w);
    qr.q_tr_mul(&mut qt);
    qt.transpose().columns(q, w - q).into_owned()
}

pub fn log_det_psd_top(values: &[f64], rank: usize) -> f64 {
    values
        .iter()
        .take(rank)
        .map(|&v| v.max(f64::MIN_POSITIVE).ln())
        .sum()
}
