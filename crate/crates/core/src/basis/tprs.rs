use nalgebra::DMatrix;

use crate::error::{GammError, Result};
use crate::linalg::{null_space_of_columns, sorted_eigen};

/// Upper bound on the number of distinct covariate values used as radial
/// centres. Larger data are thinned to evenly spaced order statistics.
pub const MAX_TPRS_KNOTS: usize = 300;

/// Cubic radial function of the one-dimensional thin plate spline with a
/// second-derivative penalty, scaled so that `δᵀEδ = ∫ f''²`.
fn eta(r: f64) -> f64 {
    let a = r.abs();
    a * a * a / 12.0
}

/// Rank-reduced thin plate regression spline in one dimension.
///
/// Columns are `k − 2` radial combinations followed by the null space
/// `{1, x}`. The covariate is mapped to `[0, 1]` internally.
#[derive(Debug, Clone, PartialEq)]
pub struct TprsBasis {
    shift: f64,
    scale: f64,
    knots: Vec<f64>,
    /// `U_k Z_k`: maps the `k − 2` radial coefficients to knot weights.
    radial: DMatrix<f64>,
}

impl TprsBasis {
    pub fn from_data(x: &[f64], k: usize) -> Result<(Self, DMatrix<f64>)> {
        if k < 3 {
            return Err(GammError::basis("tprs", format!("k={k} is below 3")));
        }
        let mut unique = x.to_vec();
        unique.sort_by(f64::total_cmp);
        unique.dedup();
        if unique.len() < k {
            return Err(GammError::basis(
                "tprs",
                format!("{} distinct covariate values, fewer than k={k}", unique.len()),
            ));
        }
        let lo = unique[0];
        let range = unique[unique.len() - 1] - lo;
        let scale = if range > 0.0 { range } else { 1.0 };
        let sites: Vec<f64> = if unique.len() > MAX_TPRS_KNOTS {
            let m = unique.len() - 1;
            (0..MAX_TPRS_KNOTS)
                .map(|i| unique[(i * m + (MAX_TPRS_KNOTS - 1) / 2) / (MAX_TPRS_KNOTS - 1)])
                .collect()
        } else {
            unique
        };
        let knots: Vec<f64> = sites.iter().map(|v| (v - lo) / scale).collect();
        let (basis, penalty) = Self::from_knots(knots, k);
        Ok((
            TprsBasis {
                shift: lo,
                scale,
                ..basis
            },
            penalty,
        ))
    }

    /// Construction on already standardized knots.
    pub fn from_knots(knots: Vec<f64>, k: usize) -> (Self, DMatrix<f64>) {
        let m = knots.len();
        let e = DMatrix::from_fn(m, m, |i, j| eta(knots[i] - knots[j]));
        let (values, vectors) = sorted_eigen(&e);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .abs()
                .total_cmp(&values[a].abs())
                .then(a.cmp(&b))
        });
        let top = &order[..k];
        let u_k = DMatrix::from_fn(m, k, |r, c| vectors[(r, top[c])]);
        let d_k: Vec<f64> = top.iter().map(|&i| values[i]).collect();
        let t = DMatrix::from_fn(m, 2, |r, c| if c == 0 { 1.0 } else { knots[r] });
        let z = null_space_of_columns(&(u_k.transpose() * t));
        let radial = &u_k * &z;
        let dz = DMatrix::from_fn(k, k - 2, |r, c| d_k[r] * z[(r, c)]);
        let inner = z.transpose() * dz;
        let mut penalty = DMatrix::<f64>::zeros(k, k);
        for i in 0..k - 2 {
            for j in 0..k - 2 {
                penalty[(i, j)] = 0.5 * (inner[(i, j)] + inner[(j, i)]);
            }
        }
        (
            TprsBasis {
                shift: 0.0,
                scale: 1.0,
                knots,
                radial,
            },
            penalty,
        )
    }

    pub fn dim(&self) -> usize {
        self.radial.ncols() + 2
    }

    /// Observed covariate range the basis was built on.
    pub fn range(&self) -> (f64, f64) {
        (self.shift, self.shift + self.scale)
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.knots.len();
        let k = self.dim();
        let mut out = DMatrix::<f64>::zeros(x.len(), k);
        let mut eta_row = vec![0.0; m];
        for (i, &raw) in x.iter().enumerate() {
            let v = (raw - self.shift) / self.scale;
            for (e, kn) in eta_row.iter_mut().zip(&self.knots) {
                *e = eta(v - kn);
            }
            for c in 0..k - 2 {
                let col = self.radial.column(c);
                out[(i, c)] = eta_row.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            }
            out[(i, k - 2)] = 1.0;
            out[(i, k - 1)] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn dimension_and_penalty_rank() {
        let (b, s) = TprsBasis::from_data(&grid(100), 10).unwrap();
        assert_eq!(b.dim(), 10);
        let (values, _) = sorted_eigen(&s);
        let rank = crate::linalg::psd_rank(&values, crate::linalg::RANK_TOL);
        assert_eq!(rank, 8);
        assert!(values.iter().all(|&v| v > -1e-10 * values[0]));
    }

    #[test]
    fn too_few_distinct_values() {
        let x = vec![0.0, 1.0, 2.0, 0.0, 1.0];
        assert!(TprsBasis::from_data(&x, 4).is_err());
    }

    #[test]
    fn penalty_is_integrated_squared_second_derivative() {
        // Between knots f is cubic, so a central second difference is exact and
        // two-point Gauss-Legendre integrates f''² exactly on each interval.
        let knots = grid(25);
        let (b, s) = TprsBasis::from_knots(knots.clone(), 8);
        let beta = nalgebra::DVector::from_vec(vec![0.7, -1.1, 0.4, 2.3, -0.6, 0.9, 3.0, -2.0]);
        let quad = (beta.transpose() * &s * &beta)[0];
        let f = |x: f64| (b.eval(&[x]) * &beta)[0];
        let mut integral = 0.0;
        for w in knots.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[1] + w[0]);
            let eps = 1e-3 * (w[1] - w[0]);
            for node in [-1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()] {
                let x = mid + half * node;
                let d2 = (f(x + eps) - 2.0 * f(x) + f(x - eps)) / (eps * eps);
                integral += half * d2 * d2;
            }
        }
        // Outside the knot range the radial part is linear, contributing nothing.
        assert!(((integral - quad) / quad).abs() < 1e-6, "{integral} vs {quad}");
    }

    #[test]
    fn knots_are_thinned_deterministically() {
        let x: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.37).sin()).collect();
        let (a, _) = TprsBasis::from_data(&x, 10).unwrap();
        let (b, _) = TprsBasis::from_data(&x, 10).unwrap();
        assert_eq!(a.n_knots(), MAX_TPRS_KNOTS);
        assert_eq!(a, b);
    }
}
