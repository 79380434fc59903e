use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GammError, Result};

/// Natural cubic regression spline parameterized by its values at the knots.
///
/// With knot spacings `h`, the interior second derivatives solve
/// `B δ = D β`; the wiggliness penalty is `∫ f''² = βᵀ Dᵀ B⁻¹ D β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrsBasis {
    knots: Vec<f64>,
    /// Row `j` maps coefficients to `f''` at knot `j`; end rows are zero.
    second_deriv: Vec<Vec<f64>>,
}

/// Type-7 sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `k` knots at evenly spaced quantiles of `x`, with ties removed.
pub fn quantile_knots(x: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut knots: Vec<f64> = (0..k)
        .map(|i| quantile_sorted(&sorted, i as f64 / (k - 1) as f64))
        .collect();
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    knots
}

impl CrsBasis {
    /// Builds the basis and its penalty from knots placed at quantiles of `x`.
    pub fn from_data(x: &[f64], k: usize) -> Result<(Self, DMatrix<f64>)> {
        if k < 3 {
            return Err(GammError::basis("cr", format!("k={k} is below 3")));
        }
        let knots = quantile_knots(x, k);
        if knots.len() < 3 {
            return Err(GammError::basis(
                "cr",
                format!(
                    "only {} distinct knot(s) remain after removing ties",
                    knots.len()
                ),
            ));
        }
        Ok(Self::from_knots(knots))
    }

    pub fn from_knots(knots: Vec<f64>) -> (Self, DMatrix<f64>) {
        let k = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut d = DMatrix::<f64>::zeros(k - 2, k);
        let mut b = DMatrix::<f64>::zeros(k - 2, k - 2);
        for i in 0..k - 2 {
            d[(i, i)] = 1.0 / h[i];
            d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
            d[(i, i + 2)] = 1.0 / h[i + 1];
            b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < k - 2 {
                b[(i, i + 1)] = h[i + 1] / 6.0;
                b[(i + 1, i)] = h[i + 1] / 6.0;
            }
        }
        let chol = b
            .clone()
            .cholesky()
            .expect("knot spacing matrix is diagonally dominant");
        let f_interior = chol.solve(&d);
        let mut second_deriv = vec![vec![0.0; k]; k];
        for i in 0..k - 2 {
            for j in 0..k {
                second_deriv[i + 1][j] = f_interior[(i, j)];
            }
        }
        let penalty = d.transpose() * &f_interior;
        let penalty = 0.5 * (&penalty + penalty.transpose());
        (
            CrsBasis {
                knots,
                second_deriv,
            },
            penalty,
        )
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    fn interval(&self, x: f64) -> usize {
        let k = self.knots.len();
        match self.knots.binary_search_by(|kn| kn.total_cmp(&x)) {
            Ok(i) => i.min(k - 2),
            Err(i) => i.saturating_sub(1).min(k - 2),
        }
    }

    /// Coefficient weights giving `f(x)`; linear beyond the boundary knots.
    pub fn row(&self, x: f64) -> Vec<f64> {
        let k = self.knots.len();
        let first = self.knots[0];
        let last = self.knots[k - 1];
        if x < first {
            let mut r = self.value_row(0, first);
            let slope = self.slope_row(0, first);
            r.iter_mut()
                .zip(&slope)
                .for_each(|(v, s)| *v += s * (x - first));
            return r;
        }
        if x > last {
            let mut r = self.value_row(k - 2, last);
            let slope = self.slope_row(k - 2, last);
            r.iter_mut()
                .zip(&slope)
                .for_each(|(v, s)| *v += s * (x - last));
            return r;
        }
        self.value_row(self.interval(x), x)
    }

    fn value_row(&self, j: usize, x: f64) -> Vec<f64> {
        let k = self.knots.len();
        let h = self.knots[j + 1] - self.knots[j];
        let am = (self.knots[j + 1] - x) / h;
        let ap = (x - self.knots[j]) / h;
        let dm = self.knots[j + 1] - x;
        let dp = x - self.knots[j];
        let cm = (dm * dm * dm / h - h * dm) / 6.0;
        let cp = (dp * dp * dp / h - h * dp) / 6.0;
        let mut r = vec![0.0; k];
        r[j] += am;
        r[j + 1] += ap;
        for (c, v) in r.iter_mut().enumerate() {
            *v += cm * self.second_deriv[j][c] + cp * self.second_deriv[j + 1][c];
        }
        r
    }

    fn slope_row(&self, j: usize, x: f64) -> Vec<f64> {
        let k = self.knots.len();
        let h = self.knots[j + 1] - self.knots[j];
        let dm = self.knots[j + 1] - x;
        let dp = x - self.knots[j];
        let cm = (-3.0 * dm * dm / h + h) / 6.0;
        let cp = (3.0 * dp * dp / h - h) / 6.0;
        let mut r = vec![0.0; k];
        r[j] -= 1.0 / h;
        r[j + 1] += 1.0 / h;
        for (c, v) in r.iter_mut().enumerate() {
            *v += cm * self.second_deriv[j][c] + cp * self.second_deriv[j + 1][c];
        }
        r
    }

    /// `∫ f'² = βᵀ S β` over the knot range, by three-point Gauss-Legendre
    /// quadrature per interval (exact, `f'` being quadratic there).
    pub fn first_derivative_penalty(&self) -> DMatrix<f64> {
        let k = self.knots.len();
        let nodes = [-(0.6f64.sqrt()), 0.0, 0.6f64.sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut s = DMatrix::<f64>::zeros(k, k);
        for j in 0..k - 1 {
            let (a, b) = (self.knots[j], self.knots[j + 1]);
            let half = 0.5 * (b - a);
            for (t, w) in nodes.iter().zip(weights) {
                let r = self.slope_row(j, a + half * (1.0 + t));
                for p in 0..k {
                    for q in 0..k {
                        s[(p, q)] += w * half * r[p] * r[q];
                    }
                }
            }
        }
        s
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let k = self.dim();
        let mut m = DMatrix::<f64>::zeros(x.len(), k);
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(xi).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_derivative_penalty_integrates_slope_squared() {
        let (b, _) = CrsBasis::from_knots(vec![0.0, 0.2, 0.5, 0.7, 1.0]);
        let s = b.first_derivative_penalty();
        let beta = nalgebra::DVector::from_vec(vec![0.3, -1.0, 0.8, 0.1, 0.5]);
        let exact = (beta.transpose() * &s * &beta)[0];
        // Midpoint rule on central differences of the interpolant.
        let m = 20000;
        let f = |x: f64| -> f64 { b.row(x).iter().zip(beta.iter()).map(|(r, c)| r * c).sum() };
        let h = 1.0 / m as f64;
        let approx: f64 = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                let d = (f((x + 1e-6).min(1.0)) - f((x - 1e-6).max(0.0))) / (2e-6);
                d * d * h
            })
            .sum();
        assert!((exact - approx).abs() < 1e-5 * exact, "{exact} vs {approx}");
        let ones = nalgebra::DVector::from_element(5, 1.0);
        assert!((&s * ones).norm() < 1e-12);
    }

    #[test]
    fn knots_at_quantiles() {
        let x: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let (b, _) = CrsBasis::from_data(&x, 3).unwrap();
        assert_eq!(b.knots(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn tied_quantiles_deduplicated() {
        let x = vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0];
        assert!(CrsBasis::from_data(&x, 5).is_err());
        let x = vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0];
        let (b, _) = CrsBasis::from_data(&x, 5).unwrap();
        assert!(b.dim() >= 3 && b.dim() < 5);
    }

    #[test]
    fn interpolates_knot_values_and_linear_functions() {
        let (b, s) = CrsBasis::from_knots(vec![0.0, 0.3, 0.45, 0.8, 1.0]);
        for (j, &kn) in b.knots().iter().enumerate() {
            let r = b.row(kn);
            for (c, v) in r.iter().enumerate() {
                assert!((v - if c == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let beta: Vec<f64> = b.knots().iter().map(|k| 2.0 - 3.0 * k).collect();
        let quad = nalgebra::DVector::from_vec(beta.clone());
        assert!((quad.transpose() * &s * &quad)[0].abs() < 1e-12);
        for x in [-0.5, 0.1, 0.61, 1.7] {
            let f: f64 = b.row(x).iter().zip(&beta).map(|(a, c)| a * c).sum();
            assert!((f - (2.0 - 3.0 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_matches_integrated_squared_second_derivative() {
        let (b, s) = CrsBasis::from_knots(vec![0.0, 0.2, 0.35, 0.6, 0.9, 1.0]);
        let beta = nalgebra::DVector::from_vec(vec![0.3, -1.2, 0.8, 2.0, -0.4, 0.1]);
        let quad = (beta.transpose() * &s * &beta)[0];
        // f is cubic between knots, so a central second difference is exact
        // there and two-point Gauss-Legendre integrates f''² exactly.
        let f = |x: f64| -> f64 { b.row(x).iter().zip(beta.iter()).map(|(a, c)| a * c).sum() };
        let mut integral = 0.0;
        for w in b.knots().windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            let eps = 1e-3 * (hi - lo);
            for node in [-1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()] {
                let x = mid + half * node;
                let d2 = (f(x + eps) - 2.0 * f(x) + f(x - eps)) / (eps * eps);
                integral += half * d2 * d2;
            }
        }
        assert!(
            ((integral - quad) / quad).abs() < 1e-6,
            "{integral} vs {quad}"
        );
    }
}
