//! Synthetic data with known truth: AR(1) noise, random spline curves and
//! study-shaped scenarios.
//!
//! All randomness comes from ChaCha8 seeded with the scenario seed. Streams
//! are split with `set_stream`: stream 0 draws design covariates, stream 1
//! random effects and curves, and stream `1000 + s` the noise of series `s`
//! (series are numbered in row order, one per subject or per subject×item
//! event).

mod scenario;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GammError, Result};

pub use scenario::{generate, load_scenario, CurveSet, Design, Generated, GroundTruth, Scenario};

pub const DESIGN_STREAM: u64 = 0;
pub const EFFECTS_STREAM: u64 = 1;
pub const NOISE_STREAM_BASE: u64 = 1000;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// AR(1) draws `e_t = ρ e_{t−1} + ε_t`, `ε_t ~ N(0, sd²)`, with `e_0` from
/// the stationary law `N(0, sd²/(1 − ρ²))`.
pub fn simulate_ar1(n: usize, rho: f64, sd: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng_for(seed, DESIGN_STREAM);
    ar1_from(&mut rng, n, rho, sd)
}

pub(crate) fn ar1_from(rng: &mut ChaCha8Rng, n: usize, rho: f64, sd: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(GammError::InvalidArgument(format!(
            "AR(1) coefficient must lie in [0, 1), got {rho}"
        )));
    }
    if !(sd > 0.0) {
        return Err(GammError::InvalidArgument(format!(
            "noise sd must be positive, got {sd}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let mut e = normal(rng) * sd / (1.0 - rho * rho).sqrt();
    out.push(e);
    for _ in 1..n {
        e = rho * e + sd * normal(rng);
        out.push(e);
    }
    Ok(out)
}

/// Deterministic test functions on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Zero,
    Constant { value: f64 },
    Linear { slope: f64 },
    Sine { amplitude: f64, cycles: f64 },
    /// `amplitude · 4(u − ½)²`.
    UShape { amplitude: f64 },
    Logistic { amplitude: f64, steepness: f64 },
}

impl Shape {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Shape::Zero => 0.0,
            Shape::Constant { value } => value,
            Shape::Linear { slope } => slope * u,
            Shape::Sine { amplitude, cycles } => {
                amplitude * (2.0 * std::f64::consts::PI * cycles * u).sin()
            }
            Shape::UShape { amplitude } => amplitude * 4.0 * (u - 0.5) * (u - 0.5),
            Shape::Logistic {
                amplitude,
                steepness,
            } => amplitude / (1.0 + (-steepness * (u - 0.5)).exp()),
        }
    }
}

/// Clamped uniform cubic B-spline basis with `k` functions on `[0, 1]`.
fn bspline_knots(k: usize) -> Vec<f64> {
    let interior = k - 4;
    let mut t = vec![0.0; 4];
    t.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
    t.extend([1.0; 4]);
    t
}

fn bspline_row(knots: &[f64], k: usize, u: f64) -> Vec<f64> {
    let u = u.clamp(0.0, 1.0);
    // Degree-zero indicator, with the right end assigned to the last span.
    let n_spans = knots.len() - 1;
    let mut b = vec![0.0; n_spans];
    let span = (0..n_spans)
        .rev()
        .find(|&i| knots[i] <= u && knots[i] < knots[i + 1])
        .unwrap_or(3);
    b[span] = 1.0;
    for d in 1..=3 {
        for i in 0..n_spans - d {
            let left_den = knots[i + d] - knots[i];
            let right_den = knots[i + d + 1] - knots[i + 1];
            let left = if left_den > 0.0 {
                (u - knots[i]) / left_den * b[i]
            } else {
                0.0
            };
            let right = if right_den > 0.0 {
                (knots[i + d + 1] - u) / right_den * b[i + 1]
            } else {
                0.0
            };
            b[i] = left + right;
        }
    }
    b.truncate(k);
    b
}

/// Per-level random curves on a shared cubic B-spline basis over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomCurves {
    pub k: usize,
    /// One coefficient vector per level.
    pub coefficients: Vec<Vec<f64>>,
}

impl RandomCurves {
    pub fn eval(&self, level: usize, u: f64) -> f64 {
        let row = bspline_row(&bspline_knots(self.k), self.k, u);
        row.iter()
            .zip(&self.coefficients[level])
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn n_levels(&self) -> usize {
        self.coefficients.len()
    }
}

pub fn simulate_random_curves(levels: usize, k: usize, scale: f64, seed: u64) -> Result<RandomCurves> {
    let mut rng = rng_for(seed, EFFECTS_STREAM);
    random_curves_from(&mut rng, levels, k, scale)
}

pub(crate) fn random_curves_from(
    rng: &mut ChaCha8Rng,
    levels: usize,
    k: usize,
    scale: f64,
) -> Result<RandomCurves> {
    if k < 4 {
        return Err(GammError::InvalidArgument(format!(
            "random curves need k ≥ 4 basis functions, got {k}"
        )));
    }
    if !(scale >= 0.0) {
        return Err(GammError::InvalidArgument(format!(
            "curve scale must be nonnegative, got {scale}"
        )));
    }
    let coefficients = (0..levels)
        .map(|_| (0..k).map(|_| scale * normal(rng)).collect())
        .collect();
    Ok(RandomCurves { k, coefficients })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bspline_partition_of_unity() {
        let knots = bspline_knots(7);
        for i in 0..=20 {
            let u = i as f64 / 20.0;
            let s: f64 = bspline_row(&knots, 7, u).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "{u}: {s}");
        }
    }

    #[test]
    fn ar1_rejects_unit_root() {
        assert!(simulate_ar1(10, 1.0, 1.0, 1).is_err());
        assert!(simulate_ar1(10, 0.5, 0.0, 1).is_err());
    }

    #[test]
    fn curves_zero_scale_and_determinism() {
        let c = simulate_random_curves(5, 6, 0.0, 3).unwrap();
        assert!((0..5).all(|l| c.eval(l, 0.37) == 0.0));
        let a = simulate_random_curves(5, 6, 1.0, 3).unwrap();
        let b = simulate_random_curves(5, 6, 1.0, 3).unwrap();
        assert_eq!(a, b);
    }
}
