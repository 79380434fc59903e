use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{GammError, Result};
use crate::linalg::{psd_rank, sorted_eigen, RANK_TOL};

use super::pls::{PlsFit, PlsProblem};

/// How `log det₊` of one block's `Σ λ_j S_j` is evaluated.
#[derive(Debug, Clone)]
enum BlockDet {
    /// A single slot: `rank · ln λ + Σ ln eig₊(S)`.
    Single {
        slot: usize,
        rank: usize,
        base: f64,
    },
    /// All penalties diagonal: the determinant is a product over entries.
    Diagonal {
        slots: Vec<usize>,
        diags: Vec<Vec<f64>>,
        support: Vec<usize>,
    },
    /// Overlapping penalties: eigen decomposition at each λ.
    General {
        slots: Vec<usize>,
        matrices: Vec<DMatrix<f64>>,
        rank: usize,
    },
}

/// Penalty structure grouped by column block, for `log det₊(S_λ)` and its
/// derivatives with respect to `ln λ`.
#[derive(Debug, Clone)]
pub struct PenaltyDeterminant {
    blocks: Vec<BlockDet>,
    n_slots: usize,
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

impl PenaltyDeterminant {
    pub fn new(problem: &PlsProblem) -> Self {
        let mut groups: Vec<(Range<usize>, Vec<usize>)> = Vec::new();
        for (i, p) in problem.penalties().iter().enumerate() {
            match groups.iter_mut().find(|(r, _)| *r == p.columns) {
                Some((_, members)) => members.push(i),
                None => groups.push((p.columns.clone(), vec![i])),
            }
        }
        let pens = problem.penalties();
        let blocks = groups
            .into_iter()
            .map(|(_, members)| {
                if members.len() == 1 {
                    let p = &pens[members[0]];
                    let (values, _) = sorted_eigen(&p.matrix);
                    let rank = psd_rank(&values, RANK_TOL);
                    let base = values[..rank].iter().map(|v| v.ln()).sum();
                    BlockDet::Single {
                        slot: p.slot,
                        rank,
                        base,
                    }
                } else if members.iter().all(|&i| is_diagonal(&pens[i].matrix)) {
                    let diags: Vec<Vec<f64>> = members
                        .iter()
                        .map(|&i| pens[i].matrix.diagonal().iter().copied().collect())
                        .collect();
                    let w = diags[0].len();
                    let total: Vec<f64> = (0..w).map(|c| diags.iter().map(|d| d[c]).sum()).collect();
                    let max = total.iter().cloned().fold(0.0, f64::max);
                    let support = (0..w).filter(|&c| total[c] > RANK_TOL * max).collect();
                    BlockDet::Diagonal {
                        slots: members.iter().map(|&i| pens[i].slot).collect(),
                        diags,
                        support,
                    }
                } else {
                    let matrices: Vec<DMatrix<f64>> =
                        members.iter().map(|&i| pens[i].matrix.clone()).collect();
                    let mut sum = matrices[0].clone();
                    for m in &matrices[1..] {
                        sum += m;
                    }
                    let rank = psd_rank(&sorted_eigen(&sum).0, RANK_TOL);
                    BlockDet::General {
                        slots: members.iter().map(|&i| pens[i].slot).collect(),
                        matrices,
                        rank,
                    }
                }
            })
            .collect();
        PenaltyDeterminant {
            blocks,
            n_slots: problem.n_slots(),
        }
    }

    /// `log det₊(S_λ)` and its gradient in `ln λ`.
    pub fn eval(&self, lambdas: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; self.n_slots];
        for b in &self.blocks {
            match b {
                BlockDet::Single { slot, rank, base } => {
                    value += *rank as f64 * lambdas[*slot].ln() + base;
                    grad[*slot] += *rank as f64;
                }
                BlockDet::Diagonal {
                    slots,
                    diags,
                    support,
                } => {
                    for &c in support {
                        let total: f64 = slots
                            .iter()
                            .zip(diags)
                            .map(|(&s, d)| lambdas[s] * d[c])
                            .sum();
                        value += total.ln();
                        for (&s, d) in slots.iter().zip(diags) {
                            grad[s] += lambdas[s] * d[c] / total;
                        }
                    }
                }
                BlockDet::General {
                    slots,
                    matrices,
                    rank,
                } => {
                    let mut sum = lambdas[slots[0]] * &matrices[0];
                    for (&s, m) in slots.iter().zip(matrices).skip(1) {
                        sum += lambdas[s] * m;
                    }
                    let (values, vectors) = sorted_eigen(&sum);
                    for i in 0..*rank {
                        let e = values[i].max(f64::MIN_POSITIVE);
                        value += e.ln();
                        let u = vectors.column(i);
                        for (&s, m) in slots.iter().zip(matrices) {
                            grad[s] += lambdas[s] * (u.transpose() * m * u)[0] / e;
                        }
                    }
                }
            }
        }
        (value, grad)
    }
}

/// Everything the REML criterion needs about one trial λ.
#[derive(Debug, Clone)]
pub struct RemlEval {
    pub score: f64,
    pub gradient: Vec<f64>,
    pub fit: PlsFit,
    pub sigma2: f64,
}

/// Restricted likelihood criterion on the whitened scale (lower is better):
/// `½[(n−M_p)·ln(2πσ̂²) + (n−M_p) + ln|X̃ᵀX̃+S_λ| − ln|S_λ|₊]`, σ̂² = D/(n−M_p).
#[derive(Debug, Clone)]
pub struct Reml {
    pub problem: PlsProblem,
    det: PenaltyDeterminant,
    null_dim: usize,
    /// Added to every score, e.g. the AR(1) Jacobian term.
    offset: f64,
}

impl Reml {
    pub fn new(problem: PlsProblem, null_dim: usize, offset: f64) -> Result<Self> {
        if null_dim >= problem.n_rows() {
            return Err(GammError::InvalidArgument(format!(
                "{} unpenalized dimensions leave no residual degrees of freedom",
                null_dim
            )));
        }
        let det = PenaltyDeterminant::new(&problem);
        Ok(Reml {
            problem,
            det,
            null_dim,
            offset,
        })
    }

    pub fn n_slots(&self) -> usize {
        self.problem.n_slots()
    }

    pub fn null_dim(&self) -> usize {
        self.null_dim
    }

    pub fn score(&self, lambdas: &[f64]) -> Result<f64> {
        self.evaluate(lambdas, false).map(|e| e.score)
    }

    /// Score and its exact gradient with respect to `ln λ`.
    pub fn evaluate(&self, lambdas: &[f64], with_gradient: bool) -> Result<RemlEval> {
        let fit = self.problem.solve(lambdas)?;
        let n = self.problem.n_rows() as f64;
        let df = n - self.null_dim as f64;
        if !(fit.deviance > 0.0) {
            return Err(GammError::Numerical(
                "penalized deviance is zero: the model interpolates the data".into(),
            ));
        }
        let sigma2 = fit.deviance / df;
        let (log_det_s, det_grad) = self.det.eval(lambdas);
        let score = 0.5 * (df * (2.0 * PI * sigma2).ln() + df + fit.log_det_a - log_det_s)
            + self.offset;
        let mut gradient = Vec::new();
        if with_gradient && self.n_slots() > 0 {
            let pens = self.problem.penalties();
            let ranges: Vec<Range<usize>> = pens.iter().map(|p| p.columns.clone()).collect();
            let inv_blocks = fit.a_inverse_blocks(&ranges);
            gradient = det_grad.iter().map(|g| -0.5 * g).collect();
            for (p, inv) in pens.iter().zip(&inv_blocks) {
                let lam = lambdas[p.slot];
                let trace: f64 = inv.component_mul(&p.matrix).sum();
                let qf = p.quadratic_form(&fit.beta);
                gradient[p.slot] += 0.5 * lam * (df * qf / fit.deviance + trace);
            }
        }
        Ok(RemlEval {
            score,
            gradient,
            fit,
            sigma2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::pls::SlotPenalty;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        }
    }

    fn instance(seed: u64) -> Reml {
        let mut rng = lcg(seed);
        let (n, p) = (60, 9);
        let x = DMatrix::from_fn(n, p, |_, _| rng());
        let y: Vec<f64> = (0..n).map(|_| rng()).collect();
        let a = DMatrix::from_fn(2, 4, |_, _| rng());
        let b = DMatrix::from_fn(4, 4, |_, _| rng());
        let c = DMatrix::from_fn(4, 4, |_, _| rng());
        let pens = vec![
            SlotPenalty::new(0, 1..5, a.transpose() * &a),
            SlotPenalty::new(1, 5..9, b.transpose() * &b),
            SlotPenalty::new(2, 5..9, c.transpose() * &c),
        ];
        let prob = PlsProblem::from_parts(&x, &y, pens, 3, vec!["t".into(); p]).unwrap();
        Reml::new(prob, 1 + 2, 0.0).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let reml = instance(5);
        let rho = [0.3f64, -1.2, 2.0];
        let lam: Vec<f64> = rho.iter().map(|r| r.exp()).collect();
        let e = reml.evaluate(&lam, true).unwrap();
        for j in 0..3 {
            let h = 1e-5;
            let mut up = rho;
            let mut dn = rho;
            up[j] += h;
            dn[j] -= h;
            let f = |r: [f64; 3]| reml.score(&r.map(f64::exp)).unwrap();
            let fd = (f(up) - f(dn)) / (2.0 * h);
            assert!((fd - e.gradient[j]).abs() < 1e-6, "slot {j}: {fd} vs {}", e.gradient[j]);
        }
    }

    #[test]
    fn invariant_to_slot_order() {
        let mut rng = lcg(9);
        let (n, p) = (40, 6);
        let x = DMatrix::from_fn(n, p, |_, _| rng());
        let y: Vec<f64> = (0..n).map(|_| rng()).collect();
        let s1 = DMatrix::<f64>::identity(2, 2);
        let a = DMatrix::from_fn(3, 3, |_, _| rng());
        let s2 = a.transpose() * &a;
        let make = |swap: bool| {
            let (i, j) = if swap { (1, 0) } else { (0, 1) };
            let pens = vec![
                SlotPenalty::new(i, 1..3, s1.clone()),
                SlotPenalty::new(j, 3..6, s2.clone()),
            ];
            Reml::new(
                PlsProblem::from_parts(&x, &y, pens, 2, vec!["t".into(); p]).unwrap(),
                1,
                0.0,
            )
            .unwrap()
        };
        let a = make(false).score(&[0.7, 3.0]).unwrap();
        let b = make(true).score(&[3.0, 0.7]).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn parametric_variance_is_classical() {
        let mut rng = lcg(3);
        let (n, p) = (25, 3);
        let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng() });
        let y: Vec<f64> = (0..n).map(|_| rng()).collect();
        let reml = Reml::new(
            PlsProblem::from_parts(&x, &y, vec![], 0, vec!["t".into(); p]).unwrap(),
            p,
            0.0,
        )
        .unwrap();
        let e = reml.evaluate(&[], false).unwrap();
        let yv = nalgebra::DVector::from_vec(y);
        let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * &yv)).unwrap();
        let rss = (&yv - &x * beta).norm_squared();
        assert!((e.sigma2 - rss / (n - p) as f64).abs() < 1e-12);
    }
}
