use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GammError, Result};

use super::reml::Reml;

/// Box on `ln λ` searched by the optimizer.
pub const LOG_LAMBDA_MIN: f64 = -16.118095650958317; // ln 1e-7
pub const LOG_LAMBDA_MAX: f64 = 23.025850929940457; // ln 1e10

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Common starting value of every λ, one run per entry.
    pub starts: Vec<f64>,
    pub max_iter: usize,
    pub score_tol: f64,
    pub grad_tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            starts: vec![1e-2, 1.0, 1e2],
            max_iter: 200,
            score_tol: 1e-8,
            grad_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: f64,
    pub log_lambdas: Vec<f64>,
    pub score: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub lambdas: Vec<f64>,
    pub score: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub starts: Vec<StartOutcome>,
}

fn clamp(v: f64) -> f64 {
    v.clamp(LOG_LAMBDA_MIN, LOG_LAMBDA_MAX)
}

/// Gradient with components that push against an active bound removed.
fn projected(x: &[f64], g: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let at_low = xi <= LOG_LAMBDA_MIN && gi > 0.0;
            let at_high = xi >= LOG_LAMBDA_MAX && gi < 0.0;
            if at_low || at_high {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Evaluated {
    x: Vec<f64>,
    score: f64,
    grad: Vec<f64>,
}

fn eval_at(reml: &Reml, x: &[f64], count: &mut usize) -> Result<Evaluated> {
    *count += 1;
    let lambdas: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let e = reml.evaluate(&lambdas, true)?;
    if !e.score.is_finite() {
        return Err(GammError::Numerical(format!(
            "non-finite REML score at log λ = {x:?}"
        )));
    }
    Ok(Evaluated {
        x: x.to_vec(),
        score: e.score,
        grad: e.gradient,
    })
}

/// Projected BFGS on `ln λ` from one common starting value.
fn run_start(reml: &Reml, start: f64, settings: &OptimizerSettings) -> Result<(StartOutcome, usize)> {
    let m = reml.n_slots();
    let mut evals = 0;
    let mut cur = eval_at(reml, &vec![clamp(start.ln()); m], &mut evals)?;
    let mut h = identity(m);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        let pg = projected(&cur.x, &cur.grad);
        if inf_norm(&pg) < settings.grad_tol {
            converged = true;
            break;
        }
        let free: Vec<bool> = pg
            .iter()
            .zip(&cur.grad)
            .map(|(p, g)| *p != 0.0 || *g == 0.0)
            .collect();
        let mut dir = vec![0.0; m];
        for i in 0..m {
            if !free[i] {
                continue;
            }
            for j in 0..m {
                if free[j] {
                    dir[i] -= h[i][j] * cur.grad[j];
                }
            }
        }
        let mut slope: f64 = dir.iter().zip(&cur.grad).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            h = identity(m);
            dir = pg.iter().map(|g| -g).collect();
            slope = -pg.iter().map(|g| g * g).sum::<f64>();
        }
        let largest = inf_norm(&dir);
        if largest > 5.0 {
            let s = 5.0 / largest;
            dir.iter_mut().for_each(|d| *d *= s);
            slope *= s;
        }

        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let trial: Vec<f64> = cur.x.iter().zip(&dir).map(|(x, d)| clamp(x + alpha * d)).collect();
            match eval_at(reml, &trial, &mut evals) {
                Ok(e) if e.score <= cur.score + 1e-4 * alpha * slope => {
                    next = Some(e);
                    break;
                }
                Ok(_) | Err(GammError::RankDeficient(_)) | Err(GammError::Numerical(_)) => {
                    alpha *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        let Some(next) = next else {
            // No decrease along the direction: accept the point if it is
            // stationary to working precision, otherwise stop flagged.
            converged = inf_norm(&pg) < settings.grad_tol.sqrt();
            break;
        };

        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let improvement = cur.score - next.score;
        let newly_bound = next
            .x
            .iter()
            .zip(&cur.x)
            .any(|(a, b)| (*a <= LOG_LAMBDA_MIN || *a >= LOG_LAMBDA_MAX) && a != b);
        if newly_bound {
            h = identity(m);
        } else if sy > 1e-10 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        cur = next;
        let pg = projected(&cur.x, &cur.grad);
        if improvement.abs() < settings.score_tol && inf_norm(&pg) < settings.grad_tol {
            converged = true;
            break;
        }
    }
    Ok((
        StartOutcome {
            start,
            log_lambdas: cur.x,
            score: cur.score,
            iterations,
            converged,
        },
        evals,
    ))
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|j| f64::from(u8::from(i == j))).collect())
        .collect()
}

/// Inverse-Hessian BFGS update.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let m = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..m).map(|i| (0..m).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..m {
        for j in 0..m {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Minimizes the REML score over `ln λ` from several starts; ties between
/// starts go to the earlier one.
pub fn optimize_lambdas(reml: &Reml, settings: &OptimizerSettings) -> Result<OptimizerReport> {
    if reml.n_slots() == 0 {
        let score = reml.score(&[])?;
        return Ok(OptimizerReport {
            lambdas: vec![],
            score,
            converged: true,
            iterations: 0,
            evaluations: 1,
            starts: vec![],
        });
    }
    if settings.starts.is_empty() {
        return Err(GammError::InvalidArgument("no optimizer starts given".into()));
    }
    let runs: Vec<Result<(StartOutcome, usize)>> = settings
        .starts
        .par_iter()
        .map(|&s| run_start(reml, s, settings))
        .collect();
    let mut outcomes = Vec::new();
    let mut evaluations = 0;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok((o, e)) => {
                evaluations += e;
                outcomes.push(o);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.score.total_cmp(&b.1.score).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(first_err.unwrap_or_else(|| GammError::Numerical("no start succeeded".into())));
    };
    let chosen = &outcomes[best];
    Ok(OptimizerReport {
        lambdas: chosen.log_lambdas.iter().map(|v| v.exp()).collect(),
        score: chosen.score,
        converged: chosen.converged,
        iterations: chosen.iterations,
        evaluations,
        starts: outcomes.clone(),
    })
}
