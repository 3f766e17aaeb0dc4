//! Five-parameter logistic mapping from objective scores to the MOS scale,
//! fitted by Levenberg-Marquardt.

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::stats::{mean, sample_variance};

pub const MAX_EVALUATIONS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-10;
pub const MIN_SAMPLES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub beta: [f64; 5],
}

impl LogisticParams {
    /// `b1 (1/2 - 1/(1 + exp(b2 (q - b3)))) + b4 q + b5`
    pub fn apply(&self, q: f64) -> f64 {
        let [b1, b2, b3, b4, b5] = self.beta;
        // 1/2 - 1/(1 + e^z) = tanh(z / 2) / 2, without overflow.
        b1 * 0.5 * (0.5 * b2 * (q - b3)).tanh() + b4 * q + b5
    }

    fn gradient(&self, q: f64) -> Vector5<f64> {
        let [b1, b2, b3, _, _] = self.beta;
        let th = (0.5 * b2 * (q - b3)).tanh();
        let dsig = 0.25 * (1.0 - th * th);
        Vector5::new(0.5 * th, b1 * dsig * (q - b3), -b1 * dsig * b2, q, 1.0)
    }

    /// The mapping `R = q`.
    pub fn identity() -> Self {
        LogisticParams {
            beta: [0.0, 1.0, 0.0, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub mapped: Vec<f64>,
    pub sse: f64,
    pub evaluations: usize,
}

fn sse(params: &LogisticParams, scores: &[f64], mos: &[f64]) -> f64 {
    scores
        .iter()
        .zip(mos)
        .map(|(&q, &m)| (params.apply(q) - m).powi(2))
        .sum()
}

/// Standard starting point: `b1 = range(MOS)`, `b2 = 1/std(Q)`,
/// `b3 = mean(Q)`, `b4 = 0`, `b5 = mean(MOS)`.
pub fn initial_params(scores: &[f64], mos: &[f64]) -> LogisticParams {
    let lo = mos.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    LogisticParams {
        beta: [
            hi - lo,
            1.0 / sample_variance(scores).sqrt(),
            mean(scores),
            0.0,
            mean(mos),
        ],
    }
}

/// Least-squares fit of the logistic mapping. The result never has a larger
/// squared error than the standard initialization or the identity mapping.
pub fn fit_logistic5(scores: &[f64], mos: &[f64]) -> Result<LogisticFit> {
    if scores.len() != mos.len() {
        return Err(Error::Statistics(format!(
            "length mismatch: {} scores vs {} MOS values",
            scores.len(),
            mos.len()
        )));
    }
    if scores.len() < MIN_SAMPLES {
        return Err(Error::Statistics(format!(
            "logistic fit needs at least {MIN_SAMPLES} samples, got {}",
            scores.len()
        )));
    }
    if scores.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic fit input"));
    }
    if scores.iter().all(|&q| q == scores[0]) {
        return Err(Error::Statistics("objective scores are constant".into()));
    }

    let mut budget = MAX_EVALUATIONS;
    let mut best: Option<(LogisticParams, f64)> = None;
    for (i, start) in [initial_params(scores, mos), LogisticParams::identity()]
        .into_iter()
        .enumerate()
    {
        // Split the budget evenly between the two starts.
        let share = if i == 0 { budget / 2 } else { budget };
        let (p, s, used) = levenberg_marquardt(start, scores, mos, share);
        budget -= used;
        if best.is_none_or(|(_, bs)| s < bs) {
            best = Some((p, s));
        }
    }
    let (params, sse) = best.expect("two starts evaluated");
    Ok(LogisticFit {
        mapped: scores.iter().map(|&q| params.apply(q)).collect(),
        params,
        sse,
        evaluations: MAX_EVALUATIONS - budget,
    })
}

/// Returns the best parameters found, their squared error and the number of
/// objective evaluations used. Steps are only ever accepted when they lower
/// the objective.
fn levenberg_marquardt(
    start: LogisticParams,
    scores: &[f64],
    mos: &[f64],
    max_evals: usize,
) -> (LogisticParams, f64, usize) {
    let mut params = start;
    let mut current = sse(&params, scores, mos);
    let mut evals = 1;
    let mut lambda = 1e-3;
    let mut stalled = 0;
    while evals < max_evals && current > 0.0 {
        let mut jtj = Matrix5::zeros();
        let mut jtr = Vector5::zeros();
        for (&q, &m) in scores.iter().zip(mos) {
            let g = params.gradient(q);
            let r = params.apply(q) - m;
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let floor = 1e-12 * jtj.trace().max(f64::MIN_POSITIVE);
        let mut improved = false;
        while evals < max_evals {
            let mut damped = jtj;
            for d in 0..5 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(floor);
            }
            let step = match damped.cholesky() {
                Some(c) => c.solve(&(-jtr)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break;
                    }
                    continue;
                }
            };
            let mut trial = params;
            for (b, s) in trial.beta.iter_mut().zip(step.iter()) {
                *b += s;
            }
            let value = sse(&trial, scores, mos);
            evals += 1;
            if value.is_finite() && value < current {
                let gain = current - value;
                params = trial;
                current = value;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                stalled = if gain <= TOLERANCE * current.max(TOLERANCE) {
                    stalled + 1
                } else {
                    0
                };
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved || stalled >= 3 {
            break;
        }
    }
    (params, current, evals)
}
