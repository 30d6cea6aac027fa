//! Logistic regression fitted by IRLS with backward stepwise AIC selection.
//!
//! Features are z-scored before fitting and constant columns are dropped.
//! Starting from all usable features, the search repeatedly removes the one
//! feature whose removal gives the lowest AIC (`2k - 2 log L`, `k` counting
//! the intercept) and stops once no removal improves on the current model.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_arity, check_xy, sigmoid, LearnError, Matrix};

pub const MAX_IRLS_ITER: usize = 100;
pub const GRADIENT_TOL: f64 = 1e-8;
/// Standardised coefficients beyond this magnitude are taken as separation.
pub const SEPARATION_BOUND: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitModel {
    pub n_features: usize,
    /// Selected columns of the original feature matrix.
    pub features: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Intercept first, then one coefficient per selected (standardised) feature.
    pub coefficients: Vec<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub converged: bool,
    /// Set when coefficients diverged (perfect or quasi-perfect separation).
    pub separated: bool,
    /// Every subset evaluated during the search with its AIC.
    pub visited: Vec<(Vec<usize>, f64)>,
}

impl LogitModel {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, LearnError> {
        check_arity(self.n_features, x)?;
        let mut z = self.coefficients[0];
        for (k, &j) in self.features.iter().enumerate() {
            z += self.coefficients[k + 1] * (x[j] - self.means[k]) / self.scales[k];
        }
        Ok(sigmoid(z))
    }
}

/// Log-likelihood of `beta` (intercept first) for design `x` without intercept column.
pub fn log_likelihood(x: &Matrix, y: &[u8], beta: &[f64]) -> f64 {
    (0..x.rows())
        .map(|i| {
            let z = linear(x.row(i), beta);
            // log(1 + e^z) computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            y[i] as f64 * z - softplus
        })
        .sum()
}

/// Gradient of [`log_likelihood`] with respect to `beta`.
pub fn gradient(x: &Matrix, y: &[u8], beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for i in 0..x.rows() {
        let row = x.row(i);
        let r = y[i] as f64 - sigmoid(linear(row, beta));
        g[0] += r;
        for (gj, xj) in g[1..].iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    g
}

#[inline]
fn linear(row: &[f64], beta: &[f64]) -> f64 {
    beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()
}

pub struct IrlsFit {
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub separated: bool,
}

/// Newton/IRLS iterations with step halving; `x` excludes the intercept column.
pub fn irls(x: &Matrix, y: &[u8]) -> Result<IrlsFit, LearnError> {
    let k = x.cols() + 1;
    let mut beta = vec![0.0; k];
    let mut ll = log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut separated = false;
    for _ in 0..MAX_IRLS_ITER {
        let g = gradient(x, y, &beta);
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) <= GRADIENT_TOL {
            converged = true;
            break;
        }
        let mut h = DMatrix::<f64>::zeros(k, k);
        let mut design = vec![1.0; k];
        for i in 0..x.rows() {
            design[1..].copy_from_slice(x.row(i));
            let p = sigmoid(linear(x.row(i), &beta));
            let w = p * (1.0 - p);
            for a in 0..k {
                let wa = w * design[a];
                for b in a..k {
                    h[(a, b)] += wa * design[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        let rhs = DVector::from_vec(g);
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => {
                // Nearly singular information matrix: tiny ridge keeps the step finite.
                let ridge = h + DMatrix::identity(k, k) * 1e-8;
                ridge.cholesky().ok_or(LearnError::Singular)?.solve(&rhs)
            }
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let trial_ll = log_likelihood(x, y, &trial);
            if trial_ll >= ll {
                beta = trial;
                ll = trial_ll;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            separated = true;
            break;
        }
        if !improved {
            break;
        }
    }
    if !converged && !separated {
        let g = gradient(x, y, &beta);
        converged = g.iter().map(|v| v.abs()).fold(0.0, f64::max) <= GRADIENT_TOL;
    }
    Ok(IrlsFit {
        beta,
        log_likelihood: ll,
        converged,
        separated,
    })
}

pub fn aic(log_likelihood: f64, n_coefficients: usize) -> f64 {
    2.0 * n_coefficients as f64 - 2.0 * log_likelihood
}

/// Fits logistic regression with backward AIC elimination.
pub fn fit_logit_aic(x: &Matrix, y: &[u8]) -> Result<LogitModel, LearnError> {
    check_xy(x, y)?;
    let n = x.rows() as f64;
    let mut usable = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for j in 0..x.cols() {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var > 1e-24 {
            usable.push(j);
            means.push(mean);
            scales.push(var.sqrt());
        }
    }
    if usable.len() < x.cols() {
        warn!("logit: dropped {} constant columns", x.cols() - usable.len());
    }
    let mut data = Vec::with_capacity(x.rows() * usable.len());
    for i in 0..x.rows() {
        data.extend(usable.iter().enumerate().map(|(k, &j)| (x.get(i, j) - means[k]) / scales[k]));
    }
    let z = Matrix::new(x.rows(), usable.len(), data)?;

    let fit_subset = |subset: &[usize]| -> Result<(IrlsFit, f64), LearnError> {
        let cols: Vec<usize> = subset.iter().map(|j| usable.iter().position(|u| u == j).expect("usable")).collect();
        let fit = irls(&z.select_cols(&cols), y)?;
        let a = aic(fit.log_likelihood, subset.len() + 1);
        Ok((fit, a))
    };

    let mut current: Vec<usize> = usable.clone();
    let (mut best_fit, mut best_aic) = fit_subset(&current)?;
    let mut visited = vec![(current.clone(), best_aic)];
    while !current.is_empty() {
        let mut round_best: Option<(Vec<usize>, IrlsFit, f64)> = None;
        for drop in 0..current.len() {
            let mut subset = current.clone();
            subset.remove(drop);
            let (fit, a) = fit_subset(&subset)?;
            visited.push((subset.clone(), a));
            if round_best.as_ref().is_none_or(|(_, _, b)| a < *b) {
                round_best = Some((subset, fit, a));
            }
        }
        match round_best {
            Some((subset, fit, a)) if a < best_aic => {
                current = subset;
                best_fit = fit;
                best_aic = a;
            }
            _ => break,
        }
    }

    let keep: Vec<usize> = current.iter().map(|j| usable.iter().position(|u| u == j).expect("usable")).collect();
    if best_fit.separated {
        warn!("logit: coefficients diverged; data appear separable");
    }
    Ok(LogitModel {
        n_features: x.cols(),
        features: current,
        means: keep.iter().map(|&k| means[k]).collect(),
        scales: keep.iter().map(|&k| scales[k]).collect(),
        coefficients: best_fit.beta,
        log_likelihood: best_fit.log_likelihood,
        aic: best_aic,
        converged: best_fit.converged,
        separated: best_fit.separated,
        visited,
    })
}
