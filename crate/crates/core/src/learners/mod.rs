//! From-scratch supervised learners.
//!
//! - [`tree`]: CART with Gini (classification) or squared-error (regression) splits
//! - [`forest`]: bagged random forest with per-split feature sampling
//! - [`gbm`]: gradient boosting on logistic loss with Newton leaf values
//! - [`logit`]: IRLS logistic regression with backward AIC selection
//! - [`mlp`]: small feed-forward regressor trained by mini-batch gradient descent
//! - [`grid`]: stratified k-fold grid search over ensemble size and depth
//! - [`serial`]: versioned JSON documents for fitted models

pub mod forest;
pub mod gbm;
pub mod grid;
pub mod logit;
pub mod mlp;
pub mod serial;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{fit_random_forest, predict_proba_forest, Bootstrap, ForestModel, ForestParams, MTry};
pub use gbm::{fit_gbm, GbmModel, GbmParams};
pub use grid::{grid_search, Grid, GridResult, LearnerSpec};
pub use logit::{fit_logit_aic, LogitModel};
pub use mlp::{fit_mlp, Activation, MlpConfig, MlpModel, Optimizer};
pub use tree::{fit_tree, DecisionTree, FeatureKind, Split, TreeNode, TreeParams};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data is empty")]
    EmptyData,
    #[error("{what}: expected {expected} values, got {got}")]
    ArityMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("labels must be 0 or 1 (found {0})")]
    BadLabel(u8),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("too few positive labels ({positives}) for {folds}-fold cross-validation")]
    TooFewPositives { positives: usize, folds: usize },
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("linear system is singular")]
    Singular,
    #[error("unsupported model document: {0}")]
    Document(String),
}

impl LearnError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, LearnError::NonFiniteLoss { .. } | LearnError::Singular)
    }
}

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LearnError> {
        if data.len() != rows * cols {
            return Err(LearnError::ArityMismatch {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LearnError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LearnError::ArityMismatch {
                    what: "matrix row",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            data.extend(cols.iter().map(|&j| self.get(i, j)));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }
}

pub(crate) fn check_xy(x: &Matrix, y: &[u8]) -> Result<(), LearnError> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(LearnError::EmptyData);
    }
    if y.len() != x.rows() {
        return Err(LearnError::ArityMismatch {
            what: "labels",
            expected: x.rows(),
            got: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&v| v > 1) {
        return Err(LearnError::BadLabel(bad));
    }
    Ok(())
}

pub(crate) fn check_arity(expected: usize, x: &[f64]) -> Result<(), LearnError> {
    if x.len() != expected {
        return Err(LearnError::ArityMismatch {
            what: "feature vector",
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// SplitMix64 finaliser; spreads a (seed, index) pair into an independent stream seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of probabilities `p` against `y`, with clipping.
pub fn log_loss(p: &[f64], y: &[u8]) -> f64 {
    let eps = 1e-15;
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / p.len().max(1) as f64
}

/// Normalises non-negative weights to sum 1; all-zero input becomes uniform.
pub(crate) fn normalize_importances(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 || !total.is_finite() {
        return vec![1.0 / raw.len().max(1) as f64; raw.len()];
    }
    raw.iter().map(|v| v.max(0.0) / total).collect()
}

/// Any fitted binary classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Forest(ForestModel),
    Gbm(GbmModel),
    Logit(LogitModel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Forest,
    Gbm,
    Logit,
}

impl Classifier {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, LearnError> {
        match self {
            Classifier::Forest(m) => predict_proba_forest(m, x),
            Classifier::Gbm(m) => m.predict_proba(x),
            Classifier::Logit(m) => m.predict_proba(x),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Forest(m) => m.n_features,
            Classifier::Gbm(m) => m.n_features,
            Classifier::Logit(m) => m.n_features,
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            Classifier::Forest(_) => LearnerKind::Forest,
            Classifier::Gbm(_) => LearnerKind::Gbm,
            Classifier::Logit(_) => LearnerKind::Logit,
        }
    }

    /// Normalised importances where the learner provides them.
    pub fn feature_importances(&self) -> Option<&[f64]> {
        match self {
            Classifier::Forest(m) => Some(&m.feature_importances),
            Classifier::Gbm(m) => Some(&m.feature_importances),
            Classifier::Logit(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_shapes() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.column(1), vec![2.0, 4.0, 6.0]);
        assert_eq!(m.select_rows(&[2, 0]).row(0), &[5.0, 6.0]);
        assert_eq!(m.select_cols(&[1]).column(0), vec![2.0, 4.0, 6.0]);
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
