//! Gradient boosting on the logistic loss.
//!
//! Scores start at the empirical log-odds. Each round fits a squared-error
//! regression tree to the residuals `y - p`, replaces every leaf value with a
//! Newton step `sum(y - p) / max(sum(p (1 - p)), 1e-6)` and scales it by the
//! learning rate. If the scaled step would raise the training log-loss it is
//! halved until it does not (at most [`MAX_BACKTRACK`] times, then dropped),
//! so the recorded loss curve never increases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, Grower, TreeNode, TreeParams};
use super::{check_arity, check_xy, derive_seed, log_loss, normalize_importances, sigmoid, LearnError, Matrix};

pub const HESSIAN_FLOOR: f64 = 1e-6;
pub const MAX_BACKTRACK: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub params: GbmParams,
    pub n_features: usize,
    /// Initial score (log-odds of the training positive rate).
    pub base_score: f64,
    /// Trees whose leaf values are already scaled additive score updates.
    pub trees: Vec<TreeNode>,
    /// Training log-loss before the first round and after every round.
    pub train_loss: Vec<f64>,
    /// Backtracking factor applied to each round's Newton step.
    pub step_scales: Vec<f64>,
    pub feature_importances: Vec<f64>,
}

impl GbmModel {
    pub fn score(&self, x: &[f64]) -> Result<f64, LearnError> {
        check_arity(self.n_features, x)?;
        Ok(self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, LearnError> {
        Ok(sigmoid(self.score(x)?))
    }
}

fn loss_at(scores: &[f64], y: &[u8]) -> f64 {
    let p: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
    log_loss(&p, y)
}

pub fn fit_gbm(x: &Matrix, y: &[u8], params: &GbmParams) -> Result<GbmModel, LearnError> {
    check_xy(x, y)?;
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(LearnError::InvalidParam("learning_rate must be in (0, 1]".into()));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        m_try: None,
        feature_kinds: Vec::new(),
        seed: params.seed,
    };
    tree_params.validate(x.cols())?;

    let n = x.rows();
    let rate = (y.iter().filter(|&&v| v == 1).count() as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (rate / (1.0 - rate)).ln();
    let mut scores = vec![base_score; n];
    let mut train_loss = vec![loss_at(&scores, y)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut step_scales = Vec::with_capacity(params.n_rounds);
    let mut raw_importance = vec![0.0; x.cols()];

    for round in 0..params.n_rounds {
        let p: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
        let residual: Vec<f64> = p.iter().zip(y).map(|(&p, &y)| y as f64 - p).collect();
        let hessian: Vec<f64> = p.iter().map(|&p| p * (1.0 - p)).collect();

        let leaf_value = |idx: &[usize]| {
            let g: f64 = idx.iter().map(|&i| residual[i]).sum();
            let h: f64 = idx.iter().map(|&i| hessian[i]).sum();
            params.learning_rate * g / h.max(HESSIAN_FLOOR)
        };
        let mut grower = Grower::new(x, &residual, y, Criterion::SquaredError, &tree_params);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, round as u64));
        let mut tree = grower.grow((0..n).collect(), 0, &mut rng, &leaf_value);
        let imp = grower.take_importances(n);

        let update: Vec<f64> = (0..n).map(|i| tree.predict(x.row(i))).collect();
        let previous = *train_loss.last().expect("non-empty");
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACK {
            let trial: Vec<f64> = scores.iter().zip(&update).map(|(s, u)| s + scale * u).collect();
            let loss = loss_at(&trial, y);
            if loss <= previous {
                accepted = Some((trial, loss));
                break;
            }
            scale *= 0.5;
        }
        let loss = match accepted {
            Some((trial, loss)) => {
                scores = trial;
                loss
            }
            None => {
                scale = 0.0;
                previous
            }
        };
        if scale != 1.0 {
            tree.map_leaves(&mut |v| *v *= scale);
        }
        for (r, v) in raw_importance.iter_mut().zip(imp) {
            *r += v * scale;
        }
        train_loss.push(loss);
        step_scales.push(scale);
        trees.push(tree);
    }

    Ok(GbmModel {
        params: params.clone(),
        n_features: x.cols(),
        base_score,
        trees,
        train_loss,
        step_scales,
        feature_importances: normalize_importances(&raw_importance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn zero_rounds_is_base_rate() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let model = fit_gbm(&x, &[0, 0, 0, 1], &GbmParams { n_rounds: 0, ..Default::default() }).unwrap();
        assert!((model.predict_proba(&[5.0]).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(model.train_loss.len(), 1);
    }

    #[test]
    fn separable_loss_strictly_decreases_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<[f64; 2]> = (0..200).map(|_| [rng.random(), rng.random()]).collect();
        let y: Vec<u8> = rows.iter().map(|r| (r[0] > 0.5) as u8).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let model = fit_gbm(&x, &y, &GbmParams { n_rounds: 100, learning_rate: 0.1, max_depth: 2, ..Default::default() }).unwrap();
        for k in 0..10 {
            assert!(model.train_loss[k + 1] < model.train_loss[k]);
        }
        assert!(model.train_loss.windows(2).all(|w| w[1] <= w[0]));
        let correct = (0..200).filter(|&i| (model.predict_proba(x.row(i)).unwrap() >= 0.5) as u8 == y[i]).count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<[f64; 3]> = (0..80).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let y: Vec<u8> = (0..80).map(|_| rng.random_bool(0.3) as u8).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = GbmParams { n_rounds: 15, ..Default::default() };
        assert_eq!(fit_gbm(&x, &y, &p).unwrap(), fit_gbm(&x, &y, &p).unwrap());
    }
}
