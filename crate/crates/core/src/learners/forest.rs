//! Random forest classifier.
//!
//! Each tree is grown on a bootstrap sample with `m_try` features drawn per
//! split. Tree `i` draws all of its randomness from
//! `derive_seed(seed, i)`, so the fitted forest is identical whether trees
//! are grown sequentially or on the rayon pool.
//!
//! The predicted probability is the fraction of trees voting for class 1; a
//! tree votes 1 when its leaf's positive fraction is at least 0.5.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_classifier, TreeNode, TreeParams};
use super::{check_arity, check_xy, derive_seed, normalize_importances, LearnError, Matrix};
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MTry {
    /// `ceil(sqrt(M))`.
    Sqrt,
    All,
    Count(usize),
}

impl MTry {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MTry::Sqrt => ((n_features as f64).sqrt().ceil() as usize).max(1),
            MTry::All => n_features,
            MTry::Count(k) => k.clamp(1, n_features.max(1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// Every tree sees all rows once.
    Disabled,
    /// Draw with replacement.
    Standard,
    /// Draw with replacement, then force at least one positive row into the sample.
    Stratified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_tree: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub m_try: MTry,
    pub bootstrap: Bootstrap,
    /// Bootstrap sample size as a fraction of the training rows.
    pub sample_fraction: f64,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_tree: 100,
            max_depth: 20,
            min_leaf: 1,
            m_try: MTry::Sqrt,
            bootstrap: Bootstrap::Stratified,
            sample_fraction: 1.0,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
    pub feature_importances: Vec<f64>,
    /// Out-of-bag accuracy, when bootstrapping left rows out.
    pub oob_accuracy: Option<f64>,
}

fn bootstrap_sample(n: usize, y: &[u8], params: &ForestParams, positives: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    if params.bootstrap == Bootstrap::Disabled {
        return (0..n).collect();
    }
    let size = ((params.sample_fraction * n as f64).round() as usize).max(1);
    let mut sample: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
    if params.bootstrap == Bootstrap::Stratified && !positives.is_empty() && !sample.iter().any(|&i| y[i] == 1) {
        let slot = rng.random_range(0..size);
        sample[slot] = positives[rng.random_range(0..positives.len())];
    }
    sample
}

/// Fits a forest; output is a deterministic function of `(x, y, params)`.
pub fn fit_random_forest(x: &Matrix, y: &[u8], params: &ForestParams) -> Result<ForestModel, LearnError> {
    check_xy(x, y)?;
    if params.n_tree == 0 {
        return Err(LearnError::InvalidParam("n_tree must be at least 1".into()));
    }
    if !(params.sample_fraction > 0.0 && params.sample_fraction.is_finite()) {
        return Err(LearnError::InvalidParam("sample_fraction must be positive".into()));
    }
    let m = x.cols();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        m_try: Some(params.m_try.resolve(m)),
        feature_kinds: Vec::new(),
        seed: params.seed,
    };
    tree_params.validate(m)?;
    let target: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let positives: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let n = x.rows();

    let grown: Vec<(TreeNode, Vec<f64>, Vec<bool>)> = par::map_range(params.execution, params.n_tree, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
        let sample = bootstrap_sample(n, y, params, &positives, &mut rng);
        let mut in_bag = vec![false; n];
        for &i in &sample {
            in_bag[i] = true;
        }
        let (root, imp) = grow_classifier(x, y, &target, sample, &tree_params, &mut rng);
        (root, imp, in_bag)
    });

    let mut raw = vec![0.0; m];
    for (_, imp, _) in &grown {
        for (r, v) in raw.iter_mut().zip(imp) {
            *r += v / params.n_tree as f64;
        }
    }

    let oob_accuracy = if params.bootstrap == Bootstrap::Disabled {
        None
    } else {
        let mut correct = 0usize;
        let mut scored = 0usize;
        for i in 0..n {
            let (mut votes, mut trees) = (0usize, 0usize);
            for (root, _, in_bag) in &grown {
                if !in_bag[i] {
                    trees += 1;
                    votes += (root.predict(x.row(i)) >= 0.5) as usize;
                }
            }
            if trees > 0 {
                scored += 1;
                correct += ((votes as f64 / trees as f64 >= 0.5) as u8 == y[i]) as usize;
            }
        }
        (scored > 0).then(|| correct as f64 / scored as f64)
    };

    Ok(ForestModel {
        params: params.clone(),
        n_features: m,
        trees: grown.into_iter().map(|(root, _, _)| root).collect(),
        feature_importances: normalize_importances(&raw),
        oob_accuracy,
    })
}

/// Fraction of trees voting for class 1.
pub fn predict_proba_forest(model: &ForestModel, x: &[f64]) -> Result<f64, LearnError> {
    check_arity(model.n_features, x)?;
    let votes = model.trees.iter().filter(|t| t.predict(x) >= 0.5).count();
    Ok(votes as f64 / model.trees.len() as f64)
}

impl ForestModel {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, LearnError> {
        predict_proba_forest(self, x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8, LearnError> {
        Ok((self.predict_proba(x)? >= 0.5) as u8)
    }

    /// Mean impurity decrease per feature, normalised to sum 1.
    pub fn feature_importance(&self) -> &[f64] {
        &self.feature_importances
    }
}
