//! Stratified k-fold grid search over ensemble size and tree depth.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, fit_gbm, fit_random_forest, Classifier, ForestParams, GbmParams, LearnError, Matrix};
use crate::par::{self, Execution};

/// Base learner whose size and depth the grid varies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerSpec {
    Forest(ForestParams),
    Gbm(GbmParams),
}

impl LearnerSpec {
    /// Copy with ensemble size (trees or rounds) and depth replaced.
    pub fn with(&self, size: usize, depth: usize) -> LearnerSpec {
        match self {
            LearnerSpec::Forest(p) => LearnerSpec::Forest(ForestParams {
                n_tree: size,
                max_depth: depth,
                ..p.clone()
            }),
            LearnerSpec::Gbm(p) => LearnerSpec::Gbm(GbmParams {
                n_rounds: size,
                max_depth: depth,
                ..p.clone()
            }),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            LearnerSpec::Forest(p) => p.seed,
            LearnerSpec::Gbm(p) => p.seed,
        }
    }

    fn execution(&self) -> Execution {
        match self {
            LearnerSpec::Forest(p) => p.execution,
            LearnerSpec::Gbm(_) => Execution::default(),
        }
    }

    pub fn fit(&self, x: &Matrix, y: &[u8]) -> Result<Classifier, LearnError> {
        match self {
            LearnerSpec::Forest(p) => fit_random_forest(x, y, p).map(Classifier::Forest),
            LearnerSpec::Gbm(p) => fit_gbm(x, y, p).map(Classifier::Gbm),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub sizes: Vec<usize>,
    pub depths: Vec<usize>,
}

impl Default for Grid {
    /// 6 ensemble sizes by 5 depths.
    fn default() -> Self {
        Grid {
            sizes: vec![50, 100, 200, 500, 1000, 2000],
            depths: vec![5, 10, 20, 40, 60],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub sizes: Vec<usize>,
    pub depths: Vec<usize>,
    /// `accuracy[i][j]` is the mean held-out accuracy of `sizes[i]` x `depths[j]`.
    pub accuracy: Vec<Vec<f64>>,
    pub best_size: usize,
    pub best_depth: usize,
    pub best_accuracy: f64,
    pub folds_used: usize,
}

/// Assigns every row to one of `k` folds, dealing each class round-robin after a seeded shuffle.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    let mut offset = 0;
    for class in [1u8, 0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (r, &i) in idx.iter().enumerate() {
            fold[i] = (r + offset) % k;
        }
        offset += idx.len();
    }
    fold
}

/// Mean held-out accuracy for every grid point; ties go to fewer trees, then shallower trees.
pub fn grid_search(spec: &LearnerSpec, x: &Matrix, y: &[u8], grid: &Grid, k_folds: usize) -> Result<GridResult, LearnError> {
    check_xy(x, y)?;
    if k_folds < 2 {
        return Err(LearnError::InvalidParam("k_folds must be at least 2".into()));
    }
    if grid.sizes.is_empty() || grid.depths.is_empty() {
        return Err(LearnError::InvalidParam("grid must have at least one size and one depth".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    let minority = positives.min(y.len() - positives);
    let mut k = k_folds;
    if minority < k {
        if minority < 2 {
            return Err(LearnError::TooFewPositives { positives: minority, folds: k_folds });
        }
        warn!("grid search: only {minority} rows in the minority class; using {minority} folds instead of {k_folds}");
        k = minority;
    }
    let fold = stratified_folds(y, k, spec.seed());
    let splits: Vec<(Matrix, Vec<u8>, Matrix, Vec<u8>)> = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
            (
                x.select_rows(&train),
                train.iter().map(|&i| y[i]).collect(),
                x.select_rows(&test),
                test.iter().map(|&i| y[i]).collect(),
            )
        })
        .collect();

    let (ns, nd) = (grid.sizes.len(), grid.depths.len());
    let jobs = ns * nd * k;
    let scores: Vec<Result<f64, LearnError>> = par::map_range(spec.execution(), jobs, |job| {
        let (point, f) = (job / k, job % k);
        let (size, depth) = (grid.sizes[point / nd], grid.depths[point % nd]);
        let (xtr, ytr, xte, yte) = &splits[f];
        let model = spec.with(size, depth).fit(xtr, ytr)?;
        let mut correct = 0usize;
        for (row, &label) in xte.iter_rows().zip(yte) {
            correct += ((model.predict_proba(row)? >= 0.5) as u8 == label) as usize;
        }
        Ok(correct as f64 / yte.len() as f64)
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut accuracy = vec![vec![0.0; nd]; ns];
    for (point, chunk) in scores.chunks(k).enumerate() {
        accuracy[point / nd][point % nd] = chunk.iter().sum::<f64>() / k as f64;
    }

    let mut order: Vec<(usize, usize)> = (0..ns).flat_map(|i| (0..nd).map(move |j| (i, j))).collect();
    order.sort_by_key(|&(i, j)| (grid.sizes[i], grid.depths[j]));
    let (mut bi, mut bj) = order[0];
    for &(i, j) in &order[1..] {
        if accuracy[i][j] > accuracy[bi][bj] {
            (bi, bj) = (i, j);
        }
    }
    Ok(GridResult {
        sizes: grid.sizes.clone(),
        depths: grid.depths.clone(),
        best_accuracy: accuracy[bi][bj],
        accuracy,
        best_size: grid.sizes[bi],
        best_depth: grid.depths[bj],
        folds_used: k,
    })
}
