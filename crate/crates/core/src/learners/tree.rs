//! CART decision trees.
//!
//! Classification trees split on Gini impurity decrease; the regression
//! variant used by boosting splits on squared-error reduction. Numeric
//! thresholds are midpoints between consecutive distinct values and a sample
//! goes left when `x <= threshold`. Categorical features are split into two
//! category sets by ordering categories on their mean target, which is exact
//! for both criteria with a binary or scalar target.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_arity, check_xy, normalize_importances, LearnError, Matrix};

/// Deepest tree accepted (keeps nested JSON documents within parser limits).
pub const MAX_TREE_DEPTH: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[default]
    Numeric,
    /// Values are integer category codes.
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub m_try: Option<usize>,
    /// Per-feature kinds; empty means all numeric.
    #[serde(default)]
    pub feature_kinds: Vec<FeatureKind>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: MAX_TREE_DEPTH,
            min_leaf: 1,
            m_try: None,
            feature_kinds: Vec::new(),
            seed: 0,
        }
    }
}

impl TreeParams {
    pub(crate) fn validate(&self, n_features: usize) -> Result<(), LearnError> {
        if self.max_depth > MAX_TREE_DEPTH {
            return Err(LearnError::InvalidParam(format!(
                "max_depth {} exceeds {MAX_TREE_DEPTH}",
                self.max_depth
            )));
        }
        if self.min_leaf == 0 {
            return Err(LearnError::InvalidParam("min_leaf must be at least 1".into()));
        }
        if self.m_try == Some(0) {
            return Err(LearnError::InvalidParam("m_try must be at least 1".into()));
        }
        if !self.feature_kinds.is_empty() && self.feature_kinds.len() != n_features {
            return Err(LearnError::ArityMismatch {
                what: "feature kinds",
                expected: n_features,
                got: self.feature_kinds.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Split {
    Numeric { threshold: f64 },
    /// Category codes sent to the left child; everything else goes right.
    Categorical { left: Vec<i64> },
}

impl Split {
    #[inline]
    pub fn goes_left(&self, value: f64) -> bool {
        match self {
            Split::Numeric { threshold } => value <= *threshold,
            Split::Categorical { left } => left.binary_search(&(value.round() as i64)).is_ok(),
        }
    }
}

/// A node of a fitted tree. Leaf `value` is the positive fraction for
/// classification trees and the additive score for boosting trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "serde_json::Value", try_from = "serde_json::Value")]
pub enum TreeNode {
    Leaf {
        n: usize,
        positives: usize,
        value: f64,
    },
    Internal {
        feature: usize,
        split: Split,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Internal {
            feature,
            split,
            left,
            right,
        } = node
        {
            node = if split.goes_left(x[*feature]) { left } else { right };
        }
        node
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.leaf_for(x) {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Internal { .. } => unreachable!("leaf_for stops at leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub(crate) fn map_leaves(&mut self, f: &mut impl FnMut(&mut f64)) {
        match self {
            TreeNode::Leaf { value, .. } => f(value),
            TreeNode::Internal { left, right, .. } => {
                left.map_leaves(f);
                right.map_leaves(f);
            }
        }
    }
}

/// A single fitted classification tree.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_features: usize,
    /// Impurity decrease per feature, weighted by node share of the training set.
    pub impurity_decrease: Vec<f64>,
}

impl DecisionTree {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, LearnError> {
        check_arity(self.n_features, x)?;
        Ok(self.root.predict(x))
    }

    pub fn feature_importances(&self) -> Vec<f64> {
        normalize_importances(&self.impurity_decrease)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Criterion {
    Gini,
    SquaredError,
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Stats {
    n: f64,
    sum: f64,
}

impl Stats {
    #[inline]
    fn add(&mut self, t: f64) {
        self.n += 1.0;
        self.sum += t;
    }

    #[inline]
    fn minus(self, other: Stats) -> Stats {
        Stats {
            n: self.n - other.n,
            sum: self.sum - other.sum,
        }
    }
}

impl Criterion {
    /// Node cost up to a per-node constant that cancels in split comparisons:
    /// `n * gini` for classification, `-sum^2 / n` for squared error.
    #[inline]
    fn cost(self, s: Stats) -> f64 {
        if s.n <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Gini => 2.0 * s.sum * (s.n - s.sum) / s.n,
            Criterion::SquaredError => -s.sum * s.sum / s.n,
        }
    }

    #[inline]
    fn decrease(self, parent: Stats, left: Stats) -> f64 {
        let right = parent.minus(left);
        self.cost(parent) - self.cost(left) - self.cost(right)
    }
}

pub(crate) struct BestSplit {
    pub feature: usize,
    pub split: Split,
    pub decrease: f64,
}

pub(crate) struct Grower<'a> {
    x: &'a Matrix,
    target: &'a [f64],
    labels: &'a [u8],
    criterion: Criterion,
    max_depth: usize,
    min_leaf: usize,
    m_try: usize,
    kinds: Vec<FeatureKind>,
    importances: Vec<f64>,
    pairs: Vec<(f64, f64)>,
    features: Vec<usize>,
}

impl<'a> Grower<'a> {
    pub(crate) fn new(x: &'a Matrix, target: &'a [f64], labels: &'a [u8], criterion: Criterion, params: &TreeParams) -> Self {
        let m = x.cols();
        let kinds = if params.feature_kinds.is_empty() {
            vec![FeatureKind::Numeric; m]
        } else {
            params.feature_kinds.clone()
        };
        Grower {
            x,
            target,
            labels,
            criterion,
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            m_try: params.m_try.unwrap_or(m).min(m),
            kinds,
            importances: vec![0.0; m],
            pairs: Vec::new(),
            features: (0..m).collect(),
        }
    }

    fn stats(&self, idx: &[usize]) -> Stats {
        let mut s = Stats::default();
        for &i in idx {
            s.add(self.target[i]);
        }
        s
    }

    fn is_pure(&self, idx: &[usize], s: Stats) -> bool {
        match self.criterion {
            Criterion::Gini => s.sum == 0.0 || s.sum == s.n,
            Criterion::SquaredError => {
                let first = self.target[idx[0]];
                idx.iter().all(|&i| self.target[i] == first)
            }
        }
    }

    fn best_numeric(&mut self, idx: &[usize], feature: usize, parent: Stats) -> Option<(f64, f64)> {
        let (x, target) = (self.x, self.target);
        self.pairs.clear();
        self.pairs.extend(idx.iter().map(|&i| (x.get(i, feature), target[i])));
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = self.pairs.len();
        let mut left = Stats::default();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left.add(self.pairs[i].1);
            let (lo, hi) = (self.pairs[i].0, self.pairs[i + 1].0);
            if lo >= hi {
                continue;
            }
            let n_left = i + 1;
            if n_left < self.min_leaf || n - n_left < self.min_leaf {
                continue;
            }
            let d = self.criterion.decrease(parent, left);
            if best.is_none_or(|(bd, _)| d > bd) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some((d, threshold));
            }
        }
        best
    }

    fn best_categorical(&self, idx: &[usize], feature: usize, parent: Stats) -> Option<(f64, Vec<i64>)> {
        let mut groups: BTreeMap<i64, Stats> = BTreeMap::new();
        for &i in idx {
            groups
                .entry(self.x.get(i, feature).round() as i64)
                .or_default()
                .add(self.target[i]);
        }
        if groups.len() < 2 {
            return None;
        }
        let mut cats: Vec<(i64, Stats)> = groups.into_iter().collect();
        cats.sort_by(|a, b| (a.1.sum / a.1.n).total_cmp(&(b.1.sum / b.1.n)).then(a.0.cmp(&b.0)));
        let min_leaf = self.min_leaf as f64;
        let mut left = Stats::default();
        let mut best: Option<(f64, usize)> = None;
        for k in 0..cats.len() - 1 {
            left.n += cats[k].1.n;
            left.sum += cats[k].1.sum;
            if left.n < min_leaf || parent.n - left.n < min_leaf {
                continue;
            }
            let d = self.criterion.decrease(parent, left);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, k));
            }
        }
        best.map(|(d, k)| {
            let mut set: Vec<i64> = cats[..=k].iter().map(|c| c.0).collect();
            set.sort_unstable();
            (d, set)
        })
    }

    pub(crate) fn find_split(&mut self, idx: &[usize], parent: Stats, rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let m = self.features.len();
        let sampled = self.m_try < m;
        if sampled {
            self.features.sort_unstable();
            self.features.shuffle(rng);
        }
        let mut best: Option<BestSplit> = None;
        for pos in 0..m {
            if pos >= self.m_try && best.is_some() {
                break;
            }
            let feature = if sampled { self.features[pos] } else { pos };
            let candidate = match self.kinds[feature] {
                FeatureKind::Numeric => self
                    .best_numeric(idx, feature, parent)
                    .map(|(d, threshold)| (d, Split::Numeric { threshold })),
                FeatureKind::Categorical => self
                    .best_categorical(idx, feature, parent)
                    .map(|(d, left)| (d, Split::Categorical { left })),
            };
            if let Some((decrease, split)) = candidate {
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(BestSplit {
                        feature,
                        split,
                        decrease,
                    });
                }
            }
        }
        best
    }

    pub(crate) fn grow(
        &mut self,
        idx: Vec<usize>,
        depth: usize,
        rng: &mut ChaCha8Rng,
        leaf_value: &dyn Fn(&[usize]) -> f64,
    ) -> TreeNode {
        let stats = self.stats(&idx);
        let leaf = |idx: &[usize], labels: &[u8]| TreeNode::Leaf {
            n: idx.len(),
            positives: idx.iter().filter(|&&i| labels[i] == 1).count(),
            value: leaf_value(idx),
        };
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf || self.is_pure(&idx, stats) {
            return leaf(&idx, self.labels);
        }
        let Some(best) = self.find_split(&idx, stats, rng) else {
            return leaf(&idx, self.labels);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| best.split.goes_left(self.x.get(i, best.feature)));
        self.importances[best.feature] += best.decrease.max(0.0);
        let left = self.grow(left_idx, depth + 1, rng, leaf_value);
        let right = self.grow(right_idx, depth + 1, rng, leaf_value);
        TreeNode::Internal {
            feature: best.feature,
            split: best.split,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Raw importances divided by the root sample count.
    pub(crate) fn take_importances(&mut self, root_n: usize) -> Vec<f64> {
        let scale = 1.0 / root_n.max(1) as f64;
        std::mem::take(&mut self.importances).into_iter().map(|v| v * scale).collect()
    }
}

pub(crate) fn positive_fraction(labels: &[u8]) -> impl Fn(&[usize]) -> f64 + '_ {
    move |idx: &[usize]| {
        let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
        pos as f64 / idx.len().max(1) as f64
    }
}

/// Grows a classification tree on the given (possibly repeated) row indices.
pub(crate) fn grow_classifier(
    x: &Matrix,
    y: &[u8],
    target: &[f64],
    indices: Vec<usize>,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> (TreeNode, Vec<f64>) {
    let root_n = indices.len();
    let mut grower = Grower::new(x, target, y, Criterion::Gini, params);
    let leaf_value = positive_fraction(y);
    let root = grower.grow(indices, 0, rng, &leaf_value);
    (root, grower.take_importances(root_n))
}

/// Fits a classification tree on all rows of `x`.
pub fn fit_tree(x: &Matrix, y: &[u8], params: &TreeParams) -> Result<DecisionTree, LearnError> {
    check_xy(x, y)?;
    params.validate(x.cols())?;
    let target: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (root, impurity_decrease) = grow_classifier(x, y, &target, (0..x.rows()).collect(), params, &mut rng);
    Ok(DecisionTree {
        root,
        n_features: x.cols(),
        impurity_decrease,
    })
}

// Nested-array JSON form: ["leaf", n, positives, value],
// ["num", feature, threshold, left, right], ["cat", feature, [codes], left, right].
impl From<TreeNode> for serde_json::Value {
    fn from(node: TreeNode) -> Self {
        use serde_json::json;
        match node {
            TreeNode::Leaf { n, positives, value } => json!(["leaf", n, positives, value]),
            TreeNode::Internal {
                feature,
                split,
                left,
                right,
            } => {
                let l: serde_json::Value = (*left).into();
                let r: serde_json::Value = (*right).into();
                match split {
                    Split::Numeric { threshold } => json!(["num", feature, threshold, l, r]),
                    Split::Categorical { left } => json!(["cat", feature, left, l, r]),
                }
            }
        }
    }
}

impl TryFrom<serde_json::Value> for TreeNode {
    type Error = String;

    fn try_from(value: serde_json::Value) -> Result<Self, Self::Error> {
        let serde_json::Value::Array(mut items) = value else {
            return Err("tree node must be an array".into());
        };
        let tag = items.first().and_then(|t| t.as_str()).ok_or("missing node tag")?.to_string();
        let uint = |v: &serde_json::Value, what: &str| v.as_u64().map(|u| u as usize).ok_or(format!("bad {what}"));
        let float = |v: &serde_json::Value, what: &str| v.as_f64().ok_or(format!("bad {what}"));
        match (tag.as_str(), items.len()) {
            ("leaf", 4) => Ok(TreeNode::Leaf {
                n: uint(&items[1], "leaf count")?,
                positives: uint(&items[2], "leaf positives")?,
                value: float(&items[3], "leaf value")?,
            }),
            ("num" | "cat", 5) => {
                let right = TreeNode::try_from(items.pop().expect("len 5"))?;
                let left = TreeNode::try_from(items.pop().expect("len 5"))?;
                let feature = uint(&items[1], "feature")?;
                let split = if tag == "num" {
                    Split::Numeric {
                        threshold: float(&items[2], "threshold")?,
                    }
                } else {
                    let codes = items[2]
                        .as_array()
                        .ok_or("category set must be an array")?
                        .iter()
                        .map(|c| c.as_i64().ok_or("bad category code".to_string()))
                        .collect::<Result<Vec<_>, _>>()?;
                    Split::Categorical { left: codes }
                };
                Ok(TreeNode::Internal {
                    feature,
                    split,
                    left: Box::new(left),
                    right: Box::new(right),
                })
            }
            _ => Err(format!("unknown node {tag:?} with {} fields", items.len())),
        }
    }
}
