//! Random forest of gini-split CART trees with bootstrap resampling and
//! per-node feature subsampling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::seed::rng_for;
use super::{Features, RaterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `⌈√dim⌉`
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, dim: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (dim as f64).sqrt().ceil() as usize,
            MaxFeatures::All => dim,
            MaxFeatures::Count(c) => c,
        };
        m.clamp(1, dim.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_leaf: usize,
    pub criterion: SplitCriterion,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "yes")]
    pub bootstrap: bool,
}

fn yes() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_leaf: 1,
            criterion: SplitCriterion::Gini,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), RaterError> {
        let bad_count = matches!(self.max_features, MaxFeatures::Count(0));
        if self.n_trees == 0 || self.min_leaf == 0 || bad_count {
            return Err(RaterError::InvalidArgument(format!("random forest hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { n0: usize, n1: usize },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    fn leaf_for(&self, x: &[f64]) -> (usize, usize) {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { n0, n1 } => return (n0, n1),
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties go to 0.
    pub fn vote(&self, x: &[f64]) -> u8 {
        let (n0, n1) = self.leaf_for(x);
        u8::from(n1 > n0)
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub dim: usize,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> (u8, f64) {
        let ones = self.trees.iter().filter(|t| t.vote(x) == 1).count();
        let zeros = self.trees.len() - ones;
        (u8::from(ones > zeros), ones as f64 / self.trees.len() as f64)
    }
}

/// Gini impurity of a node with the given class counts.
pub fn gini(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = n0 as f64 / n;
    let p1 = n1 as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

struct Grower<'a, R: Rng> {
    data: &'a Features,
    params: &'a ForestParams,
    m_try: usize,
    rng: R,
    nodes: Vec<TreeNode>,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let n1 = rows.iter().filter(|&&r| self.data.y[r] == 1).count();
        let n0 = rows.len() - n1;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { n0, n1 });

        let pure = n0 == 0 || n1 == 0;
        let too_small = rows.len() < 2 * self.params.min_leaf;
        let too_deep = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || too_small || too_deep {
            return id;
        }
        let Some(split) = self.best_split(rows) else {
            return id;
        };

        let (feature, threshold) = (split.feature, split.threshold);
        let data = self.data;
        rows.sort_by(|&a, &b| {
            let ka = data.row(a)[feature] > threshold;
            let kb = data.row(b)[feature] > threshold;
            ka.cmp(&kb).then(a.cmp(&b))
        });
        let n_left = rows.iter().take_while(|&&r| data.row(r)[feature] <= threshold).count();
        let (left_rows, right_rows) = rows.split_at_mut(n_left);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = TreeNode::Split { feature, threshold, left, right };
        id
    }

    /// Tries a random subset of `m_try` features first and falls back to
    /// the remaining ones only if none of those admits a split.
    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let mut order: Vec<usize> = (0..self.data.dim).collect();
        order.shuffle(&mut self.rng);
        let mut best: Option<BestSplit> = None;
        for (k, &feature) in order.iter().enumerate() {
            if k >= self.m_try && best.is_some() {
                break;
            }
            if let Some(s) = best_split_on(self.data, rows, feature, self.params.min_leaf) {
                if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
        }
        best
    }
}

/// Lowest weighted child gini over all thresholds of one feature.
fn best_split_on(data: &Features, rows: &[usize], feature: usize, min_leaf: usize) -> Option<BestSplit> {
    let mut sorted: Vec<(f64, u8)> = rows.iter().map(|&r| (data.row(r)[feature], data.y[r])).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let total1 = sorted.iter().filter(|s| s.1 == 1).count();
    let (mut l0, mut l1) = (0usize, 0usize);
    let mut best: Option<BestSplit> = None;
    for i in 0..n - 1 {
        if sorted[i].1 == 1 {
            l1 += 1;
        } else {
            l0 += 1;
        }
        let n_left = i + 1;
        if sorted[i].0 == sorted[i + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let (r1, r0) = (total1 - l1, n - n_left - (total1 - l1));
        let impurity = (n_left as f64 * gini(l0, l1) + (n - n_left) as f64 * gini(r0, r1)) / n as f64;
        if best.as_ref().is_none_or(|b| impurity < b.impurity) {
            let (lo, hi) = (sorted[i].0, sorted[i + 1].0);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            best = Some(BestSplit { feature, threshold, impurity });
        }
    }
    best
}

fn grow_tree(data: &Features, params: &ForestParams, seed: u64, tree_idx: u64) -> Tree {
    let mut rng = rng_for(seed, &[tree_idx]);
    let mut rows: Vec<usize> = if params.bootstrap {
        (0..data.n).map(|_| rng.random_range(0..data.n)).collect()
    } else {
        (0..data.n).collect()
    };
    let mut grower = Grower {
        data,
        params,
        m_try: params.max_features.resolve(data.dim),
        rng,
        nodes: Vec::new(),
    };
    grower.grow(&mut rows, 0);
    Tree { nodes: grower.nodes }
}

/// Fits `n_trees` trees; tree `t` draws from its own stream derived from
/// `(seed, t)`, so the forest is a pure function of its inputs.
pub fn fit_random_forest(data: &Features, params: &ForestParams, seed: u64) -> Result<ForestModel, RaterError> {
    params.validate()?;
    data.check_two_classes()?;
    let trees = (0..params.n_trees as u64).map(|t| grow_tree(data, params, seed, t)).collect();
    Ok(ForestModel { dim: data.dim, trees })
}
