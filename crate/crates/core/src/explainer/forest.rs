//! CART regression forests with bootstrap rows and per-node feature
//! subsampling.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `⌈√N⌉` features per node.
    Sqrt,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().ceil() as usize).clamp(1, n_features.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
        n_samples: usize,
        impurity: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        value: f64,
        n_samples: usize,
        impurity: f64,
        /// Weighted squared-error reduction of this split.
        gain: f64,
    },
}

impl TreeNode {
    pub fn n_samples(&self) -> usize {
        match self {
            TreeNode::Leaf { n_samples, .. } | TreeNode::Split { n_samples, .. } => *n_samples,
        }
    }
}

/// Arena of nodes; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Split { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
    pub seed: u64,
    pub n_features: usize,
}

impl RandomForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|r| {
                let row: Vec<f64> = x.row(r).iter().copied().collect();
                self.predict_row(&row)
            })
            .collect()
    }
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    /// Sample weight times bootstrap multiplicity.
    omega: Vec<f64>,
    count: Vec<usize>,
    params: ForestParams,
    mtry: usize,
    nodes: Vec<TreeNode>,
}

struct Stats {
    n: usize,
    w: f64,
    wy: f64,
    wyy: f64,
}

impl Stats {
    fn sse(&self) -> f64 {
        (self.wyy - self.wy * self.wy / self.w).max(0.0)
    }
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn stats(&self, rows: &[usize]) -> Stats {
        let mut s = Stats { n: 0, w: 0.0, wy: 0.0, wyy: 0.0 };
        for &r in rows {
            s.n += self.count[r];
            s.w += self.omega[r];
            s.wy += self.omega[r] * self.y[r];
            s.wyy += self.omega[r] * self.y[r] * self.y[r];
        }
        s
    }

    /// Best threshold on one feature, or `None` when the feature is
    /// constant in the node (`Some(None)` when non-constant but no split
    /// satisfies the leaf-size rule).
    fn best_on_feature(&self, rows: &[usize], f: usize, parent: &Stats) -> Option<Option<(f64, f64)>> {
        let mut sorted: Vec<usize> = rows.to_vec();
        sorted.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]).then(a.cmp(&b)));
        let first = self.x[(sorted[0], f)];
        if self.x[(*sorted.last().unwrap(), f)] == first {
            return None;
        }
        let leaf = self.params.min_samples_leaf;
        let mut left = Stats { n: 0, w: 0.0, wy: 0.0, wyy: 0.0 };
        let mut best: Option<(f64, f64)> = None;
        for k in 0..sorted.len() - 1 {
            let r = sorted[k];
            left.n += self.count[r];
            left.w += self.omega[r];
            left.wy += self.omega[r] * self.y[r];
            left.wyy += self.omega[r] * self.y[r] * self.y[r];
            let v = self.x[(r, f)];
            let next = self.x[(sorted[k + 1], f)];
            if v == next || left.n < leaf || parent.n - left.n < leaf {
                continue;
            }
            let right = Stats {
                n: parent.n - left.n,
                w: parent.w - left.w,
                wy: parent.wy - left.wy,
                wyy: parent.wyy - left.wyy,
            };
            let gain = parent.sse() - left.sse() - right.sse();
            if best.is_none_or(|(g, _)| gain > g) {
                let mut t = 0.5 * (v + next);
                if t >= next {
                    t = v;
                }
                best = Some((gain, t));
            }
        }
        Some(best)
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let s = self.stats(&rows);
        let constant = rows.iter().all(|&r| self.y[r] == self.y[rows[0]]);
        let value = if constant { self.y[rows[0]] } else { s.wy / s.w };
        let impurity = if constant { 0.0 } else { s.sse() / s.w };
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value, n_samples: s.n, impurity });

        let p = &self.params;
        let can_split = s.n >= p.min_samples_split
            && s.n >= 2 * p.min_samples_leaf
            && p.max_depth.is_none_or(|d| depth < d)
            && !constant;
        if !can_split {
            return id;
        }
        let mut order: Vec<usize> = (0..self.x.ncols()).collect();
        order.shuffle(rng);
        let mut visited = 0;
        let mut best: Option<Candidate> = None;
        for &f in &order {
            if visited == self.mtry {
                break;
            }
            let Some(found) = self.best_on_feature(&rows, f, &s) else {
                continue;
            };
            visited += 1;
            if let Some((gain, threshold)) = found {
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain || (gain == b.gain && f < b.feature),
                };
                if better {
                    best = Some(Candidate { gain, feature: f, threshold });
                }
            }
        }
        // Gains at rounding level are not real splits.
        let Some(best) = best.filter(|b| b.gain > 1e-12 * s.sse()) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.x[(i, best.feature)] <= best.threshold);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            value,
            n_samples: s.n,
            impurity,
            gain: best.gain,
        };
        id
    }
}

fn fit_tree(x: &DMatrix<f64>, y: &[f64], w: &[f64], params: ForestParams, seed: u64, index: u64) -> RegressionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = y.len();
    let mut count = vec![0usize; n];
    for _ in 0..n {
        count[rng.random_range(0..n)] += 1;
    }
    let omega: Vec<f64> = (0..n).map(|i| w[i] * count[i] as f64).collect();
    let rows: Vec<usize> = (0..n).filter(|&i| count[i] > 0).collect();
    let mut b = Builder {
        x,
        y,
        omega,
        count,
        params,
        mtry: params.max_features.resolve(x.ncols()),
        nodes: Vec::new(),
    };
    b.build(rows, 0, &mut rng);
    RegressionTree { nodes: b.nodes }
}

/// Trains `n_estimators` trees, each on its own bootstrap sample drawn
/// from stream `t` of the seeded generator.
pub fn fit_random_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    params: ForestParams,
    seed: u64,
) -> Result<RandomForestModel> {
    let n = y.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("forest needs at least two rows, got {n}")));
    }
    if x.nrows() != n || w.len() != n || x.ncols() == 0 {
        return Err(Error::Input("forest input dimensions disagree".into()));
    }
    if params.n_estimators == 0 || params.min_samples_leaf == 0 || params.min_samples_split < 2 {
        return Err(Error::Input(format!("invalid forest parameters {params:?}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) || w.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Input("non-finite forest input or non-positive weight".into()));
    }
    let trees = (0..params.n_estimators as u64)
        .into_par_iter()
        .map(|t| fit_tree(x, y, w, params, seed, t))
        .collect();
    Ok(RandomForestModel {
        trees,
        params,
        seed,
        n_features: x.ncols(),
    })
}

/// Impurity-decrease importances summing to 1; all zeros when no tree
/// ever split.
pub fn rf_importance(m: &RandomForestModel) -> Vec<f64> {
    let d = m.n_features;
    let mut total = vec![0.0; d];
    let mut contributing = 0usize;
    for t in &m.trees {
        let mut per = vec![0.0; d];
        for node in &t.nodes {
            if let TreeNode::Split { feature, gain, .. } = node {
                per[*feature] += gain;
            }
        }
        let s: f64 = per.iter().sum();
        if s > 0.0 {
            contributing += 1;
            for (a, b) in total.iter_mut().zip(&per) {
                *a += b / s;
            }
        }
    }
    if contributing == 0 {
        log::warn!("forest has no splits; importances are all zero");
        return total;
    }
    let s: f64 = total.iter().sum();
    total.iter().map(|v| v / s).collect()
}
