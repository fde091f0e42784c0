//! Mean-outcome regressors for the doubly-robust baselines.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fitted regression function `x ↦ E[outcome | x]`.
pub trait MeanOutcomeRegressor: Send + Sync + std::fmt::Debug {
    fn predict(&self, x: &[f64]) -> f64;
}

/// Which regressor to train per stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSpec {
    Boosted(BoostParams),
    Linear,
}

impl Default for RegressorSpec {
    fn default() -> Self {
        RegressorSpec::Boosted(BoostParams::default())
    }
}

impl RegressorSpec {
    pub fn fit(&self, x: ArrayView2<f64>, y: &[f64]) -> Result<Box<dyn MeanOutcomeRegressor>> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("cannot train a regressor on zero rows".into()));
        }
        Ok(match self {
            RegressorSpec::Boosted(p) => Box::new(BoostedTrees::fit(x, y, p)?),
            RegressorSpec::Linear => Box::new(LinearRegressor::fit(x, y)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            trees: 100,
            depth: 3,
            learning_rate: 0.1,
            min_leaf: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Least-squares gradient boosting over shallow regression trees.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedTrees {
    base: f64,
    rate: f64,
    trees: Vec<Tree>,
}

impl BoostedTrees {
    pub fn fit(x: ArrayView2<f64>, y: &[f64], params: &BoostParams) -> Result<Self> {
        let n = y.len();
        let d = x.ncols();
        if params.depth == 0 || params.min_leaf == 0 || !(params.learning_rate > 0.0) {
            return Err(Error::Config(format!("invalid boosting parameters {params:?}")));
        }
        let base = y.iter().sum::<f64>() / n as f64;
        let orders: Vec<Vec<usize>> = (0..d)
            .map(|j| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| x[(a, j)].total_cmp(&x[(b, j)]));
                o
            })
            .collect();
        let mut pred = vec![base; n];
        let mut trees = Vec::with_capacity(params.trees);
        for _ in 0..params.trees {
            let resid: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
            let tree = grow(x, &resid, &orders, params);
            for (i, p) in pred.iter_mut().enumerate() {
                let row: Vec<f64> = x.row(i).to_vec();
                *p += params.learning_rate * tree.predict(&row);
            }
            trees.push(tree);
        }
        Ok(Self {
            base,
            rate: params.learning_rate,
            trees,
        })
    }
}

impl MeanOutcomeRegressor for BoostedTrees {
    fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    n: usize,
    sum: f64,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one tree level by level; each level costs one pass per feature
/// over the presorted orders.
fn grow(x: ArrayView2<f64>, resid: &[f64], orders: &[Vec<usize>], params: &BoostParams) -> Tree {
    let n = resid.len();
    let mut node_of = vec![0usize; n];
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut totals = vec![Stats {
        n,
        sum: resid.iter().sum(),
    }];
    let mut frontier = vec![0usize];
    for _ in 0..params.depth {
        if frontier.is_empty() {
            break;
        }
        let slot_of = |node: usize| frontier.iter().position(|&f| f == node);
        let mut best: Vec<Option<Best>> = vec![None; frontier.len()];
        for (j, order) in orders.iter().enumerate() {
            let mut left = vec![Stats::default(); frontier.len()];
            let mut last = vec![f64::NAN; frontier.len()];
            let lookup: Vec<Option<usize>> = (0..nodes.len()).map(slot_of).collect();
            for &i in order {
                let Some(slot) = lookup[node_of[i]] else { continue };
                let v = x[(i, j)];
                let l = left[slot];
                if l.n >= params.min_leaf && v > last[slot] {
                    let t = totals[frontier[slot]];
                    let rn = t.n - l.n;
                    if rn >= params.min_leaf {
                        let rs = t.sum - l.sum;
                        let gain = l.sum * l.sum / l.n as f64 + rs * rs / rn as f64 - t.sum * t.sum / t.n as f64;
                        if gain > 1e-12 && best[slot].is_none_or(|b| gain > b.gain) {
                            best[slot] = Some(Best {
                                gain,
                                feature: j,
                                threshold: 0.5 * (last[slot] + v),
                            });
                        }
                    }
                }
                left[slot].n += 1;
                left[slot].sum += resid[i];
                last[slot] = v;
            }
        }
        let mut next = Vec::new();
        for (slot, &node) in frontier.iter().enumerate() {
            if let Some(b) = best[slot] {
                let l = nodes.len();
                nodes.push(Node::Leaf(0.0));
                nodes.push(Node::Leaf(0.0));
                totals.push(Stats::default());
                totals.push(Stats::default());
                nodes[node] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left: l,
                    right: l + 1,
                };
                next.push(l);
                next.push(l + 1);
            }
        }
        for i in 0..n {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = nodes[node_of[i]]
            {
                let child = if x[(i, feature)] <= threshold { left } else { right };
                node_of[i] = child;
                totals[child].n += 1;
                totals[child].sum += resid[i];
            }
        }
        frontier = next;
    }
    for (k, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf(v) = node {
            let t = totals[k];
            *v = if t.n > 0 { t.sum / t.n as f64 } else { 0.0 };
        }
    }
    Tree { nodes }
}

/// Ordinary least squares with an intercept and a tiny ridge for stability.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegressor {
    coef: Vec<f64>,
}

impl LinearRegressor {
    pub fn fit(x: ArrayView2<f64>, y: &[f64]) -> Result<Self> {
        let n = y.len();
        let k = x.ncols() + 1;
        let design = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let mut gram = design.tr_mul(&design);
        for a in 1..k {
            gram[(a, a)] += 1e-8 * n as f64;
        }
        let rhs = design.tr_mul(&DVector::from_column_slice(y));
        let coef = gram
            .cholesky()
            .ok_or_else(|| Error::Singular {
                what: "linear outcome regression".into(),
            })?
            .solve(&rhs);
        Ok(Self {
            coef: coef.iter().copied().collect(),
        })
    }
}

impl MeanOutcomeRegressor for LinearRegressor {
    fn predict(&self, x: &[f64]) -> f64 {
        self.coef[0] + x.iter().zip(&self.coef[1..]).map(|(a, b)| a * b).sum::<f64>()
    }
}
