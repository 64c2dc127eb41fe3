//! CART trees with Gini impurity and a bootstrap-aggregated forest.
//!
//! Split quality is compared exactly: for a split into children with class
//! counts (a_l, b_l) and (a_r, b_r), minimizing weighted Gini impurity is the
//! same as maximizing `(a_l² + b_l²)/n_l + (a_r² + b_r²)/n_r`, which is
//! compared by cross-multiplication in `u128`.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((p as f64).sqrt().ceil() as usize).clamp(1, p.max(1)),
            MaxFeatures::All => p,
            MaxFeatures::Count(k) => k.min(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_features: MaxFeatures::Sqrt, min_samples_split: 2, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { positive: u64, total: u64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    fn leaf(&self, x: &[f64]) -> (u64, u64) {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { positive, total } => return (positive, total),
                TreeNode::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Majority class of the reached leaf; an even split votes negative.
    pub fn vote(&self, x: &[f64]) -> bool {
        let (pos, total) = self.leaf(x);
        2 * pos > total
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, k: usize) -> usize {
            match t.nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    /// Out-of-bag accuracy over rows left out by at least one tree.
    pub oob_accuracy: Option<f64>,
}

/// Split score numerator/denominator: Σ_child (a² + b²)/n as a fraction.
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn of(pos_l: u64, n_l: u64, pos_r: u64, n_r: u64) -> Score {
        let sq = |a: u64, b: u64| (a as u128) * (a as u128) + (b as u128) * (b as u128);
        let (l, r) = (sq(pos_l, n_l - pos_l), sq(pos_r, n_r - pos_r));
        Score { num: l * n_r as u128 + r * n_l as u128, den: n_l as u128 * n_r as u128 }
    }

    fn cmp(&self, other: &Score) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: Score,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    p: usize,
    m: usize,
    min_split: usize,
    rng: seed::Rng,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn best_split_on(&self, f: usize, idx: &mut [usize]) -> Option<Candidate> {
        idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
        let n = idx.len() as u64;
        let total_pos = idx.iter().filter(|&&i| self.y[i]).count() as u64;
        let mut best: Option<Candidate> = None;
        let mut pos_l = 0;
        for k in 0..idx.len() - 1 {
            if self.y[idx[k]] {
                pos_l += 1;
            }
            let (a, b) = (self.x[idx[k]][f], self.x[idx[k + 1]][f]);
            if a == b {
                continue;
            }
            let n_l = k as u64 + 1;
            let score = Score::of(pos_l, n_l, total_pos - pos_l, n - n_l);
            if best.as_ref().is_none_or(|c| score.cmp(&c.score) == Ordering::Greater) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some(Candidate { feature: f, threshold, score });
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count() as u64;
        let total = idx.len() as u64;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { positive: pos, total });
        if idx.len() < self.min_split || pos == 0 || pos == total {
            return id;
        }
        let mut order: Vec<usize> = (0..self.p).collect();
        if self.m < self.p {
            order.shuffle(&mut self.rng);
        }
        let mut head: Vec<usize> = order[..self.m].to_vec();
        head.sort_unstable();
        let mut best: Option<Candidate> = None;
        for &f in &head {
            if let Some(c) = self.best_split_on(f, idx) {
                if best.as_ref().is_none_or(|b| c.score.cmp(&b.score) == Ordering::Greater) {
                    best = Some(c);
                }
            }
        }
        // every sampled feature constant here: keep drawing
        for &f in &order[self.m..] {
            if best.is_some() {
                break;
            }
            best = self.best_split_on(f, idx);
        }
        let Some(c) = best else { return id };
        let (mut l, mut r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][c.feature] <= c.threshold);
        let left = self.grow(&mut l);
        let right = self.grow(&mut r);
        self.nodes[id] = TreeNode::Split { feature: c.feature, threshold: c.threshold, left, right };
        id
    }
}

/// Grows one unpruned tree on the rows listed in `sample` (duplicates allowed).
pub(super) fn grow_tree(
    x: &[Vec<f64>],
    y: &[bool],
    mut sample: Vec<usize>,
    max_features: usize,
    min_split: usize,
    rng: seed::Rng,
) -> DecisionTree {
    let p = x.first().map_or(0, Vec::len);
    let mut b = Builder { x, y, p, m: max_features.min(p), min_split, rng, nodes: Vec::new() };
    b.grow(&mut sample);
    DecisionTree { nodes: b.nodes }
}

impl Forest {
    /// Tree `t` draws its bootstrap sample and feature subsets from
    /// `derive_seed(seed, t)`, so the result does not depend on thread count.
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: &ForestParams, seed_value: u64) -> Forest {
        let n = x.len();
        let p = x.first().map_or(0, Vec::len);
        let m = params.max_features.resolve(p);
        let grown: Vec<(DecisionTree, Vec<bool>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::task_rng(seed_value, t as u64);
                let mut in_bag = vec![!params.bootstrap; n];
                let sample: Vec<usize> = if params.bootstrap {
                    (0..n)
                        .map(|_| {
                            let i = rng.random_range(0..n);
                            in_bag[i] = true;
                            i
                        })
                        .collect()
                } else {
                    (0..n).collect()
                };
                (grow_tree(x, y, sample, m, params.min_samples_split, rng), in_bag)
            })
            .collect();
        let mut correct = 0usize;
        let mut counted = 0usize;
        for i in 0..n {
            let (mut votes, mut trees) = (0usize, 0usize);
            for (tree, in_bag) in &grown {
                if !in_bag[i] {
                    trees += 1;
                    votes += tree.vote(&x[i]) as usize;
                }
            }
            if trees > 0 {
                counted += 1;
                correct += ((2 * votes > trees) == y[i]) as usize;
            }
        }
        let oob_accuracy = (counted > 0).then(|| correct as f64 / counted as f64);
        Forest { trees: grown.into_iter().map(|g| g.0).collect(), oob_accuracy }
    }

    pub fn vote_fraction(&self, x: &[f64]) -> f64 {
        let pos = self.trees.iter().filter(|t| t.vote(x)).count();
        pos as f64 / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_features_rule() {
        assert_eq!(MaxFeatures::Sqrt.resolve(5), 3);
        assert_eq!(MaxFeatures::Sqrt.resolve(9), 3);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::Count(4).resolve(2), 2);
    }

    #[test]
    fn unanimous_forest_scores_one() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let f = Forest::fit(&x, &y, &ForestParams { n_trees: 25, ..Default::default() }, 1);
        assert_eq!(f.vote_fraction(&[100.0]), 1.0);
        assert_eq!(f.vote_fraction(&[-100.0]), 0.0);
    }

    #[test]
    fn constant_features_make_a_single_leaf() {
        let x = vec![vec![1.0, 2.0]; 6];
        let y = vec![true, false, true, false, true, false];
        let t = grow_tree(&x, &y, (0..6).collect(), 1, 2, seed::rng_from_seed(0));
        assert_eq!(t.nodes, vec![TreeNode::Leaf { positive: 3, total: 6 }]);
        assert!(!t.vote(&[1.0, 2.0]));
    }

    #[test]
    fn midpoint_threshold() {
        let x = vec![vec![1.0], vec![2.0], vec![4.0]];
        let y = vec![false, false, true];
        let t = grow_tree(&x, &y, vec![0, 1, 2], 1, 2, seed::rng_from_seed(0));
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, threshold, .. } if threshold == 3.0));
        assert_eq!(t.depth(), 1);
    }
}
