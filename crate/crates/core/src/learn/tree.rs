//! CART trees with Gini impurity, bagged into random forests or extra-trees
//! ensembles.

use std::cmp::Ordering;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_first, check_xy, class_count, ForestParams, LearnError, Matrix};
use crate::{par, seed};

/// How candidate thresholds are chosen for a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Every midpoint between consecutive distinct values.
    Best,
    /// One threshold drawn uniformly between the node's min and max.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        class: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Split quality as the exact fraction `sum_l c^2 / n_l + sum_r c^2 / n_r`.
/// Maximizing it minimizes the weighted Gini impurity of the children.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(left: &[u64], right: &[u64]) -> Self {
        let sq = |c: &[u64]| c.iter().map(|&v| u128::from(v) * u128::from(v)).sum::<u128>();
        let nl = u128::from(left.iter().sum::<u64>());
        let nr = u128::from(right.iter().sum::<u64>());
        Score {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &Score) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: Score,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Higher score wins, then the smaller feature index, then the smaller
    /// threshold.
    fn beats(&self, other: &Candidate) -> bool {
        match self.score.cmp(&other.score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (self.feature, self.threshold) < (other.feature, other.threshold),
        }
    }
}

/// Order-preserving map of floats onto `u64`; both zeros share a key.
fn sort_key(v: f64) -> u64 {
    let b = if v == 0.0 { 0 } else { v.to_bits() };
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// `v` with -0.0 mapped to 0.0.
fn canonical(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Per-feature row order by value (ties by row index) and dense value
/// ranks. Computed once per training matrix and shared by all trees.
pub(crate) struct Presorted {
    order: Vec<Vec<u32>>,
    rank: Vec<Vec<u32>>,
}

impl Presorted {
    pub(crate) fn new(x: &Matrix) -> Self {
        let n = x.rows();
        let mut order = Vec::with_capacity(x.cols());
        let mut rank = Vec::with_capacity(x.cols());
        for f in 0..x.cols() {
            let mut keyed: Vec<(u64, u32)> = (0..n).map(|i| (sort_key(x.get(i, f)), i as u32)).collect();
            keyed.sort_unstable();
            let mut r = vec![0u32; n];
            let mut current = 0;
            for k in 1..n {
                if keyed[k].0 != keyed[k - 1].0 {
                    current += 1;
                }
                r[keyed[k].1 as usize] = current;
            }
            order.push(keyed.into_iter().map(|p| p.1).collect());
            rank.push(r);
        }
        Presorted { order, rank }
    }
}

/// Grows a tree over `idx`, which holds the weighted rows of every feature
/// in value order (or, for random thresholds, one array in row order). A
/// node owns the same range `lo..hi` of every array; splitting stably
/// partitions each range, so the order survives.
struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    w: &'a [u64],
    rank: &'a [Vec<u32>],
    n_classes: usize,
    params: &'a ForestParams,
    rule: SplitRule,
    n_candidates: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    idx: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    tmp: Vec<u32>,
}

impl Builder<'_> {
    fn counts(&self, lo: usize, hi: usize) -> Vec<u64> {
        let mut c = vec![0u64; self.n_classes];
        for &i in &self.idx[0][lo..hi] {
            c[self.y[i as usize]] += self.w[i as usize];
        }
        c
    }

    /// Scores every cut between distinct consecutive values of `feature`.
    fn best_threshold(&self, lo: usize, hi: usize, feature: usize, total: &[u64]) -> Option<Candidate> {
        let vals = &self.idx[feature][lo..hi];
        let rank = &self.rank[feature];
        if rank[vals[0] as usize] == rank[vals[vals.len() - 1] as usize] {
            return None;
        }
        let mut left = vec![0u64; self.n_classes];
        let mut right = total.to_vec();
        let mut best: Option<Candidate> = None;
        for k in 0..vals.len() - 1 {
            let (i, j) = (vals[k] as usize, vals[k + 1] as usize);
            left[self.y[i]] += self.w[i];
            right[self.y[i]] -= self.w[i];
            if rank[j] == rank[i] {
                continue;
            }
            let v = canonical(self.x.get(i, feature));
            let next = canonical(self.x.get(j, feature));
            let mut threshold = v / 2.0 + next / 2.0;
            if !(threshold >= v && threshold < next) {
                threshold = v;
            }
            let c = Candidate {
                score: Score::new(&left, &right),
                feature,
                threshold,
            };
            if best.as_ref().is_none_or(|b| c.beats(b)) {
                best = Some(c);
            }
        }
        best
    }

    fn random_threshold(&mut self, lo: usize, hi: usize, feature: usize) -> Option<Candidate> {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &self.idx[0][lo..hi] {
            let v = self.x.get(i as usize, feature);
            min = min.min(v);
            max = max.max(v);
        }
        if min >= max {
            return None;
        }
        let threshold = self.rng.random_range(min..max);
        let mut left = vec![0u64; self.n_classes];
        let mut right = vec![0u64; self.n_classes];
        for &i in &self.idx[0][lo..hi] {
            let i = i as usize;
            let side = if self.x.get(i, feature) <= threshold {
                &mut left
            } else {
                &mut right
            };
            side[self.y[i]] += self.w[i];
        }
        Some(Candidate {
            score: Score::new(&left, &right),
            feature,
            threshold,
        })
    }

    /// Visits features in random order until `n_candidates` non-constant
    /// ones have been scored.
    fn find_split(&mut self, lo: usize, hi: usize, total: &[u64]) -> Option<Candidate> {
        let d = self.x.cols();
        let mut order: Vec<usize> = (0..d).collect();
        let mut best: Option<Candidate> = None;
        let mut scored = 0;
        for pos in 0..d {
            if scored == self.n_candidates {
                break;
            }
            let j = self.rng.random_range(pos..d);
            order.swap(pos, j);
            let f = order[pos];
            let c = match self.rule {
                SplitRule::Best => self.best_threshold(lo, hi, f, total),
                SplitRule::Random => self.random_threshold(lo, hi, f),
            };
            if let Some(c) = c {
                scored += 1;
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Moves the rows that go left to the front of every feature's range,
    /// keeping their order, and returns how many there are.
    fn partition(&mut self, lo: usize, hi: usize, split: &Candidate) -> usize {
        for &i in &self.idx[0][lo..hi] {
            let i = i as usize;
            self.goes_left[i] = self.x.get(i, split.feature) <= split.threshold;
        }
        let mut n_left = 0;
        for f in 0..self.idx.len() {
            self.tmp.clear();
            let range = &mut self.idx[f][lo..hi];
            let mut k = 0;
            for r in 0..range.len() {
                let i = range[r];
                if self.goes_left[i as usize] {
                    range[k] = i;
                    k += 1;
                } else {
                    self.tmp.push(i);
                }
            }
            range[k..].copy_from_slice(&self.tmp);
            n_left = k;
        }
        n_left
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(lo, hi);
        let leaf = Node::Leaf {
            class: argmax_first(&counts),
        };
        self.nodes.push(leaf);
        let total: u64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let deep = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || deep || total < self.params.min_samples_split as u64 {
            return id;
        }
        let Some(split) = self.find_split(lo, hi, &counts) else {
            return id;
        };
        let mid = lo + self.partition(lo, hi, &split);
        let left = self.grow(lo, mid, depth + 1);
        let right = self.grow(mid, hi, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Grows one tree on rows with positive weight.
pub fn fit_tree(
    x: &Matrix,
    y: &[usize],
    weights: &[u64],
    params: &ForestParams,
    rule: SplitRule,
    seed: u64,
) -> Result<Tree, LearnError> {
    check_xy(x, y)?;
    let sorted = (rule == SplitRule::Best).then(|| Presorted::new(x));
    fit_presorted(x, y, weights, sorted.as_ref(), params, rule, seed)
}

fn fit_presorted(
    x: &Matrix,
    y: &[usize],
    weights: &[u64],
    sorted: Option<&Presorted>,
    params: &ForestParams,
    rule: SplitRule,
    seed: u64,
) -> Result<Tree, LearnError> {
    let weighted = |o: &mut dyn Iterator<Item = u32>| o.filter(|&i| weights[i as usize] > 0).collect::<Vec<u32>>();
    let idx: Vec<Vec<u32>> = match sorted {
        Some(s) => s.order.iter().map(|o| weighted(&mut o.iter().copied())).collect(),
        None => vec![weighted(&mut (0..x.rows() as u32))],
    };
    let m = idx[0].len();
    if m == 0 {
        return Err(LearnError::EmptyInput);
    }
    let mut b = Builder {
        x,
        y,
        w: weights,
        rank: sorted.map_or(&[], |s| &s.rank),
        n_classes: class_count(y),
        params,
        rule,
        n_candidates: params.max_features.resolve(x.cols()),
        rng: seed::rng(seed),
        nodes: Vec::new(),
        idx,
        goes_left: vec![false; x.rows()],
        tmp: Vec::with_capacity(m),
    };
    b.grow(0, m, 0);
    Ok(Tree { nodes: b.nodes })
}

fn row_hash(row: &[f64], label: usize) -> u64 {
    let mut h = seed::mix64(label as u64);
    for v in row {
        h = seed::mix64(h ^ v.to_bits());
    }
    h
}

/// Poisson(1) draw from a 64-bit hash by CDF inversion.
fn poisson_one(h: u64) -> u64 {
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    let mut p = (-1.0f64).exp();
    let mut cdf = p;
    let mut k = 0;
    while u > cdf && k < 32 {
        k += 1;
        p /= k as f64;
        cdf += p;
    }
    k
}

/// Bootstrap multiplicities for one tree. Each row's count depends only on
/// the tree seed and the row's content, so shuffling the training rows does
/// not change the fitted tree.
pub fn bootstrap_weights(row_hashes: &[u64], tree_seed: u64) -> Vec<u64> {
    let w: Vec<u64> = row_hashes
        .iter()
        .map(|&h| poisson_one(seed::derive(tree_seed, &[h])))
        .collect();
    if w.iter().all(|&v| v == 0) {
        vec![1; row_hashes.len()]
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub rule: SplitRule,
    pub n_classes: usize,
    pub trees: Vec<Tree>,
    /// Set when the training labels had a single class; predictions are then
    /// that class.
    pub constant: Option<usize>,
}

impl Forest {
    pub fn is_degenerate(&self) -> bool {
        self.constant.is_some()
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        if let Some(c) = self.constant {
            return c;
        }
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        argmax_first(&votes)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Fits `params.n_trees` trees; tree `t` uses seed `derive(seed, [t])`.
pub fn fit_forest(
    params: &ForestParams,
    rule: SplitRule,
    x: &Matrix,
    y: &[usize],
    seed: u64,
) -> Result<Forest, LearnError> {
    check_xy(x, y)?;
    if params.n_trees == 0 {
        return Err(LearnError::InvalidParameter("n_trees must be positive".into()));
    }
    let n_classes = class_count(y);
    if y.iter().all(|&c| c == y[0]) {
        log::warn!("single-class training data; forest predicts class {}", y[0]);
        return Ok(Forest {
            params: *params,
            rule,
            n_classes,
            trees: Vec::new(),
            constant: Some(y[0]),
        });
    }
    let hashes: Vec<u64> = x.iter_rows().zip(y).map(|(r, &c)| row_hash(r, c)).collect();
    let ones = vec![1u64; x.rows()];
    let sorted = (rule == SplitRule::Best).then(|| Presorted::new(x));
    let trees = par::map_range(params.n_trees, |t| {
        let tree_seed = seed::derive(seed, &[t as u64]);
        if params.bootstrap {
            let w = bootstrap_weights(&hashes, tree_seed);
            fit_presorted(x, y, &w, sorted.as_ref(), params, rule, tree_seed)
        } else {
            fit_presorted(x, y, &ones, sorted.as_ref(), params, rule, tree_seed)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(Forest {
        params: *params,
        rule,
        n_classes,
        trees,
        constant: None,
    })
}
