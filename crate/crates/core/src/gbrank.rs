//! LambdaMART: gradient-boosted regression trees driven by pairwise
//! RankNet gradients.
//!
//! For every pair `(i, j)` in a group with `label_i > label_j` the loss is
//! `ln(1 + exp(-σ (s_i - s_j)))`. Each boosting round computes per-item
//! gradients and Hessians of the summed loss at the current ensemble scores,
//! grows one tree with exact greedy second-order splits, and sets each leaf to
//! the Newton step `-Σg / (Σh + λ)`. Row subsampling draws whole groups so
//! that no pair is split across the boundary.

use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank::rank_descending;

/// One query: a list of items with their features and graded relevance.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Fraction of features offered to each tree.
    pub colsample: f64,
    /// Fraction of groups used to grow each tree.
    pub subsample: f64,
    pub sigmoid_scale: f64,
    pub min_samples_leaf: usize,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 110,
            max_depth: 6,
            learning_rate: 0.1,
            colsample: 0.9,
            subsample: 0.75,
            sigmoid_scale: 1.0,
            min_samples_leaf: 1,
            min_child_weight: 1.0,
            reg_lambda: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad("colsample must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.sigmoid_scale > 0.0 && self.sigmoid_scale.is_finite()) {
            return bad("sigmoid_scale must be positive");
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return bad("reg_lambda must be non-negative");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be non-negative");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gradient {
    pub grad: f64,
    pub hess: f64,
}

/// First and second derivatives of the group's summed pairwise logistic
/// loss with respect to each item score.
pub fn lambda_gradients(scores: &[f64], labels: &[u8], sigma: f64) -> Vec<Gradient> {
    let mut out = vec![Gradient::default(); scores.len()];
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] <= labels[j] {
                continue;
            }
            let rho = 1.0 / (1.0 + (sigma * (scores[i] - scores[j])).exp());
            let lambda = sigma * rho;
            let h = sigma * sigma * rho * (1.0 - rho);
            out[i].grad -= lambda;
            out[j].grad += lambda;
            out[i].hess += h;
            out[j].hess += h;
        }
    }
    out
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Summed pairwise logistic loss of one group.
pub fn pairwise_loss(scores: &[f64], labels: &[u8], sigma: f64) -> f64 {
    let mut loss = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] > labels[j] {
                loss += softplus(-sigma * (scores[i] - scores[j]));
            }
        }
    }
    loss
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary tree stored as a node array with the root at index 0. A row goes
/// left when `x[feature] < threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// A depth-one tree.
    pub fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Self {
        RegressionTree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: left },
                Node::Leaf { value: right },
            ],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    fn to_nested(&self, i: usize) -> NestedNode {
        match self.nodes[i] {
            Node::Leaf { value } => NestedNode::Leaf(value),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => NestedNode::Split(
                feature,
                threshold,
                Box::new(self.to_nested(left)),
                Box::new(self.to_nested(right)),
            ),
        }
    }

    fn from_nested(root: &NestedNode) -> Self {
        fn push(nodes: &mut Vec<Node>, n: &NestedNode) -> usize {
            let at = nodes.len();
            match n {
                NestedNode::Leaf(value) => nodes.push(Node::Leaf { value: *value }),
                NestedNode::Split(feature, threshold, l, r) => {
                    nodes.push(Node::Leaf { value: 0.0 });
                    let left = push(nodes, l);
                    let right = push(nodes, r);
                    nodes[at] = Node::Split {
                        feature: *feature,
                        threshold: *threshold,
                        left,
                        right,
                    };
                }
            }
            at
        }
        let mut nodes = Vec::new();
        push(&mut nodes, root);
        RegressionTree { nodes }
    }
}

/// Serialized tree: a leaf is a bare number, a split is
/// `[feature, threshold, left, right]`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum NestedNode {
    Leaf(f64),
    Split(usize, f64, Box<NestedNode>, Box<NestedNode>),
}

pub const MODEL_FORMAT: &str = "vwsd-rank-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    feature_count: usize,
    learning_rate: f64,
    config: TrainConfig,
    trees: Vec<NestedNode>,
}

/// Additive tree ensemble: `score(x) = Σ learning_rate · tree(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankModel {
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub feature_count: usize,
    pub config: TrainConfig,
}

impl RankModel {
    /// A model without trees; it scores everything 0.
    pub fn empty(feature_count: usize) -> Self {
        RankModel {
            trees: Vec::new(),
            learning_rate: TrainConfig::default().learning_rate,
            feature_count,
            config: TrainConfig::default(),
        }
    }

    fn score_row(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for tree in &self.trees {
            s += self.learning_rate * tree.predict(x);
        }
        s
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_count {
            return Err(Error::FeatureCountMismatch {
                expected: self.feature_count,
                found: x.len(),
            });
        }
        Ok(self.score_row(x))
    }

    pub fn predict<V: AsRef<[f64]>>(&self, rows: &[V]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_one(r.as_ref())).collect()
    }

    /// Item indices best first; ties keep input order.
    pub fn rank<V: AsRef<[f64]>>(&self, rows: &[V]) -> Result<Vec<usize>> {
        Ok(rank_descending(&self.predict(rows)?))
    }

    /// The model restricted to its first `n` trees.
    pub fn truncated(&self, n: usize) -> Self {
        RankModel {
            trees: self.trees[..n.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            feature_count: self.feature_count,
            learning_rate: self.learning_rate,
            config: self.config.clone(),
            trees: self.trees.iter().map(|t| t.to_nested(0)).collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.format != MODEL_FORMAT {
            return Err(format!("unexpected format '{}'", file.format));
        }
        if file.version != MODEL_VERSION {
            return Err(format!("unsupported model version {}", file.version));
        }
        let trees: Vec<RegressionTree> =
            file.trees.iter().map(RegressionTree::from_nested).collect();
        for tree in &trees {
            for node in tree.nodes() {
                if let Node::Split {
                    feature, threshold, ..
                } = node
                {
                    if *feature >= file.feature_count || !threshold.is_finite() {
                        return Err(format!("invalid split on feature {feature}"));
                    }
                }
            }
        }
        Ok(RankModel {
            trees,
            learning_rate: file.learning_rate,
            feature_count: file.feature_count,
            config: file.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|m| Error::format(path, m))
    }
}

/// Row-major training matrix with group boundaries.
struct TrainData {
    x: Vec<f64>,
    labels: Vec<u8>,
    groups: Vec<std::ops::Range<usize>>,
    features: usize,
}

impl TrainData {
    fn new(groups: &[QueryGroup], features: usize) -> Result<Self> {
        let mut x = Vec::new();
        let mut labels = Vec::new();
        let mut ranges = Vec::with_capacity(groups.len());
        for g in groups {
            if g.features.len() != g.labels.len() {
                return Err(Error::Config(
                    "group has mismatched features and labels".into(),
                ));
            }
            let start = labels.len();
            for (row, &label) in g.features.iter().zip(&g.labels) {
                if row.len() != features {
                    return Err(Error::FeatureCountMismatch {
                        expected: features,
                        found: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("non-finite feature value".into()));
                }
                x.extend_from_slice(row);
                labels.push(label);
            }
            ranges.push(start..labels.len());
        }
        Ok(TrainData {
            x,
            labels,
            groups: ranges,
            features,
        })
    }

    fn rows(&self) -> usize {
        self.labels.len()
    }

    fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.features + feature]
    }

    fn row(&self, row: usize) -> &[f64] {
        &self.x[row * self.features..(row + 1) * self.features]
    }
}

const INACTIVE: u32 = u32::MAX;
const MIN_SPLIT_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default)]
struct NodeStats {
    g: f64,
    h: f64,
    count: usize,
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct TreeGrower<'a> {
    data: &'a TrainData,
    presorted: &'a [Vec<u32>],
    grads: &'a [Gradient],
    config: &'a TrainConfig,
}

impl TreeGrower<'_> {
    fn leaf_value(&self, s: &NodeStats) -> f64 {
        let denom = s.h + self.config.reg_lambda;
        if denom > 0.0 {
            -s.g / denom
        } else {
            0.0
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.config.reg_lambda;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    /// Best split of every frontier node on one feature.
    fn scan_feature(
        &self,
        feature: usize,
        node_of: &[u32],
        frontier: &[NodeStats],
    ) -> Vec<Option<SplitCandidate>> {
        let min_leaf = self.config.min_samples_leaf;
        let min_weight = self.config.min_child_weight;
        let mut left = vec![NodeStats::default(); frontier.len()];
        let mut last: Vec<Option<f64>> = vec![None; frontier.len()];
        let mut best: Vec<Option<SplitCandidate>> = vec![None; frontier.len()];
        for &row in &self.presorted[feature] {
            let slot = node_of[row as usize];
            if slot == INACTIVE {
                continue;
            }
            let slot = slot as usize;
            let v = self.data.value(row as usize, feature);
            let total = frontier[slot];
            let l = left[slot];
            if let Some(prev) = last[slot] {
                if v > prev
                    && l.count >= min_leaf
                    && total.count - l.count >= min_leaf
                    && l.h >= min_weight
                    && total.h - l.h >= min_weight
                {
                    let gain = self.score(l.g, l.h) + self.score(total.g - l.g, total.h - l.h)
                        - self.score(total.g, total.h);
                    if gain > MIN_SPLIT_GAIN && best[slot].is_none_or(|b| gain > b.gain) {
                        let mut threshold = prev + (v - prev) / 2.0;
                        if threshold <= prev {
                            threshold = v;
                        }
                        best[slot] = Some(SplitCandidate {
                            gain,
                            feature,
                            threshold,
                        });
                    }
                }
            }
            let g = self.grads[row as usize];
            let l = &mut left[slot];
            l.g += g.grad;
            l.h += g.hess;
            l.count += 1;
            last[slot] = Some(v);
        }
        best
    }

    fn grow(&self, in_sample: &[bool], features: &[usize]) -> RegressionTree {
        let rows = self.data.rows();
        let mut node_of = vec![INACTIVE; rows];
        let mut root = NodeStats::default();
        for r in 0..rows {
            if in_sample[r] {
                node_of[r] = 0;
                root.g += self.grads[r].grad;
                root.h += self.grads[r].hess;
                root.count += 1;
            }
        }
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        // frontier[slot] is the node index and stats of an open leaf
        let mut frontier: Vec<(usize, NodeStats)> = vec![(0, root)];

        for depth in 0..=self.config.max_depth {
            if frontier.is_empty() {
                break;
            }
            let stats: Vec<NodeStats> = frontier.iter().map(|(_, s)| *s).collect();
            let best: Vec<Option<SplitCandidate>> = if depth == self.config.max_depth {
                vec![None; frontier.len()]
            } else {
                let per_feature: Vec<Vec<Option<SplitCandidate>>> = features
                    .par_iter()
                    .map(|&f| self.scan_feature(f, &node_of, &stats))
                    .collect();
                // reduce in feature order so ties resolve to the lowest feature
                let mut best = vec![None; frontier.len()];
                for cands in per_feature {
                    for (slot, c) in cands.into_iter().enumerate() {
                        if let Some(c) = c {
                            let b: &mut Option<SplitCandidate> = &mut best[slot];
                            if b.is_none_or(|b| c.gain > b.gain) {
                                *b = Some(c);
                            }
                        }
                    }
                }
                best
            };

            // slot -> (feature, threshold, left slot, right slot)
            let mut routing: Vec<Option<(usize, f64, u32, u32)>> = vec![None; frontier.len()];
            let mut next: Vec<(usize, NodeStats)> = Vec::new();
            for (slot, (node, s)) in frontier.iter().enumerate() {
                match best[slot] {
                    Some(c) => {
                        let left = nodes.len();
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes[*node] = Node::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left,
                            right: left + 1,
                        };
                        let ls = next.len() as u32;
                        next.push((left, NodeStats::default()));
                        next.push((left + 1, NodeStats::default()));
                        routing[slot] = Some((c.feature, c.threshold, ls, ls + 1));
                    }
                    None => {
                        nodes[*node] = Node::Leaf {
                            value: self.leaf_value(s),
                        };
                    }
                }
            }
            for (r, slot_of) in node_of.iter_mut().enumerate() {
                let slot = *slot_of;
                if slot == INACTIVE {
                    continue;
                }
                *slot_of = match routing[slot as usize] {
                    Some((f, t, l, rr)) => {
                        let child = if self.data.value(r, f) < t { l } else { rr };
                        let s = &mut next[child as usize].1;
                        s.g += self.grads[r].grad;
                        s.h += self.grads[r].hess;
                        s.count += 1;
                        child
                    }
                    None => INACTIVE,
                };
            }
            frontier = next;
        }
        let grown = RegressionTree { nodes };
        RegressionTree::from_nested(&grown.to_nested(0))
    }
}

/// Trains a LambdaMART ensemble. Deterministic for a fixed `config.seed`.
pub fn fit(groups: &[QueryGroup], feature_count: usize, config: &TrainConfig) -> Result<RankModel> {
    config.validate()?;
    if groups.is_empty() {
        return Err(Error::NoLabeledGroups);
    }
    if feature_count == 0 {
        return Err(Error::Config("feature_count must be positive".into()));
    }
    let data = TrainData::new(groups, feature_count)?;
    let presorted: Vec<Vec<u32>> = (0..feature_count)
        .map(|f| {
            let mut idx: Vec<u32> = (0..data.rows() as u32).collect();
            idx.sort_by(|&a, &b| {
                data.value(a as usize, f)
                    .total_cmp(&data.value(b as usize, f))
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let n_groups = data.groups.len();
    let groups_per_tree =
        ((config.subsample * n_groups as f64).round() as usize).clamp(1, n_groups);
    let features_per_tree =
        ((config.colsample * feature_count as f64).floor() as usize).clamp(1, feature_count);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scores = vec![0.0; data.rows()];
    let mut grads = vec![Gradient::default(); data.rows()];
    let mut in_sample = vec![false; data.rows()];
    let mut trees = Vec::with_capacity(config.n_trees);

    for _ in 0..config.n_trees {
        let chosen_groups = if groups_per_tree == n_groups {
            (0..n_groups).collect()
        } else {
            let mut v = sample_indices(&mut rng, n_groups, groups_per_tree).into_vec();
            v.sort_unstable();
            v
        };
        let features: Vec<usize> = if features_per_tree == feature_count {
            (0..feature_count).collect()
        } else {
            let mut v = sample_indices(&mut rng, feature_count, features_per_tree).into_vec();
            v.sort_unstable();
            v
        };

        grads.iter_mut().for_each(|g| *g = Gradient::default());
        in_sample.iter_mut().for_each(|b| *b = false);
        for &gi in &chosen_groups {
            let range = data.groups[gi].clone();
            let lg = lambda_gradients(
                &scores[range.clone()],
                &data.labels[range.clone()],
                config.sigmoid_scale,
            );
            grads[range.clone()].copy_from_slice(&lg);
            in_sample[range].iter_mut().for_each(|b| *b = true);
        }

        let tree = TreeGrower {
            data: &data,
            presorted: &presorted,
            grads: &grads,
            config,
        }
        .grow(&in_sample, &features);

        for (r, s) in scores.iter_mut().enumerate() {
            *s += config.learning_rate * tree.predict(data.row(r));
        }
        trees.push(tree);
    }

    Ok(RankModel {
        trees,
        learning_rate: config.learning_rate,
        feature_count,
        config: config.clone(),
    })
}
