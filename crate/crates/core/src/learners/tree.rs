//! CART-style decision trees: Gini-grown binary trees over typed features,
//! with optional cost-complexity pruning selected by internal cross-
//! validation. Leaves retain their training members so callers can inspect
//! disjuncts (the training instances a leaf covers).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, LabelledDataset};
use crate::error::{Error, Result};
use crate::seed::Seed;

/// Split predicate: numeric features branch on `value <= t`, nominal
/// features on `value == code`; matching rows go left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitCut {
    Le(f64),
    Eq(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        cut: SplitCut,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training instances covered by this leaf (the disjunct), as
        /// indices into the dataset the tree was grown on.
        members: Vec<usize>,
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

/// A grown (and possibly pruned) decision tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
    n_train: usize,
    pub pruned: bool,
}

/// Grow an unpruned tree (to purity where the features allow it) or a
/// cost-complexity-pruned tree whose penalty is chosen by internal
/// cross-validation on the same rows.
pub fn grow_tree(ds: &LabelledDataset, pruned: bool, seed: Seed) -> Result<DecisionTree> {
    let all: Vec<usize> = (0..ds.n_instances()).collect();
    if pruned {
        DecisionTree::grow_pruned(ds, &all, TreeParams::default(), 3, seed)
    } else {
        DecisionTree::grow(ds, &all, TreeParams::default())
    }
}

impl DecisionTree {
    /// Grow on the given rows with Gini impurity. Stops at pure nodes, the
    /// depth cap, nodes too small to split under `min_leaf`, or nodes whose
    /// features admit no impurity-reducing split.
    pub fn grow(ds: &LabelledDataset, indices: &[usize], params: TreeParams) -> Result<DecisionTree> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset {
                detail: " (tree growing needs rows)".into(),
            });
        }
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            n_classes: ds.n_classes(),
            n_train: indices.len(),
            pruned: false,
        };
        tree.build(ds, indices.to_vec(), 0, &params);
        Ok(tree)
    }

    /// Grow unpruned, then apply weakest-link cost-complexity pruning with
    /// the penalty chosen by `cv_folds`-fold internal validation.
    pub fn grow_pruned(
        ds: &LabelledDataset,
        indices: &[usize],
        params: TreeParams,
        cv_folds: usize,
        seed: Seed,
    ) -> Result<DecisionTree> {
        let full = Self::grow(ds, indices, params)?;
        let alphas = full.alpha_path();
        if alphas.is_empty() {
            let mut t = full;
            t.pruned = true;
            return Ok(t);
        }
        let mut candidates = vec![0.0];
        candidates.extend(alphas);

        // Internal CV: plain seeded round-robin folds (training subsets can
        // be too small for stratification here).
        let folds = cv_folds.min(indices.len()).max(2);
        let mut shuffled = indices.to_vec();
        shuffled.shuffle(&mut seed.rng());
        let mut scores = vec![0.0; candidates.len()];
        let mut usable_folds = 0usize;
        for f in 0..folds {
            let hold: Vec<usize> = shuffled
                .iter()
                .enumerate()
                .filter(|(i, _)| i % folds == f)
                .map(|(_, &v)| v)
                .collect();
            let rest: Vec<usize> = shuffled
                .iter()
                .enumerate()
                .filter(|(i, _)| i % folds != f)
                .map(|(_, &v)| v)
                .collect();
            if hold.is_empty() || rest.is_empty() {
                continue;
            }
            let cv_tree = match Self::grow(ds, &rest, params) {
                Ok(t) => t,
                Err(_) => continue,
            };
            usable_folds += 1;
            for (ci, &alpha) in candidates.iter().enumerate() {
                let mut t = cv_tree.clone();
                t.prune_at(alpha);
                let correct = hold
                    .iter()
                    .filter(|&&i| t.predict(ds.row(i)) == ds.label(i))
                    .count();
                scores[ci] += correct as f64 / hold.len() as f64;
            }
        }

        let mut best = full.clone();
        if usable_folds > 0 {
            // Highest mean accuracy; ties go to the larger penalty
            // (the smaller tree).
            let mut best_ci = 0;
            for ci in 1..candidates.len() {
                if scores[ci] >= scores[best_ci] - 1e-12 {
                    best_ci = ci;
                }
            }
            best.prune_at(candidates[best_ci]);
        }
        best.pruned = true;
        Ok(best)
    }

    fn build(&mut self, ds: &LabelledDataset, members: Vec<usize>, depth: usize, params: &TreeParams) -> usize {
        let counts = tally(ds, &members, self.n_classes);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_stop = params.max_depth.is_some_and(|d| depth >= d);
        let size_stop = members.len() < 2 * params.min_leaf.max(1);
        let split = if pure || depth_stop || size_stop {
            None
        } else {
            best_split(ds, &members, &counts, params.min_leaf.max(1))
        };
        match split {
            None => {
                let id = self.nodes.len();
                self.nodes.push(Node::Leaf { members, counts });
                id
            }
            Some((feature, cut, left_m, right_m)) => {
                let id = self.nodes.len();
                // Placeholder; children patched after recursion.
                self.nodes.push(Node::Leaf {
                    members: Vec::new(),
                    counts: Vec::new(),
                });
                let left = self.build(ds, left_m, depth + 1, params);
                let right = self.build(ds, right_m, depth + 1, params);
                self.nodes[id] = Node::Split {
                    feature,
                    cut,
                    left,
                    right,
                };
                id
            }
        }
    }

    /// Leaf node id covering `row`.
    pub fn leaf_for(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    cut,
                    left,
                    right,
                } => {
                    let v = row[*feature];
                    let goes_left = match cut {
                        SplitCut::Le(t) => v <= *t,
                        SplitCut::Eq(code) => v == *code,
                    };
                    id = if goes_left { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_members(&self, id: usize) -> &[usize] {
        match &self.nodes[id] {
            Node::Leaf { members, .. } => members,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    pub fn leaf_counts(&self, id: usize) -> &[usize] {
        match &self.nodes[id] {
            Node::Leaf { counts, .. } => counts,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    pub fn predict_counts(&self, row: &[f64]) -> &[usize] {
        self.leaf_counts(self.leaf_for(row))
    }

    /// Majority class of the covering leaf (ties to the lower class code).
    pub fn predict(&self, row: &[f64]) -> usize {
        let counts = self.predict_counts(row);
        argmax_usize(counts)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// Reachable leaf ids.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { .. } => out.push(id),
                Node::Split { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    /// Largest disjunct (training members of the biggest reachable leaf).
    pub fn max_leaf_size(&self) -> usize {
        self.leaves()
            .iter()
            .map(|&id| self.leaf_members(id).len())
            .max()
            .unwrap_or(0)
    }

    /// Sequence of weakest-link penalties at which the tree shrinks, in
    /// collapse order (non-decreasing).
    fn alpha_path(&self) -> Vec<f64> {
        let mut t = self.clone();
        let mut alphas = Vec::new();
        while let Some((g, id)) = t.weakest_link() {
            alphas.push(g);
            t.collapse(id);
        }
        alphas
    }

    /// Collapse every internal node whose link strength is at most `alpha`.
    fn prune_at(&mut self, alpha: f64) {
        while let Some((g, id)) = self.weakest_link() {
            if g <= alpha + 1e-12 {
                self.collapse(id);
            } else {
                break;
            }
        }
    }

    /// `(g, node)` minimising the cost-complexity link strength
    /// `g(t) = (err_collapsed - err_subtree) / (leaves - 1)`, errors as
    /// fractions of the training size. Ties go to the lower node id.
    fn weakest_link(&self) -> Option<(f64, usize)> {
        let n = self.n_train as f64;
        let mut best: Option<(f64, usize)> = None;
        for id in 0..self.nodes.len() {
            if !self.reachable(id) {
                continue;
            }
            if let Node::Split { .. } = self.nodes[id] {
                let (count_total, counts, leaf_err, leaves) = self.subtree_stats(id);
                let collapsed_err = count_total - counts.iter().max().copied().unwrap_or(0);
                let g = (collapsed_err as f64 - leaf_err as f64) / n / (leaves as f64 - 1.0).max(1.0);
                match best {
                    Some((bg, _)) if bg <= g => {}
                    _ => best = Some((g, id)),
                }
            }
        }
        best
    }

    fn reachable(&self, target: usize) -> bool {
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if id == target {
                return true;
            }
            if let Node::Split { left, right, .. } = &self.nodes[id] {
                stack.push(*left);
                stack.push(*right);
            }
        }
        false
    }

    /// `(member count, class counts, misclassified-in-leaves, leaf count)`
    /// of the subtree rooted at `id`.
    fn subtree_stats(&self, id: usize) -> (usize, Vec<usize>, usize, usize) {
        let mut total = 0usize;
        let mut counts = vec![0usize; self.n_classes];
        let mut err = 0usize;
        let mut leaves = 0usize;
        let mut stack = vec![id];
        while let Some(nid) = stack.pop() {
            match &self.nodes[nid] {
                Node::Leaf {
                    members,
                    counts: leaf_counts,
                } => {
                    leaves += 1;
                    total += members.len();
                    let max = leaf_counts.iter().max().copied().unwrap_or(0);
                    err += members.len() - max;
                    for (c, &k) in leaf_counts.iter().enumerate() {
                        counts[c] += k;
                    }
                }
                Node::Split { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        (total, counts, err, leaves)
    }

    fn collapse(&mut self, id: usize) {
        let (_, counts, _, _) = self.subtree_stats(id);
        let mut members = Vec::new();
        let mut stack = vec![id];
        while let Some(nid) = stack.pop() {
            match &self.nodes[nid] {
                Node::Leaf { members: m, .. } => members.extend_from_slice(m),
                Node::Split { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        members.sort_unstable();
        self.nodes[id] = Node::Leaf { members, counts };
    }
}

fn tally(ds: &LabelledDataset, members: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &i in members {
        counts[ds.label(i)] += 1;
    }
    counts
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

pub(crate) fn argmax_usize(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

type Split = (usize, SplitCut, Vec<usize>, Vec<usize>);

/// Best Gini-gain split of `members`, or `None` when no valid split
/// exists under `min_leaf`. Any valid split qualifies — impurity gain is
/// never negative, and a zero-gain split still makes progress toward
/// purity (the balanced-XOR case) — so growth stops on purity or size,
/// not on gain. First feature / lowest threshold wins ties for
/// determinism.
fn best_split(
    ds: &LabelledDataset,
    members: &[usize],
    parent_counts: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = members.len();
    let n_classes = parent_counts.len();
    let parent_gini = gini(parent_counts, n);
    let mut best: Option<(f64, usize, SplitCut)> = None;
    let mut consider = |gain: f64, feature: usize, cut: SplitCut| {
        let better = match &best {
            None => true,
            Some((bg, _, _)) => gain > bg + 1e-12,
        };
        if better {
            best = Some((gain, feature, cut));
        }
    };

    for (j, decl) in ds.schema.features.iter().enumerate() {
        match decl.kind {
            FeatureKind::Nominal => {
                // Singleton category vs. the rest.
                let n_cats = ds.categories(j).len();
                for code in 0..n_cats {
                    let mut left_counts = vec![0usize; n_classes];
                    let mut left_n = 0usize;
                    for &i in members {
                        if ds.row(i)[j] as usize == code {
                            left_counts[ds.label(i)] += 1;
                            left_n += 1;
                        }
                    }
                    let right_n = n - left_n;
                    if left_n < min_leaf || right_n < min_leaf {
                        continue;
                    }
                    let right_counts: Vec<usize> = parent_counts
                        .iter()
                        .zip(&left_counts)
                        .map(|(&p, &l)| p - l)
                        .collect();
                    let weighted = (left_n as f64 * gini(&left_counts, left_n)
                        + right_n as f64 * gini(&right_counts, right_n))
                        / n as f64;
                    consider(parent_gini - weighted, j, SplitCut::Eq(code as f64));
                }
            }
            _ => {
                // Threshold sweep over sorted values.
                let mut vals: Vec<(f64, usize)> = members.iter().map(|&i| (ds.row(i)[j], i)).collect();
                vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let mut left_counts = vec![0usize; n_classes];
                for idx in 0..n - 1 {
                    left_counts[ds.label(vals[idx].1)] += 1;
                    if vals[idx].0 == vals[idx + 1].0 {
                        continue; // not a boundary between distinct values
                    }
                    let left_n = idx + 1;
                    let right_n = n - left_n;
                    if left_n < min_leaf || right_n < min_leaf {
                        continue;
                    }
                    let right_counts: Vec<usize> = parent_counts
                        .iter()
                        .zip(&left_counts)
                        .map(|(&p, &l)| p - l)
                        .collect();
                    let weighted = (left_n as f64 * gini(&left_counts, left_n)
                        + right_n as f64 * gini(&right_counts, right_n))
                        / n as f64;
                    let threshold = (vals[idx].0 + vals[idx + 1].0) / 2.0;
                    consider(parent_gini - weighted, j, SplitCut::Le(threshold));
                }
            }
        }
    }
    // Materialise member lists only for the winning cut; membership order
    // is preserved, so children stay sorted whenever the parent was.
    best.map(|(_, feature, cut)| {
        let mut lm = Vec::new();
        let mut rm = Vec::new();
        for &i in members {
            let v = ds.row(i)[feature];
            let goes_left = match cut {
                SplitCut::Le(threshold) => v <= threshold,
                SplitCut::Eq(code) => v == code,
            };
            if goes_left {
                lm.push(i);
            } else {
                rm.push(i);
            }
        }
        (feature, cut, lm, rm)
    })
}
