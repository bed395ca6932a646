use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Row;
use crate::features::N_FEATURES;
use crate::{exec, seed, ExecMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Genuine fraction of the training rows that reached the leaf.
    Leaf { value: f64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART tree with Gini splits; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

struct Grower<'a> {
    x: &'a [Row],
    y: &'a [bool],
    max_depth: usize,
    min_leaf: usize,
    features_per_split: usize,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Grower<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        match self.rng.as_deref_mut() {
            Some(rng) if self.features_per_split < N_FEATURES => {
                let mut f = index::sample(rng, N_FEATURES, self.features_per_split).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..N_FEATURES).collect(),
        }
    }

    /// Best (feature, threshold) by weighted Gini. Ties go to the lower
    /// feature index, then the lower threshold.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let pos_total = idx.iter().filter(|&&i| self.y[i]).count();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n);
        for f in self.candidate_features() {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut pos_left = 0;
            for i in 0..n - 1 {
                pos_left += usize::from(pairs[i].1);
                let nl = i + 1;
                if pairs[i].0 == pairs[i + 1].0 || nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let impurity =
                    (nl as f64 * gini(pos_left, nl) + (n - nl) as f64 * gini(pos_total - pos_left, n - nl)) / n as f64;
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    let (lo, hi) = (pairs[i].0, pairs[i + 1].0);
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((impurity, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        self.nodes.push(Node::Leaf {
            value: pos as f64 / idx.len() as f64,
        });
        if depth >= self.max_depth || pos == 0 || pos == idx.len() || idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl Tree {
    /// Grows a tree on the rows `idx` (duplicates allowed). With `rng` set
    /// and `features_per_split < 15`, each node considers a random feature
    /// subset.
    pub(super) fn grow(
        x: &[Row],
        y: &[bool],
        idx: &[usize],
        max_depth: usize,
        min_leaf: usize,
        features_per_split: usize,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Tree {
        let mut g = Grower {
            x,
            y,
            max_depth,
            min_leaf: min_leaf.max(1),
            features_per_split,
            rng,
            nodes: Vec::new(),
        };
        g.grow(idx.to_vec(), 0);
        Tree { nodes: g.nodes }
    }

    pub fn score(&self, z: &Row) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if z[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Seed of tree `i` in a forest trained with `seed`.
pub fn forest_tree_seed(seed: u64, i: usize) -> u64 {
    seed::derive(seed, &["tree", &i.to_string()])
}

/// The bootstrap rows for one tree: the first `n` draws of its stream.
pub fn bootstrap_indices(n: usize, tree_seed: u64) -> Vec<usize> {
    bootstrap_with(&mut seed::rng(tree_seed), n)
}

fn bootstrap_with(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub(super) fn grow_forest(
    z: &[Row],
    y: &[bool],
    n_trees: usize,
    max_depth: usize,
    features_per_split: usize,
    seed: u64,
    mode: ExecMode,
) -> Vec<Tree> {
    exec::map_range(mode, n_trees, |i| {
        let mut rng = seed::rng(forest_tree_seed(seed, i));
        let sample = bootstrap_with(&mut rng, z.len());
        Tree::grow(z, y, &sample, max_depth, 1, features_per_split, Some(&mut rng))
    })
}
