use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SplitRule {
    /// Best threshold over all distinct values of each candidate feature.
    Exact,
    /// One uniformly drawn threshold per candidate feature.
    Random,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features examined per node.
    pub mtry: usize,
    pub rule: SplitRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub(crate) enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if columns[feature][row] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    #[cfg(test)]
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
    gains: Vec<f64>,
    order: Vec<usize>,
    pairs: Vec<(f64, f64)>,
}

impl Builder<'_> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let n = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let mean = sum / n;
        self.nodes.push(Node::Leaf { value: mean });
        let pure = rows.iter().all(|&r| self.y[r] == self.y[rows[0]]);
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf || pure {
            return id;
        }
        let Some(best) = self.find_split(rows, sum) else { return id };
        let column = &self.columns[best.feature];
        let mut split = 0;
        for i in 0..rows.len() {
            if column[rows[i]] <= best.threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        self.gains[best.feature] += best.gain;
        let (l, r) = rows.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn find_split(&mut self, rows: &[usize], sum: f64) -> Option<Best> {
        let n = rows.len();
        let parent = sum * sum / n as f64;
        let min_leaf = self.params.min_leaf;
        self.order.shuffle(self.rng);
        let mut best: Option<Best> = None;
        let mut visited = 0;
        for oi in 0..self.order.len() {
            if visited >= self.params.mtry {
                break;
            }
            let f = self.order[oi];
            let col = &self.columns[f];
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(col[r]), hi.max(col[r])));
            if lo == hi {
                continue;
            }
            visited += 1;
            match self.params.rule {
                SplitRule::Exact => {
                    self.pairs.clear();
                    self.pairs.extend(rows.iter().map(|&r| (col[r], self.y[r])));
                    self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                    let mut left_sum = 0.0;
                    for k in 1..n {
                        left_sum += self.pairs[k - 1].1;
                        if k < min_leaf || n - k < min_leaf || self.pairs[k - 1].0 == self.pairs[k].0 {
                            continue;
                        }
                        let right_sum = sum - left_sum;
                        let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - parent;
                        if best.as_ref().is_none_or(|b| gain > b.gain) {
                            let (a, b) = (self.pairs[k - 1].0, self.pairs[k].0);
                            let mid = a + (b - a) / 2.0;
                            best = Some(Best { feature: f, threshold: if mid < b { mid } else { a }, gain });
                        }
                    }
                }
                SplitRule::Random => {
                    let threshold = self.rng.random_range(lo..hi);
                    let (mut nl, mut left_sum) = (0usize, 0.0);
                    for &r in rows {
                        if col[r] <= threshold {
                            nl += 1;
                            left_sum += self.y[r];
                        }
                    }
                    if nl < min_leaf || n - nl < min_leaf {
                        continue;
                    }
                    let right_sum = sum - left_sum;
                    let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64 - parent;
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(Best { feature: f, threshold, gain });
                    }
                }
            }
        }
        best.filter(|b| b.gain > 0.0)
    }
}

/// Fit one regression tree on `rows` (duplicates allowed). Returns the tree
/// and its per-feature squared-error reduction.
pub(crate) fn fit_tree(
    columns: &[Vec<f64>],
    y: &[f64],
    rows: &mut [usize],
    params: TreeParams,
    rng: &mut ChaCha8Rng,
) -> (Tree, Vec<f64>) {
    let p = columns.len();
    let mut b = Builder {
        columns,
        y,
        params,
        rng,
        nodes: Vec::new(),
        gains: vec![0.0; p],
        order: (0..p).collect(),
        pairs: Vec::with_capacity(rows.len()),
    };
    b.build(rows, 0);
    (Tree { nodes: b.nodes }, b.gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn params(rule: SplitRule) -> TreeParams {
        TreeParams { max_depth: 8, min_leaf: 1, mtry: 1, rule }
    }

    #[test]
    fn step_function_recovered() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| if *v < 20.0 { 1.0 } else { 5.0 }).collect();
        let cols = vec![x];
        let mut rows: Vec<usize> = (0..40).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tree, gains) = fit_tree(&cols, &y, &mut rows, params(SplitRule::Exact), &mut rng);
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.predict(&cols, 3), 1.0);
        assert_eq!(tree.predict(&cols, 30), 5.0);
        // total SSE = 40 * 4 = 160
        assert!((gains[0] - 160.0).abs() < 1e-9);
    }

    #[test]
    fn min_leaf_respected() {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let mut y = vec![0.0; 12];
        y[0] = 100.0;
        let cols = vec![x];
        let mut rows: Vec<usize> = (0..12).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TreeParams { max_depth: 10, min_leaf: 5, mtry: 1, rule: SplitRule::Exact };
        let (tree, _) = fit_tree(&cols, &y, &mut rows, p, &mut rng);
        assert!(tree.n_leaves() <= 2);
    }

    #[test]
    fn random_rule_splits_inside_range() {
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let y = x.clone();
        let cols = vec![x];
        let mut rows: Vec<usize> = (0..100).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (tree, _) = fit_tree(&cols, &y, &mut rows, params(SplitRule::Random), &mut rng);
        assert!(tree.n_leaves() > 4);
        let extreme = vec![vec![1e9]];
        assert!(tree.predict(&extreme, 0).is_finite());
    }
}
