//! A single CART tree grown on a bootstrap sample.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `value <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        /// Where rows with a MISSING value go.
        missing_left: bool,
    },
    /// Regression: `[mean]`. Classification: class frequencies.
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right, missing_left } => {
                    let x = row[*feature];
                    let go_left = if x.is_nan() { *missing_left } else { x <= *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) enum TargetRef<'a> {
    Numeric(&'a [f64]),
    Labels(&'a [usize], usize),
}

pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

/// Sufficient statistics of a set of rows.
#[derive(Clone)]
enum Stats {
    Reg { n: f64, sum: f64, sumsq: f64 },
    Cls { n: f64, counts: Vec<f64> },
}

impl Stats {
    fn empty(target: &TargetRef<'_>) -> Stats {
        match target {
            TargetRef::Numeric(_) => Stats::Reg { n: 0.0, sum: 0.0, sumsq: 0.0 },
            TargetRef::Labels(_, k) => Stats::Cls { n: 0.0, counts: vec![0.0; *k] },
        }
    }

    fn add(&mut self, target: &TargetRef<'_>, row: usize) {
        match (self, target) {
            (Stats::Reg { n, sum, sumsq }, TargetRef::Numeric(y)) => {
                *n += 1.0;
                *sum += y[row];
                *sumsq += y[row] * y[row];
            }
            (Stats::Cls { n, counts }, TargetRef::Labels(y, _)) => {
                *n += 1.0;
                counts[y[row]] += 1.0;
            }
            _ => unreachable!("stats/target mismatch"),
        }
    }

    fn sub(&mut self, target: &TargetRef<'_>, row: usize) {
        match (self, target) {
            (Stats::Reg { n, sum, sumsq }, TargetRef::Numeric(y)) => {
                *n -= 1.0;
                *sum -= y[row];
                *sumsq -= y[row] * y[row];
            }
            (Stats::Cls { n, counts }, TargetRef::Labels(y, _)) => {
                *n -= 1.0;
                counts[y[row]] -= 1.0;
            }
            _ => unreachable!("stats/target mismatch"),
        }
    }

    fn n(&self) -> f64 {
        match self {
            Stats::Reg { n, .. } | Stats::Cls { n, .. } => *n,
        }
    }

    /// Sum of squared deviations (regression) or n·Gini (classification).
    fn weighted_impurity(&self) -> f64 {
        match self {
            Stats::Reg { n, sum, sumsq } => {
                if *n == 0.0 {
                    0.0
                } else {
                    (sumsq - sum * sum / n).max(0.0)
                }
            }
            Stats::Cls { n, counts } => {
                if *n == 0.0 {
                    0.0
                } else {
                    n - counts.iter().map(|c| c * c).sum::<f64>() / n
                }
            }
        }
    }

    fn leaf_value(&self) -> Vec<f64> {
        match self {
            Stats::Reg { n, sum, .. } => vec![if *n > 0.0 { sum / n } else { 0.0 }],
            Stats::Cls { n, counts } => counts.iter().map(|c| if *n > 0.0 { c / n } else { 0.0 }).collect(),
        }
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grow one tree on `sample` (row indices, duplicates allowed). Impurity
/// decrease per feature is added to `importance`.
pub(crate) fn grow(
    columns: &[Vec<f64>],
    target: &TargetRef<'_>,
    sample: Vec<usize>,
    params: &GrowParams,
    rng: &mut Stream,
    importance: &mut [f64],
) -> Tree {
    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, sample, 0usize)];
    nodes.push(Node::Leaf { value: Vec::new() });
    let p = columns.len();
    let mut order: Vec<usize> = (0..p).collect();
    let mut buf: Vec<(f64, usize)> = Vec::new();

    while let Some((slot, rows, depth)) = stack.pop() {
        let mut stats = Stats::empty(target);
        for &r in &rows {
            stats.add(target, r);
        }
        let impurity = stats.weighted_impurity();
        let scale = stats.n().max(1.0);
        let stop = rows.len() < 2 * params.min_leaf
            || params.max_depth.is_some_and(|d| depth >= d)
            || impurity <= 1e-12 * scale;

        let best = if stop {
            None
        } else {
            order.shuffle(rng);
            let mut best: Option<Split> = None;
            let mut informative = 0;
            for &f in &order {
                if informative >= params.features_per_split {
                    break;
                }
                let col = &columns[f];
                buf.clear();
                buf.extend(rows.iter().filter(|&&r| !col[r].is_nan()).map(|&r| (col[r], r)));
                if buf.len() < 2 * params.min_leaf {
                    continue;
                }
                buf.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if buf[0].0 == buf[buf.len() - 1].0 {
                    continue;
                }
                informative += 1;

                let mut right = Stats::empty(target);
                for &(_, r) in buf.iter() {
                    right.add(target, r);
                }
                let parent = right.weighted_impurity();
                let mut left = Stats::empty(target);
                for i in 0..buf.len() - 1 {
                    let r = buf[i].1;
                    left.add(target, r);
                    right.sub(target, r);
                    let (lo, hi) = (buf[i].0, buf[i + 1].0);
                    if lo == hi || i + 1 < params.min_leaf || buf.len() - i - 1 < params.min_leaf {
                        continue;
                    }
                    let gain = parent - left.weighted_impurity() - right.weighted_impurity();
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        let mid = lo + (hi - lo) / 2.0;
                        let threshold = if mid < hi { mid } else { lo };
                        best = Some(Split { feature: f, threshold, gain });
                    }
                }
            }
            best.filter(|b| b.gain > 1e-12 * scale)
        };

        match best {
            None => nodes[slot] = Node::Leaf { value: stats.leaf_value() },
            Some(split) => {
                importance[split.feature] += split.gain;
                let col = &columns[split.feature];
                let (mut left, mut right, mut missing) = (Vec::new(), Vec::new(), Vec::new());
                for &r in &rows {
                    let x = col[r];
                    if x.is_nan() {
                        missing.push(r);
                    } else if x <= split.threshold {
                        left.push(r);
                    } else {
                        right.push(r);
                    }
                }
                let missing_left = left.len() >= right.len();
                if missing_left {
                    left.append(&mut missing);
                } else {
                    right.append(&mut missing);
                }
                let l = nodes.len();
                nodes.push(Node::Leaf { value: Vec::new() });
                let r = nodes.len();
                nodes.push(Node::Leaf { value: Vec::new() });
                nodes[slot] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: l,
                    right: r,
                    missing_left,
                };
                stack.push((r, right, depth + 1));
                stack.push((l, left, depth + 1));
            }
        }
    }
    Tree { nodes }
}

/// `n` draws with replacement from `0..n`.
pub(crate) fn bootstrap(rng: &mut Stream, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn params(min_leaf: usize) -> GrowParams {
        GrowParams { max_depth: None, min_leaf, features_per_split: 1 }
    }

    #[test]
    fn stump_splits_between_groups() {
        let x = vec![vec![1.0, 2.0, 3.0, 10.0, 11.0, 12.0]];
        let y = [5.0, 5.0, 5.0, 20.0, 20.0, 20.0];
        let mut imp = vec![0.0];
        let t = grow(&x, &TargetRef::Numeric(&y), (0..6).collect(), &params(1), &mut stream(0, &[]), &mut imp);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 6.5),
            n => panic!("expected split, got {n:?}"),
        }
        assert_eq!(t.leaf(&[0.0]), &[5.0]);
        assert_eq!(t.leaf(&[100.0]), &[20.0]);
        assert!(imp[0] > 0.0);
    }

    #[test]
    fn missing_rows_follow_the_larger_child() {
        let x = vec![vec![1.0, 2.0, 3.0, 10.0, 11.0, f64::NAN]];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let mut imp = vec![0.0];
        let t = grow(&x, &TargetRef::Numeric(&y), (0..6).collect(), &params(2), &mut stream(0, &[]), &mut imp);
        let Node::Split { missing_left, .. } = &t.nodes[0] else { panic!("expected split") };
        assert!(*missing_left);
        assert_eq!(t.leaf(&[f64::NAN]), t.leaf(&[1.0]));
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.6, 0.3]), 1);
    }
}
