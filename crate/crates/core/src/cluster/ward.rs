use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::distance::{condensed_index, CondensedMatrix};
use super::ClusterError;

/// One agglomeration step. Leaves are nodes `0..n`; the t-th merge creates
/// node `n + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub node_a: usize,
    pub node_b: usize,
    pub height: f64,
    pub new_node_id: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaf_count: usize,
    pub merges: Vec<Merge>,
}

/// Candidate ordering: cost, then the lower node id, then the higher one.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize, usize);

impl Key {
    fn new(cost: f64, a: usize, b: usize) -> Self {
        Key(cost, a.min(b), a.max(b))
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1)).then(self.2.cmp(&other.2))
    }
}

struct State {
    n: usize,
    /// Squared Ward costs between active slots.
    cost: Vec<f64>,
    active: Vec<bool>,
    id: Vec<usize>,
    size: Vec<usize>,
    nn: Vec<usize>,
    nn_key: Vec<Key>,
}

impl State {
    fn cost(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.cost[condensed_index(self.n, i, j)]
        } else {
            self.cost[condensed_index(self.n, j, i)]
        }
    }

    fn set_cost(&mut self, i: usize, j: usize, v: f64) {
        let idx = if i < j { condensed_index(self.n, i, j) } else { condensed_index(self.n, j, i) };
        self.cost[idx] = v;
    }

    fn key(&self, i: usize, j: usize) -> Key {
        Key::new(self.cost(i, j), self.id[i], self.id[j])
    }

    /// Nearest neighbour of slot `i` among active slots above it. Every pair
    /// is tracked once, at its lower slot.
    fn refresh(&mut self, i: usize) {
        let mut best = (usize::MAX, Key(f64::INFINITY, usize::MAX, usize::MAX));
        for j in i + 1..self.n {
            if self.active[j] {
                let k = self.key(i, j);
                if k.cmp(&best.1) == Ordering::Less {
                    best = (j, k);
                }
            }
        }
        self.nn[i] = best.0;
        self.nn_key[i] = best.1;
    }
}

/// Ward agglomeration with the Lance–Williams update applied to squared
/// input distances. Merge heights are the square roots of the merge costs.
/// Equal costs are resolved by the lexicographically lowest node-id pair.
pub fn ward_cluster(d: &CondensedMatrix) -> Result<Dendrogram, ClusterError> {
    let n = d.len();
    if n < 2 {
        return Err(ClusterError::TooFewLeaves(n));
    }
    if let Some(bad) = d.values().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(ClusterError::InvalidDistances(format!("entry {bad}")));
    }
    let mut s = State {
        n,
        cost: d.values().iter().map(|v| v * v).collect(),
        active: vec![true; n],
        id: (0..n).collect(),
        size: vec![1; n],
        nn: vec![0; n],
        nn_key: vec![Key(f64::INFINITY, usize::MAX, usize::MAX); n],
    };
    for i in 0..n {
        s.refresh(i);
    }

    let mut merges = Vec::with_capacity(n - 1);
    let mut last_height = 0.0f64;
    for t in 0..n - 1 {
        let i = (0..n)
            .filter(|&i| s.active[i] && s.nn[i] != usize::MAX)
            .min_by(|&a, &b| s.nn_key[a].cmp(&s.nn_key[b]))
            .expect("at least two active clusters");
        let j = s.nn[i];
        let (keep, drop) = (i.min(j), i.max(j));
        let w_ij = s.cost(i, j);
        let (n_i, n_j) = (s.size[i] as f64, s.size[j] as f64);
        for k in 0..n {
            if !s.active[k] || k == i || k == j {
                continue;
            }
            let n_k = s.size[k] as f64;
            let updated = ((n_i + n_k) * s.cost(i, k) + (n_j + n_k) * s.cost(j, k) - n_k * w_ij) / (n_i + n_j + n_k);
            s.set_cost(keep, k, updated.max(0.0));
        }

        let height = last_height.max(w_ij.sqrt());
        last_height = height;
        let (a, b) = (s.id[i].min(s.id[j]), s.id[i].max(s.id[j]));
        let new_id = n + t;
        merges.push(Merge { node_a: a, node_b: b, height, new_node_id: new_id, size: s.size[i] + s.size[j] });

        s.active[drop] = false;
        s.id[keep] = new_id;
        s.size[keep] = s.size[i] + s.size[j];
        if t + 1 == n - 1 {
            break;
        }
        s.refresh(keep);
        for k in 0..keep {
            if !s.active[k] {
                continue;
            }
            if s.nn[k] == i || s.nn[k] == j {
                s.refresh(k);
            } else {
                let cand = s.key(k, keep);
                if cand.cmp(&s.nn_key[k]) == Ordering::Less {
                    s.nn[k] = keep;
                    s.nn_key[k] = cand;
                }
            }
        }
        for k in keep + 1..drop {
            if s.active[k] && s.nn[k] == drop {
                s.refresh(k);
            }
        }
    }
    Ok(Dendrogram { leaf_count: n, merges })
}

/// Undo the last `k − 1` merges. Labels are numbered by decreasing cluster
/// size, ties broken by the lowest member leaf.
pub fn cut_tree(dg: &Dendrogram, k: usize) -> Result<Vec<usize>, ClusterError> {
    let n = dg.leaf_count;
    if k == 0 || k > n {
        return Err(ClusterError::InvalidK { k, leaves: n });
    }
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    members.resize(n + dg.merges.len(), Vec::new());
    for m in &dg.merges[..n - k] {
        let mut a = std::mem::take(&mut members[m.node_a]);
        let mut b = std::mem::take(&mut members[m.node_b]);
        if a.len() < b.len() {
            std::mem::swap(&mut a, &mut b);
        }
        a.extend(b);
        members[m.new_node_id] = a;
    }
    let mut clusters: Vec<Vec<usize>> = members.into_iter().filter(|c| !c.is_empty()).collect();
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut labels = vec![0; n];
    for (label, c) in clusters.iter().enumerate() {
        for &leaf in c {
            labels[leaf] = label;
        }
    }
    Ok(labels)
}
