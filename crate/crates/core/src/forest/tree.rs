//! CART trees: Gini impurity for classification, variance for regression.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Classification { n_classes: usize },
    Regression,
}

/// Training targets borrowed from the caller.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

impl<'a> Targets<'a> {
    pub fn classes(labels: &'a [usize]) -> Self {
        let n_classes = labels.iter().max().map_or(1, |m| m + 1);
        Targets::Classes { labels, n_classes }
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Classes { n_classes, .. } => Task::Classification {
                n_classes: *n_classes,
            },
            Targets::Values(_) => Task::Regression,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split feature; `None` for leaves.
    pub feature: Option<usize>,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    /// `[left, right]` child indices for internal nodes.
    pub children: Option<[usize; 2]>,
    /// Class counts (classification) or `[mean]` (regression) of the node's
    /// training samples, counting bootstrap duplicates.
    pub value: Vec<f64>,
    pub n_samples: usize,
    pub impurity: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub task: Task,
    pub n_features: usize,
    /// Root is node 0.
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined at each split (clamped to `1..=n_features`).
    pub max_features: usize,
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl DecisionTree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some([l, r]) = self.nodes[i].children {
            let f = self.nodes[i].feature.expect("internal node has a feature");
            i = if x[f] <= self.nodes[i].threshold { l } else { r };
        }
        i
    }

    /// Majority class (ties to the lower index) or leaf mean.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.node_prediction(self.leaf_index(x))
    }

    pub fn node_prediction(&self, node: usize) -> f64 {
        let v = &self.nodes[node].value;
        match self.task {
            Task::Classification { .. } => argmax_lowest(v) as f64,
            Task::Regression => v[0],
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i].children {
                Some([l, r]) => 1 + walk(t, l).max(walk(t, r)),
                None => 0,
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

struct Builder<'a, R: Rng> {
    x: ArrayView2<'a, f64>,
    targets: Targets<'a>,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

fn gini(counts: &[f64], n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / n).powi(2)).sum::<f64>()
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Sum over children of `n_child * impurity_child`.
    weighted_impurity: f64,
}

impl<'a, R: Rng> Builder<'a, R> {
    fn node_stats(&self, idx: &[usize]) -> (Vec<f64>, f64, bool) {
        match self.targets {
            Targets::Classes { labels, n_classes } => {
                let mut counts = vec![0.0; n_classes];
                for &i in idx {
                    counts[labels[i]] += 1.0;
                }
                let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
                let imp = if pure { 0.0 } else { gini(&counts, idx.len() as f64) };
                (counts, imp, pure)
            }
            Targets::Values(y) => {
                let n = idx.len() as f64;
                let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
                let first = y[idx[0]];
                let pure = idx.iter().all(|&i| y[i] == first);
                if pure {
                    return (vec![first], 0.0, true);
                }
                let var = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / n;
                (vec![mean], var, false)
            }
        }
    }

    fn best_split_on(&self, idx: &[usize], feature: usize, best: &mut Option<Split>) {
        let col = self.x.column(feature);
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let n = order.len();
        let min_leaf = self.params.min_samples_leaf.max(1);

        let consider = |pos: usize, weighted: f64, best: &mut Option<Split>| {
            // split between order[pos-1] and order[pos]
            let (a, b) = (col[order[pos - 1]], col[order[pos]]);
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            let better = match best {
                None => true,
                Some(s) => {
                    weighted < s.weighted_impurity
                        || (weighted == s.weighted_impurity
                            && (feature, threshold) < (s.feature, s.threshold))
                }
            };
            if better {
                *best = Some(Split {
                    feature,
                    threshold,
                    weighted_impurity: weighted,
                });
            }
        };

        match self.targets {
            Targets::Classes { labels, n_classes } => {
                let mut left = vec![0.0; n_classes];
                let mut right = vec![0.0; n_classes];
                for &i in &order {
                    right[labels[i]] += 1.0;
                }
                for pos in 1..n {
                    let c = labels[order[pos - 1]];
                    left[c] += 1.0;
                    right[c] -= 1.0;
                    if col[order[pos - 1]] == col[order[pos]] || pos < min_leaf || n - pos < min_leaf {
                        continue;
                    }
                    let (nl, nr) = (pos as f64, (n - pos) as f64);
                    let w = nl * gini(&left, nl) + nr * gini(&right, nr);
                    consider(pos, w, best);
                }
            }
            Targets::Values(y) => {
                let total: f64 = order.iter().map(|&i| y[i]).sum();
                let total_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
                let (mut sl, mut sql) = (0.0, 0.0);
                for pos in 1..n {
                    let v = y[order[pos - 1]];
                    sl += v;
                    sql += v * v;
                    if col[order[pos - 1]] == col[order[pos]] || pos < min_leaf || n - pos < min_leaf {
                        continue;
                    }
                    let (nl, nr) = (pos as f64, (n - pos) as f64);
                    let (sr, sqr) = (total - sl, total_sq - sql);
                    let sse_l = (sql - sl * sl / nl).max(0.0);
                    let sse_r = (sqr - sr * sr / nr).max(0.0);
                    consider(pos, sse_l + sse_r, best);
                }
            }
        }
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let (value, impurity, pure) = self.node_stats(&idx);
        let node_id = self.nodes.len();
        self.nodes.push(Node {
            feature: None,
            threshold: 0.0,
            children: None,
            value,
            n_samples: idx.len(),
            impurity,
        });
        let min_leaf = self.params.min_samples_leaf.max(1);
        if pure
            || self.params.max_depth.is_some_and(|d| depth >= d)
            || idx.len() < 2 * min_leaf
        {
            return node_id;
        }

        let p = self.x.ncols();
        let k = self.params.max_features.clamp(1, p);
        // partial Fisher-Yates: first k entries are the sampled features
        let mut features: Vec<usize> = (0..p).collect();
        for i in 0..k {
            let j = self.rng.random_range(i..p);
            features.swap(i, j);
        }
        let (sampled, rest) = features.split_at_mut(k);
        sampled.sort_unstable();

        let mut best = None;
        for &f in sampled.iter() {
            self.best_split_on(&idx, f, &mut best);
        }
        if best.is_none() {
            // every sampled feature is constant here; keep looking
            for i in 0..rest.len() {
                let j = self.rng.random_range(i..rest.len());
                rest.swap(i, j);
                self.best_split_on(&idx, rest[i], &mut best);
                if best.is_some() {
                    break;
                }
            }
        }
        let Some(split) = best else {
            return node_id;
        };
        let parent_weighted = impurity * idx.len() as f64;
        // splits may leave impurity unchanged (XOR-like structure) but never raise it
        if split.weighted_impurity > parent_weighted * (1.0 + 1e-12) + 1e-12 {
            return node_id;
        }

        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x[[i, split.feature]] <= split.threshold);
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        let node = &mut self.nodes[node_id];
        node.feature = Some(split.feature);
        node.threshold = split.threshold;
        node.children = Some([l, r]);
        node_id
    }
}

pub(crate) fn validate_inputs(x: ArrayView2<f64>, targets: &Targets) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    if x.ncols() == 0 {
        return Err(Error::InsufficientData("no features".into()));
    }
    if targets.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: targets.len(),
        });
    }
    if let Some(((r, c), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("X[{r}][{c}]")));
    }
    match targets {
        Targets::Classes { labels, n_classes } => {
            if let Some(&l) = labels.iter().find(|&&l| l >= *n_classes) {
                return Err(Error::Validation(format!(
                    "label {l} out of range for {n_classes} classes"
                )));
            }
        }
        Targets::Values(v) => {
            if v.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite("regression target".into()));
            }
        }
    }
    Ok(())
}

/// Grows one tree on the rows listed in `sample` (duplicates allowed, as
/// produced by bootstrap resampling).
pub fn fit_tree_on<R: Rng>(
    x: ArrayView2<f64>,
    targets: Targets,
    sample: Vec<usize>,
    params: &TreeParams,
    rng: &mut R,
) -> Result<DecisionTree> {
    validate_inputs(x, &targets)?;
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty training sample".into()));
    }
    let mut builder = Builder {
        x,
        targets,
        params: *params,
        rng,
        nodes: Vec::new(),
    };
    builder.build(sample, 0);
    Ok(DecisionTree {
        task: targets.task(),
        n_features: x.ncols(),
        nodes: builder.nodes,
    })
}

/// Grows one tree on every row of `x`.
pub fn fit_tree<R: Rng>(
    x: ArrayView2<f64>,
    targets: Targets,
    params: &TreeParams,
    rng: &mut R,
) -> Result<DecisionTree> {
    fit_tree_on(x, targets, (0..x.nrows()).collect(), params, rng)
}
