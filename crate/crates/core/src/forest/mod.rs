//! Random forests of CART trees with bootstrap aggregation and per-node
//! feature subsampling.

mod tree;

use log::warn;
use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use tree::{fit_tree, fit_tree_on, DecisionTree, Node, Targets, Task, TreeParams};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    /// `sqrt` for classification, `one_third` for regression.
    Auto,
    Sqrt,
    OneThird,
    All,
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, n_features: usize, task: Task) -> usize {
        let k = match self {
            FeaturesPerSplit::Auto => match task {
                Task::Classification { .. } => return FeaturesPerSplit::Sqrt.resolve(n_features, task),
                Task::Regression => return FeaturesPerSplit::OneThird.resolve(n_features, task),
            },
            FeaturesPerSplit::Sqrt => (n_features as f64).sqrt().floor() as usize,
            FeaturesPerSplit::OneThird => n_features / 3,
            FeaturesPerSplit::All => n_features,
            FeaturesPerSplit::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: FeaturesPerSplit::Auto,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest.n_trees must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("forest.min_samples_leaf must be positive".into()));
        }
        if let FeaturesPerSplit::Count(0) = self.features_per_split {
            return Err(Error::Config("forest.features_per_split count must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomForest {
    pub format_version: u32,
    pub task: Task,
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
    pub trees: Vec<DecisionTree>,
    /// Out-of-bag accuracy (classification) or R^2 (regression), when bootstrapping.
    pub oob_score: Option<f64>,
}

/// Fits a forest. Tree `i` draws its bootstrap sample and split features
/// from a stream derived from `(config.seed, i)`, so the result does not
/// depend on how trees are scheduled across threads.
pub fn fit_forest(
    x: ArrayView2<f64>,
    targets: Targets,
    feature_names: &[String],
    config: &ForestConfig,
) -> Result<RandomForest> {
    config.validate()?;
    tree::validate_inputs(x, &targets)?;
    if feature_names.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: feature_names.len(),
        });
    }
    let n = x.nrows();
    let task = targets.task();
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        max_features: config.features_per_split.resolve(x.ncols(), task),
    };
    let root = SeededRng::new(config.seed);
    let fitted: Vec<(DecisionTree, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.derive(i as u64);
            let (sample, in_bag) = if config.bootstrap {
                let mut in_bag = vec![false; n];
                let sample: Vec<usize> = (0..n)
                    .map(|_| {
                        let j = rng.random_range(0..n);
                        in_bag[j] = true;
                        j
                    })
                    .collect();
                (sample, in_bag)
            } else {
                ((0..n).collect(), vec![true; n])
            };
            fit_tree_on(x, targets, sample, &params, &mut rng).map(|t| (t, in_bag))
        })
        .collect::<Result<_>>()?;

    let oob_score = if config.bootstrap {
        oob(&fitted, x, targets)
    } else {
        None
    };
    Ok(RandomForest {
        format_version: MODEL_FORMAT_VERSION,
        task,
        config: config.clone(),
        feature_names: feature_names.to_vec(),
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        oob_score,
    })
}

fn oob(fitted: &[(DecisionTree, Vec<bool>)], x: ArrayView2<f64>, targets: Targets) -> Option<f64> {
    let n = x.nrows();
    let mut preds: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let row = x.row(i).to_vec();
        let outs: Vec<f64> = fitted
            .iter()
            .filter(|(_, bag)| !bag[i])
            .map(|(t, _)| t.predict(&row))
            .collect();
        if outs.is_empty() {
            continue;
        }
        let p = match targets {
            Targets::Classes { n_classes, .. } => {
                let mut votes = vec![0usize; n_classes];
                for o in &outs {
                    votes[*o as usize] += 1;
                }
                majority(&votes) as f64
            }
            Targets::Values(_) => outs.iter().sum::<f64>() / outs.len() as f64,
        };
        preds.push((i, p));
    }
    if preds.is_empty() {
        return None;
    }
    match targets {
        Targets::Classes { labels, .. } => Some(
            preds.iter().filter(|(i, p)| labels[*i] as f64 == *p).count() as f64
                / preds.len() as f64,
        ),
        Targets::Values(y) => {
            let mean = preds.iter().map(|(i, _)| y[*i]).sum::<f64>() / preds.len() as f64;
            let ss_tot: f64 = preds.iter().map(|(i, _)| (y[*i] - mean).powi(2)).sum();
            let ss_res: f64 = preds.iter().map(|(i, p)| (y[*i] - p).powi(2)).sum();
            (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
        }
    }
}

fn majority(votes: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best
}

impl RandomForest {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self.task {
            Task::Classification { n_classes } => Some(n_classes),
            Task::Regression => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Fraction of trees voting for each class.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let n_classes = self
            .n_classes()
            .ok_or_else(|| Error::Validation("predict_proba on a regression forest".into()))?;
        let mut votes = vec![0usize; n_classes];
        for t in &self.trees {
            votes[t.predict(x) as usize] += 1;
        }
        let n = self.trees.len() as f64;
        Ok(votes.into_iter().map(|v| v as f64 / n).collect())
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        let n_classes = self
            .n_classes()
            .ok_or_else(|| Error::Validation("predict_class on a regression forest".into()))?;
        let mut votes = vec![0usize; n_classes];
        for t in &self.trees {
            votes[t.predict(x) as usize] += 1;
        }
        Ok(majority(&votes))
    }

    /// Majority class as a number for classification, mean tree output for
    /// regression (unclamped).
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self.task {
            Task::Classification { .. } => self.predict_class(x).map(|c| c as f64),
            Task::Regression => {
                self.check_dim(x)?;
                Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
            }
        }
    }

    pub fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        x.rows()
            .into_iter()
            .map(|r| self.predict(&r.to_vec()))
            .collect()
    }

    /// Mean decrease in impurity per feature, normalized to sum to one.
    ///
    /// Each tree contributes `(n_node * imp_node - n_left * imp_left -
    /// n_right * imp_right) / n_root` for every split; contributions are
    /// averaged over trees. A forest without any impurity-reducing split
    /// yields all zeros.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features()];
        for t in &self.trees {
            let root_n = t.nodes[0].n_samples as f64;
            for node in &t.nodes {
                if let (Some(f), Some([l, r])) = (node.feature, node.children) {
                    let (nl, nr) = (&t.nodes[l], &t.nodes[r]);
                    let dec = node.n_samples as f64 * node.impurity
                        - nl.n_samples as f64 * nl.impurity
                        - nr.n_samples as f64 * nr.impurity;
                    total[f] += dec.max(0.0) / root_n;
                }
            }
        }
        let n = self.trees.len() as f64;
        total.iter_mut().for_each(|v| *v /= n);
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            total.iter_mut().for_each(|v| *v /= sum);
        } else {
            warn!("forest has no impurity-reducing splits; importances are all zero");
        }
        total
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a serialized model, rejecting unknown format versions.
    pub fn from_json(text: &str) -> Result<RandomForest> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(header.format_version));
        }
        let forest: RandomForest = serde_json::from_str(text)?;
        if forest.trees.is_empty() {
            return Err(Error::Validation("model has no trees".into()));
        }
        if forest.trees.iter().any(|t| t.n_features != forest.n_features()) {
            return Err(Error::Validation(
                "tree feature count differs from feature names".into(),
            ));
        }
        Ok(forest)
    }
}
