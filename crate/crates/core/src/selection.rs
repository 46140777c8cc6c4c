//! Feature selection: recursive feature elimination with cross-validation
//! and importance-ranked top-k.

use std::collections::BTreeMap;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics;
use crate::eval::split::{complement, kfold, stratified_kfold};
use crate::forest::{fit_forest, ForestConfig, RandomForest, Targets};
use crate::rng::derive_seed;

pub const REFERENCE_RISK_FEATURES: [&str; 12] = [
    "mean_feet_dist",
    "std_left_x",
    "std_imbalance",
    "std_nose_y",
    "max_feet_dist",
    "max_right_x",
    "min_left_x",
    "min_imbalance",
    "range_left_x",
    "range_imbalance",
    "range_nose_x",
    "height_reduction",
];

pub const REFERENCE_SEVERITY_FEATURES: [&str; 15] = [
    "mean_feet_dist",
    "height_reduction",
    "max_feet_dist",
    "max_right_x",
    "std_imbalance",
    "min_left_x",
    "range_imbalance",
    "range_nose_x",
    "mean_nose_y",
    "min_nose_x",
    "entropy_nose_y",
    "std_tilt",
    "std_left_x",
    "range_feet_dist",
    "range_left_x",
];

/// Named feature lists: `risk_features` and `severity_features`.
pub fn preset(name: &str) -> Option<&'static [&'static str]> {
    match name {
        "risk_features" => Some(&REFERENCE_RISK_FEATURES),
        "severity_features" => Some(&REFERENCE_SEVERITY_FEATURES),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionProtocol {
    Rfecv,
    ImportanceTopk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<String>,
    /// `(n_features, mean cv score)` in visiting order (largest set first).
    pub score_curve: Vec<(usize, f64)>,
    pub protocol: SelectionProtocol,
}

impl SelectionResult {
    pub fn indices(&self, names: &[String]) -> Result<Vec<usize>> {
        self.selected
            .iter()
            .map(|s| {
                names
                    .iter()
                    .position(|n| n == s)
                    .ok_or_else(|| Error::Validation(format!("selected feature {s:?} not in table")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfecvConfig {
    pub step: usize,
    pub folds: usize,
}

impl Default for RfecvConfig {
    fn default() -> Self {
        RfecvConfig { step: 1, folds: 5 }
    }
}

/// Accuracy for classification, negative MAE for regression.
fn score(forest: &RandomForest, x: ArrayView2<f64>, targets: &Targets) -> Result<f64> {
    let pred = forest.predict_rows(x)?;
    match targets {
        Targets::Classes { labels, .. } => {
            let p: Vec<usize> = pred.iter().map(|&v| v as usize).collect();
            metrics::accuracy(labels, &p)
        }
        Targets::Values(v) => metrics::mae(v, &pred).map(|m| -m),
    }
}

fn subset<'a>(targets: &Targets<'a>, idx: &[usize], buf_c: &'a mut Vec<usize>, buf_v: &'a mut Vec<f64>) -> Targets<'a> {
    match targets {
        Targets::Classes { labels, n_classes } => {
            *buf_c = idx.iter().map(|&i| labels[i]).collect();
            Targets::Classes {
                labels: buf_c,
                n_classes: *n_classes,
            }
        }
        Targets::Values(v) => {
            *buf_v = idx.iter().map(|&i| v[i]).collect();
            Targets::Values(buf_v)
        }
    }
}

fn fit_subset(
    x: ArrayView2<f64>,
    targets: &Targets,
    rows: &[usize],
    cols: &[usize],
    names: &[String],
    config: &ForestConfig,
) -> Result<RandomForest> {
    let xs = x.select(Axis(0), rows).select(Axis(1), cols);
    let (mut bc, mut bv) = (Vec::new(), Vec::new());
    let t = subset(targets, rows, &mut bc, &mut bv);
    let sub_names: Vec<String> = cols.iter().map(|&c| names[c].clone()).collect();
    fit_forest(xs.view(), t, &sub_names, config)
}

/// Drops the `step` least important of `cols` (ties drop the higher column first).
fn eliminate(cols: &[usize], importances: &[f64], step: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cols.len()).collect();
    order.sort_by(|&a, &b| importances[a].total_cmp(&importances[b]).then(cols[b].cmp(&cols[a])));
    let drop = step.min(cols.len() - 1);
    let mut keep: Vec<usize> = order[drop..].iter().map(|&i| cols[i]).collect();
    keep.sort_unstable();
    keep
}

fn check_inputs(x: ArrayView2<f64>, targets: &Targets, names: &[String]) -> Result<()> {
    if names.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: names.len(),
        });
    }
    if targets.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: targets.len(),
        });
    }
    Ok(())
}

/// Recursive feature elimination with k-fold cross-validation.
///
/// Within each fold the elimination path is computed on the training part
/// and every visited cardinality is scored on the held-out part. Fold scores
/// are averaged per cardinality; the best cardinality (ties favour fewer
/// features) is then reached by eliminating on all rows.
pub fn rfecv(
    x: ArrayView2<f64>,
    targets: Targets,
    names: &[String],
    config: &RfecvConfig,
    forest: &ForestConfig,
    seed: u64,
) -> Result<SelectionResult> {
    check_inputs(x, &targets, names)?;
    let p = x.ncols();
    if p < 2 {
        return Err(Error::Validation("rfecv needs at least 2 features".into()));
    }
    if config.step == 0 {
        return Err(Error::Validation("rfecv step must be positive".into()));
    }
    if config.step >= p {
        return Err(Error::Validation(format!(
            "step too large: step {} with {p} features",
            config.step
        )));
    }
    let n = x.nrows();
    let folds = match targets {
        Targets::Classes { labels, .. } => stratified_kfold(labels, config.folds, derive_seed(seed, 0))?,
        Targets::Values(_) => kfold(n, config.folds, derive_seed(seed, 0))?,
    };
    let all: Vec<usize> = (0..p).collect();
    let fold_curves: Vec<BTreeMap<usize, f64>> = folds
        .par_iter()
        .enumerate()
        .map(|(fi, test)| {
            let train = complement(n, test);
            let (mut bc, mut bv) = (Vec::new(), Vec::new());
            let test_targets = subset(&targets, test, &mut bc, &mut bv);
            let mut cols = all.clone();
            let mut curve = BTreeMap::new();
            loop {
                let cfg = forest.with_seed(derive_seed(derive_seed(seed, 1 + fi as u64), cols.len() as u64));
                let model = fit_subset(x, &targets, &train, &cols, names, &cfg)?;
                let xt = x.select(Axis(0), test).select(Axis(1), &cols);
                curve.insert(cols.len(), score(&model, xt.view(), &test_targets)?);
                if cols.len() == 1 {
                    break;
                }
                cols = eliminate(&cols, &model.feature_importances(), config.step);
            }
            Ok(curve)
        })
        .collect::<Result<_>>()?;

    let mut score_curve: Vec<(usize, f64)> = fold_curves[0]
        .keys()
        .rev()
        .map(|&m| {
            let mean = fold_curves.iter().map(|c| c[&m]).sum::<f64>() / fold_curves.len() as f64;
            (m, mean)
        })
        .collect();
    // visiting order is largest first; scanning it reversed with `>` keeps the smallest best
    let best = score_curve
        .iter()
        .rev()
        .fold(None::<(usize, f64)>, |acc, &(m, s)| match acc {
            Some((_, bs)) if s <= bs => acc,
            _ => Some((m, s)),
        })
        .expect("curve is non-empty")
        .0;

    let rows: Vec<usize> = (0..n).collect();
    let mut cols = all;
    while cols.len() > best {
        let cfg = forest.with_seed(derive_seed(derive_seed(seed, 0x5e1ec7), cols.len() as u64));
        let model = fit_subset(x, &targets, &rows, &cols, names, &cfg)?;
        cols = eliminate(&cols, &model.feature_importances(), config.step);
    }
    score_curve.shrink_to_fit();
    Ok(SelectionResult {
        selected: cols.iter().map(|&c| names[c].clone()).collect(),
        score_curve,
        protocol: SelectionProtocol::Rfecv,
    })
}

/// The `k` most important features of one forest fit on all columns,
/// ordered by descending importance (ties keep column order).
pub fn importance_topk(
    x: ArrayView2<f64>,
    targets: Targets,
    names: &[String],
    k: usize,
    forest: &ForestConfig,
    seed: u64,
) -> Result<SelectionResult> {
    check_inputs(x, &targets, names)?;
    if k == 0 || k > x.ncols() {
        return Err(Error::Validation(format!(
            "k = {k} outside 1..={}",
            x.ncols()
        )));
    }
    let model = fit_forest(x, targets, names, &forest.with_seed(seed))?;
    let imp = model.feature_importances();
    let mut order: Vec<usize> = (0..imp.len()).collect();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]));
    Ok(SelectionResult {
        selected: order[..k].iter().map(|&i| names[i].clone()).collect(),
        score_curve: Vec::new(),
        protocol: SelectionProtocol::ImportanceTopk,
    })
}
