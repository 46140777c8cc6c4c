//! Experiment harness: repeated stratified k-fold and leave-one-site-out
//! evaluation of the risk, severity-regression and 4-class severity tasks.
//!
//! Every repeat draws its seed from a ledger derived from the run seed, and
//! every fold derives its own seeds from the repeat seed, so results do not
//! depend on thread scheduling. Feature selection and forest training only
//! ever see rows of the training split; the leakage guard checks this for
//! every fit.

pub mod metrics;
pub mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestConfig, RandomForest, Targets};
use crate::rng::derive_seed;
use crate::selection::{importance_topk, preset, rfecv, RfecvConfig};
use crate::table::FeatureTable;

pub const SEVERITY_CAP: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    /// Score 0 is class 0, any positive score is class 1 (at risk).
    #[serde(rename = "risk_binary")]
    RiskBinary,
    /// Score capped at 3, predicted as a real in `[0, 3]`.
    #[serde(rename = "severity_regression")]
    SeverityRegression,
    /// Classes 0, 1, 2 and 3-or-more.
    #[serde(rename = "severity_4class")]
    Severity4Class,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::RiskBinary => "risk_binary",
            TaskKind::SeverityRegression => "severity_regression",
            TaskKind::Severity4Class => "severity_4class",
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::SeverityRegression)
    }

    pub fn n_classes(self) -> Option<usize> {
        match self {
            TaskKind::RiskBinary => Some(2),
            TaskKind::Severity4Class => Some(4),
            TaskKind::SeverityRegression => None,
        }
    }

    /// Model target for a SARA gait score.
    pub fn target(self, score: u8) -> f64 {
        match self {
            TaskKind::RiskBinary => f64::from(u8::from(score > 0)),
            TaskKind::SeverityRegression | TaskKind::Severity4Class => f64::from(score.min(SEVERITY_CAP)),
        }
    }

    /// Label used to stratify folds.
    pub fn stratum(self, score: u8) -> usize {
        match self {
            TaskKind::RiskBinary => usize::from(score > 0),
            _ => usize::from(score.min(SEVERITY_CAP)),
        }
    }

    pub fn metric_names(self) -> &'static [&'static str] {
        match self {
            TaskKind::SeverityRegression => &["mae", "pcc"],
            _ => &["accuracy", "f1"],
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "risk_binary" => Ok(TaskKind::RiskBinary),
            "severity_regression" => Ok(TaskKind::SeverityRegression),
            "severity_4class" => Ok(TaskKind::Severity4Class),
            _ => Err(Error::Validation(format!(
                "unknown task {s:?} (expected risk_binary, severity_regression or severity_4class)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    KFold { folds: usize },
    /// Holds out each site in turn, or only `site` when given.
    LeaveOneSiteOut {
        #[serde(default)]
        site: Option<String>,
    },
}

impl Protocol {
    pub fn describe(&self) -> String {
        match self {
            Protocol::KFold { folds } => format!("{folds}-fold CV"),
            Protocol::LeaveOneSiteOut { site: None } => "leave-one-site-out".into(),
            Protocol::LeaveOneSiteOut { site: Some(s) } => format!("leave-one-site-out ({s})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionSpec {
    /// Every column of the table.
    All,
    Preset { name: String },
    Names { features: Vec<String> },
    Rfecv {
        #[serde(default = "default_step")]
        step: usize,
        #[serde(default = "default_inner_folds")]
        folds: usize,
        /// Trees per forest inside the elimination loop; defaults to the main forest's.
        #[serde(default)]
        n_trees: Option<usize>,
    },
    ImportanceTopk {
        k: usize,
        #[serde(default)]
        n_trees: Option<usize>,
    },
}

fn default_step() -> usize {
    RfecvConfig::default().step
}

fn default_inner_folds() -> usize {
    RfecvConfig::default().folds
}

/// Which rows statistics may be fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    Train,
    /// Deliberately leaky: selection and training also see the held-out rows.
    TrainAndTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub task: TaskKind,
    pub protocol: Protocol,
    pub repeats: usize,
    pub forest: ForestConfig,
    pub selection: SelectionSpec,
    /// Keep every participant's videos within one fold (k-fold only).
    pub group_by_participant: bool,
    /// Abort when any fit touches held-out rows, and mask label-derived
    /// columns on held-out rows.
    pub leakage_guard: bool,
    pub fit_scope: FitScope,
    /// Columns derived from the label, unavailable at prediction time.
    /// With the guard on they are replaced on held-out rows by the training median.
    pub label_derived_features: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            task: TaskKind::RiskBinary,
            protocol: Protocol::KFold { folds: 10 },
            repeats: 20,
            forest: ForestConfig::default(),
            selection: SelectionSpec::All,
            group_by_participant: false,
            leakage_guard: true,
            fit_scope: FitScope::Train,
            label_derived_features: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("eval.repeats must be positive".into()));
        }
        if let Protocol::KFold { folds } = self.protocol {
            if folds < 2 {
                return Err(Error::Config("eval.protocol.folds must be at least 2".into()));
            }
        }
        match &self.selection {
            SelectionSpec::Rfecv { step, folds, .. } if *step == 0 || *folds < 2 => Err(Error::Config(
                "rfecv needs step >= 1 and folds >= 2".into(),
            )),
            SelectionSpec::ImportanceTopk { k: 0, .. } => Err(Error::Config("importance_topk k must be positive".into())),
            SelectionSpec::Preset { name } if preset(name).is_none() => {
                Err(Error::Config(format!("unknown feature preset {name:?}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation over the `n` defined values.
    pub std: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<MetricSummary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MetricSummary {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    /// Metrics that are undefined for this run (e.g. correlation with a constant prediction).
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRow {
    pub site: String,
    pub n_test: usize,
    /// Accuracy of predicting the held-out site's own most frequent class.
    pub majority_baseline: Option<f64>,
    pub summary: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub repeat: usize,
    pub video_id: String,
    pub site_id: String,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: TaskKind,
    pub protocol: Protocol,
    pub repeats: usize,
    pub seed: u64,
    pub seed_ledger: Vec<u64>,
    pub n_samples: usize,
    pub runs: Vec<RunRecord>,
    pub summary: BTreeMap<String, MetricSummary>,
    /// One row per held-out site (leave-one-site-out only).
    pub sites: Vec<SiteRow>,
    /// How many fitted models used each feature.
    pub selection_counts: BTreeMap<String, usize>,
    pub n_models: usize,
    pub predictions: Vec<Prediction>,
}

/// Metric values plus the names of undefined metrics.
pub fn compute_metrics(task: TaskKind, y_true: &[f64], y_pred: &[f64]) -> Result<(BTreeMap<String, f64>, Vec<String>)> {
    let mut out = BTreeMap::new();
    let mut undefined = Vec::new();
    match task {
        TaskKind::SeverityRegression => {
            out.insert("mae".to_string(), metrics::mae(y_true, y_pred)?);
            match metrics::pearson(y_true, y_pred)? {
                Some(r) => {
                    out.insert("pcc".to_string(), r);
                }
                None => undefined.push("pcc".to_string()),
            }
        }
        _ => {
            let t: Vec<usize> = y_true.iter().map(|&v| v as usize).collect();
            let p: Vec<usize> = y_pred.iter().map(|&v| v as usize).collect();
            out.insert("accuracy".to_string(), metrics::accuracy(&t, &p)?);
            let f1 = if task == TaskKind::RiskBinary {
                metrics::f1_binary(&t, &p, 1)?
            } else {
                metrics::f1_macro(&t, &p)?
            };
            out.insert("f1".to_string(), f1);
        }
    }
    Ok((out, undefined))
}

/// Checks that fits only see training rows.
struct LeakageGuard {
    enabled: bool,
    test: BTreeSet<usize>,
}

impl LeakageGuard {
    fn new(enabled: bool, train: &[usize], test: &[usize]) -> Result<Self> {
        let test: BTreeSet<usize> = test.iter().copied().collect();
        if let Some(i) = train.iter().find(|i| test.contains(i)) {
            return Err(Error::Leakage(format!("row {i} is in both train and test")));
        }
        Ok(LeakageGuard { enabled, test })
    }

    fn check(&self, rows: &[usize], what: &str) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let touched = rows.iter().filter(|i| self.test.contains(i)).count();
        if touched > 0 {
            return Err(Error::Leakage(format!("{what} fitted on {touched} held-out rows")));
        }
        Ok(())
    }
}

struct Split {
    site: Option<String>,
    train: Vec<usize>,
    test: Vec<usize>,
}

struct FoldOutput {
    test: Vec<usize>,
    preds: Vec<f64>,
    selected: Vec<String>,
}

fn with_trees(forest: &ForestConfig, n_trees: Option<usize>) -> ForestConfig {
    ForestConfig {
        n_trees: n_trees.unwrap_or(forest.n_trees),
        ..forest.clone()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn run_fold(table: &FeatureTable, config: &EvalConfig, targets_all: &[f64], split: &Split, seed: u64) -> Result<FoldOutput> {
    let guard = LeakageGuard::new(config.leakage_guard, &split.train, &split.test)?;
    let fit_rows: Vec<usize> = match config.fit_scope {
        FitScope::Train => split.train.clone(),
        FitScope::TrainAndTest => {
            let mut r: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
            r.sort_unstable();
            r
        }
    };
    let task = config.task;
    let fit_x = table.features.select(Axis(0), &fit_rows);
    let fit_y: Vec<f64> = fit_rows.iter().map(|&i| targets_all[i]).collect();
    let fit_labels: Vec<usize> = fit_y.iter().map(|&v| v as usize).collect();
    let targets = match task.n_classes() {
        Some(n_classes) => Targets::Classes {
            labels: &fit_labels,
            n_classes,
        },
        None => Targets::Values(&fit_y),
    };

    guard.check(&fit_rows, "feature selection")?;
    let names = &table.feature_names;
    let selected = select_features(fit_x.view(), targets, names, &config.selection, &config.forest, derive_seed(seed, 1))?;
    let col_idx: Vec<usize> = selected
        .iter()
        .map(|c| {
            table
                .column_index(c)
                .ok_or_else(|| Error::Validation(format!("feature {c:?} not in table")))
        })
        .collect::<Result<_>>()?;
    let cols = selected;

    guard.check(&fit_rows, "forest training")?;
    let train_x = fit_x.select(Axis(1), &col_idx);
    let forest = fit_forest(
        train_x.view(),
        targets,
        &cols,
        &config.forest.with_seed(derive_seed(seed, 2)),
    )?;

    let mut test_x: Array2<f64> = table.features.select(Axis(0), &split.test).select(Axis(1), &col_idx);
    if config.leakage_guard {
        for masked in &config.label_derived_features {
            if let Some(j) = cols.iter().position(|c| c == masked) {
                let fill = median(train_x.column(j).to_vec());
                test_x.column_mut(j).fill(fill);
            }
        }
    }
    let mut preds = forest.predict_rows(test_x.view())?;
    if task == TaskKind::SeverityRegression {
        preds.iter_mut().for_each(|p| *p = p.clamp(0.0, f64::from(SEVERITY_CAP)));
    }
    Ok(FoldOutput {
        test: split.test.clone(),
        preds,
        selected: cols,
    })
}

/// Resolves a selection method to feature names, fitting it on `x` when it
/// is data-driven.
pub fn select_features(
    x: ArrayView2<f64>,
    targets: Targets,
    names: &[String],
    spec: &SelectionSpec,
    forest: &ForestConfig,
    seed: u64,
) -> Result<Vec<String>> {
    Ok(match spec {
        SelectionSpec::All => names.to_vec(),
        SelectionSpec::Preset { name } => preset(name)
            .ok_or_else(|| Error::Config(format!("unknown feature preset {name:?}")))?
            .iter()
            .map(|s| s.to_string())
            .collect(),
        SelectionSpec::Names { features } => features.clone(),
        SelectionSpec::Rfecv { step, folds, n_trees } => {
            let cfg = RfecvConfig {
                step: *step,
                folds: *folds,
            };
            rfecv(x, targets, names, &cfg, &with_trees(forest, *n_trees), seed)?.selected
        }
        SelectionSpec::ImportanceTopk { k, n_trees } => {
            importance_topk(x, targets, names, *k, &with_trees(forest, *n_trees), seed)?.selected
        }
    })
}

/// Selects features on every row of `table` and fits the final model on them.
pub fn train_model(
    table: &FeatureTable,
    task: TaskKind,
    selection: &SelectionSpec,
    forest: &ForestConfig,
    seed: u64,
) -> Result<RandomForest> {
    let y: Vec<f64> = table.scores().iter().map(|&s| task.target(s)).collect();
    let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
    let targets = match task.n_classes() {
        Some(n_classes) => Targets::Classes {
            labels: &labels,
            n_classes,
        },
        None => Targets::Values(&y),
    };
    let x = table.features.view();
    let selected = select_features(x, targets, &table.feature_names, selection, forest, derive_seed(seed, 1))?;
    let sub = table.select_named(&selected)?;
    fit_forest(sub.features.view(), targets, &selected, &forest.with_seed(derive_seed(seed, 2)))
}

fn make_splits(table: &FeatureTable, config: &EvalConfig, seed: u64) -> Result<Vec<Split>> {
    let n = table.len();
    match &config.protocol {
        Protocol::KFold { folds } => {
            let strata: Vec<usize> = table.scores().iter().map(|&s| config.task.stratum(s)).collect();
            let test_folds = if config.group_by_participant {
                let groups: Vec<&str> = table.rows.iter().map(|r| r.participant_id.as_str()).collect();
                split::group_kfold(&groups, &strata, *folds, seed)?
            } else {
                split::stratified_kfold(&strata, *folds, seed)?
            };
            Ok(test_folds
                .into_iter()
                .map(|test| Split {
                    site: None,
                    train: split::complement(n, &test),
                    test,
                })
                .collect())
        }
        Protocol::LeaveOneSiteOut { site } => {
            let sites = table.sites();
            let held: Vec<String> = match site {
                Some(s) => vec![s.clone()],
                None => sites.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>().into_iter().collect(),
            };
            held.into_iter()
                .map(|s| {
                    let (train, test) = split::leave_one_site_out(&sites, &s)?;
                    Ok(Split {
                        site: Some(s),
                        train,
                        test,
                    })
                })
                .collect()
        }
    }
}

/// Runs `config.repeats` repetitions of the configured protocol.
pub fn run_experiment(table: &FeatureTable, config: &EvalConfig, seed: u64) -> Result<ExperimentReport> {
    config.validate()?;
    if table.len() < 2 {
        return Err(Error::InsufficientData("evaluation needs at least 2 samples".into()));
    }
    let task = config.task;
    let targets: Vec<f64> = table.scores().iter().map(|&s| task.target(s)).collect();
    let seed_ledger: Vec<u64> = (0..config.repeats).map(|r| derive_seed(seed, r as u64)).collect();

    let splits: Vec<Vec<Split>> = seed_ledger
        .iter()
        .map(|&s| make_splits(table, config, derive_seed(s, 0)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = splits
        .iter()
        .enumerate()
        .flat_map(|(r, ss)| (0..ss.len()).map(move |f| (r, f)))
        .collect();
    let outputs: Vec<FoldOutput> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let fold_seed = derive_seed(seed_ledger[r], 1 + f as u64);
            run_fold(table, config, &targets, &splits[r][f], fold_seed)
        })
        .collect::<Result<_>>()?;

    let mut selection_counts: BTreeMap<String, usize> = BTreeMap::new();
    for o in &outputs {
        for name in &o.selected {
            *selection_counts.entry(name.clone()).or_default() += 1;
        }
    }

    // per repeat: pooled predictions keyed by row
    let mut by_repeat: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); config.repeats];
    let mut site_rows: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (&(r, f), o) in jobs.iter().zip(&outputs) {
        for (&i, &p) in o.test.iter().zip(&o.preds) {
            by_repeat[r].insert(i, p);
        }
        if r == 0 {
            if let Some(site) = &splits[r][f].site {
                site_rows.insert(site.clone(), o.test.clone());
            }
        }
    }

    let mut runs = Vec::with_capacity(config.repeats);
    let mut predictions = Vec::new();
    for (r, pooled) in by_repeat.iter().enumerate() {
        let rows: Vec<usize> = pooled.keys().copied().collect();
        let y_true: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
        let y_pred: Vec<f64> = pooled.values().copied().collect();
        let (metrics, undefined) = compute_metrics(task, &y_true, &y_pred)?;
        runs.push(RunRecord {
            repeat: r,
            seed: seed_ledger[r],
            metrics,
            undefined,
        });
        for (&i, &p) in pooled {
            predictions.push(Prediction {
                repeat: r,
                video_id: table.rows[i].video_id.clone(),
                site_id: table.rows[i].site_id.clone(),
                y_true: targets[i],
                y_pred: p,
            });
        }
    }

    let summarize_runs = |per_run: Vec<BTreeMap<String, f64>>| -> BTreeMap<String, MetricSummary> {
        task.metric_names()
            .iter()
            .filter_map(|&m| {
                let vals: Vec<f64> = per_run.iter().filter_map(|run| run.get(m).copied()).collect();
                MetricSummary::of(&vals).map(|s| (m.to_string(), s))
            })
            .collect()
    };
    let summary = summarize_runs(runs.iter().map(|r| r.metrics.clone()).collect());

    let mut sites = Vec::new();
    for (site, rows) in &site_rows {
        let y_true: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
        let per_run = by_repeat
            .iter()
            .map(|pooled| {
                let y_pred: Vec<f64> = rows.iter().map(|i| pooled[i]).collect();
                compute_metrics(task, &y_true, &y_pred).map(|m| m.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let majority_baseline = if task.is_classification() {
            let labels: Vec<usize> = y_true.iter().map(|&v| v as usize).collect();
            Some(metrics::majority_baseline(&labels)?)
        } else {
            None
        };
        sites.push(SiteRow {
            site: site.clone(),
            n_test: rows.len(),
            majority_baseline,
            summary: summarize_runs(per_run),
        });
    }

    Ok(ExperimentReport {
        task,
        protocol: config.protocol.clone(),
        repeats: config.repeats,
        seed,
        seed_ledger,
        n_samples: table.len(),
        runs,
        summary,
        sites,
        selection_counts,
        n_models: outputs.len(),
        predictions,
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn metric(&self, name: &str) -> Option<MetricSummary> {
        self.summary.get(name).copied()
    }

    /// Plain-text table: one row per protocol (and per held-out site),
    /// `mean ± std` for each metric.
    pub fn render_table(&self) -> String {
        let metrics = self.task.metric_names();
        let fmt = |s: Option<&MetricSummary>| match s {
            Some(s) => format!("{:.4} ± {:.4}", s.mean, s.std),
            None => "n/a".to_string(),
        };
        let mut header = vec![format!("{} ({} repeats)", self.task.name(), self.repeats)];
        header.extend(metrics.iter().map(|m| m.to_string()));
        let mut rows = vec![header];
        let mut overall = vec![self.protocol.describe()];
        overall.extend(metrics.iter().map(|m| fmt(self.summary.get(*m))));
        rows.push(overall);
        for s in &self.sites {
            let mut row = vec![format!("  site {} (n={})", s.site, s.n_test)];
            row.extend(metrics.iter().map(|m| fmt(s.summary.get(*m))));
            if let Some(b) = s.majority_baseline {
                row.push(format!("majority {b:.4}"));
            }
            rows.push(row);
        }
        let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> = (0..ncols)
            .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, cell)| format!("{cell:<w$}", w = widths[c]))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (ncols - 1)));
            }
        }
        out
    }

    /// Predicted-versus-true pairs for every repeat.
    pub fn scatter_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.predictions {
            w.serialize(p)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Appends a column equal to the task target, for leakage checks.
pub fn with_label_canary(table: &FeatureTable, task: TaskKind, name: &str) -> Result<FeatureTable> {
    let canary: Vec<f64> = table.scores().iter().map(|&s| task.target(s)).collect();
    let col = ndarray::Array2::from_shape_vec((table.len(), 1), canary).expect("one value per row");
    let features = ndarray::concatenate(Axis(1), &[table.features.view(), col.view()])
        .map_err(|e| Error::Validation(e.to_string()))?;
    let mut names = table.feature_names.clone();
    names.push(name.to_string());
    FeatureTable::new(table.rows.clone(), names, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::table::RowMeta;
    use rand_distr::{Distribution, StandardNormal};

    fn blob_table(n: usize, signal: f64, seed: u64) -> FeatureTable {
        let mut rng = SeededRng::new(seed);
        let rows: Vec<RowMeta> = (0..n)
            .map(|i| RowMeta {
                video_id: format!("v{i:03}"),
                site_id: format!("S{}", i % 3 + 1),
                participant_id: format!("p{i:03}"),
                sara_gait_score: (i % 4) as u8,
            })
            .collect();
        let features = Array2::from_shape_fn((n, 4), |(i, j)| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            if j == 0 {
                signal * rows[i].sara_gait_score as f64 + noise
            } else {
                noise
            }
        });
        FeatureTable::new(rows, (0..4).map(|j| format!("f{j}")).collect(), features).unwrap()
    }

    fn quick(task: TaskKind) -> EvalConfig {
        EvalConfig {
            task,
            repeats: 3,
            protocol: Protocol::KFold { folds: 5 },
            forest: ForestConfig {
                n_trees: 20,
                ..ForestConfig::default()
            },
            ..EvalConfig::default()
        }
    }

    #[test]
    fn label_maps() {
        assert_eq!(TaskKind::RiskBinary.target(0), 0.0);
        assert_eq!(TaskKind::RiskBinary.target(5), 1.0);
        assert_eq!(TaskKind::SeverityRegression.target(7), 3.0);
        assert_eq!(TaskKind::Severity4Class.target(2), 2.0);
    }

    #[test]
    fn report_shape_and_population_std() {
        let t = blob_table(80, 3.0, 1);
        let rep = run_experiment(&t, &quick(TaskKind::RiskBinary), 11).unwrap();
        assert_eq!(rep.runs.len(), 3);
        assert_eq!(rep.seed_ledger.len(), 3);
        assert_eq!(rep.n_models, 15);
        let acc: Vec<f64> = rep.runs.iter().map(|r| r.metrics["accuracy"]).collect();
        let m = acc.iter().sum::<f64>() / 3.0;
        let sd = (acc.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 3.0).sqrt();
        let s = rep.metric("accuracy").unwrap();
        assert!((s.std - sd).abs() < 1e-12);
        assert!(s.mean > 0.8, "{s:?}");
        assert_eq!(rep.predictions.len(), 240);
    }

    #[test]
    fn deterministic_reports() {
        let t = blob_table(60, 2.0, 2);
        let cfg = EvalConfig {
            repeats: 1,
            ..quick(TaskKind::SeverityRegression)
        };
        let a = run_experiment(&t, &cfg, 5).unwrap().to_json().unwrap();
        let b = run_experiment(&t, &cfg, 5).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn regression_is_clamped() {
        let t = blob_table(60, 2.0, 3);
        let rep = run_experiment(&t, &quick(TaskKind::SeverityRegression), 5).unwrap();
        assert!(rep.predictions.iter().all(|p| (0.0..=3.0).contains(&p.y_pred)));
        assert!(rep.metric("mae").is_some());
    }

    #[test]
    fn site_rows() {
        let t = blob_table(60, 3.0, 4);
        let cfg = EvalConfig {
            protocol: Protocol::LeaveOneSiteOut { site: None },
            ..quick(TaskKind::RiskBinary)
        };
        let rep = run_experiment(&t, &cfg, 1).unwrap();
        let sites: Vec<&str> = rep.sites.iter().map(|s| s.site.as_str()).collect();
        assert_eq!(sites, ["S1", "S2", "S3"]);
        assert!(rep.sites.iter().all(|s| s.n_test == 20 && s.majority_baseline.is_some()));
        assert!(rep.render_table().contains("site S2"));
        let one = EvalConfig {
            protocol: Protocol::LeaveOneSiteOut {
                site: Some("S3".into()),
            },
            ..cfg
        };
        let rep = run_experiment(&t, &one, 1).unwrap();
        assert_eq!(rep.sites.len(), 1);
        assert!(rep.predictions.iter().all(|p| p.site_id == "S3"));
        let bad = EvalConfig {
            protocol: Protocol::LeaveOneSiteOut {
                site: Some("S9".into()),
            },
            ..one
        };
        assert!(run_experiment(&t, &bad, 1).is_err());
    }

    #[test]
    fn guard_blocks_test_rows() {
        let t = blob_table(40, 1.0, 5);
        let cfg = EvalConfig {
            fit_scope: FitScope::TrainAndTest,
            ..quick(TaskKind::RiskBinary)
        };
        assert!(matches!(run_experiment(&t, &cfg, 1), Err(Error::Leakage(_))));
        let open = EvalConfig {
            leakage_guard: false,
            ..cfg
        };
        assert!(run_experiment(&t, &open, 1).is_ok());
    }

    #[test]
    fn canary_perfect_only_without_guard() {
        let t = with_label_canary(&blob_table(80, 0.0, 6), TaskKind::RiskBinary, "canary").unwrap();
        let leaky = EvalConfig {
            leakage_guard: false,
            fit_scope: FitScope::TrainAndTest,
            label_derived_features: vec!["canary".into()],
            ..quick(TaskKind::RiskBinary)
        };
        assert_eq!(run_experiment(&t, &leaky, 2).unwrap().metric("accuracy").unwrap().mean, 1.0);
        let guarded = EvalConfig {
            leakage_guard: true,
            fit_scope: FitScope::Train,
            ..leaky
        };
        assert!(run_experiment(&t, &guarded, 2).unwrap().metric("accuracy").unwrap().mean < 0.9);
    }
}
