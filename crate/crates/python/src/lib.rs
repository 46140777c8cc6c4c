//! Python bindings: synthetic data, the feature pipeline, random forests,
//! TreeSHAP and the evaluation harness.

use std::collections::BTreeMap;
use std::path::PathBuf;

use gaitrisk::config::RunConfig;
use gaitrisk::eval::{run_experiment, ExperimentReport};
use gaitrisk::explain::{tree_shap, ExplainTarget};
use gaitrisk::forest::{fit_forest, ForestConfig, RandomForest, Targets};
use gaitrisk::isolation::{height_change_score as score_series, HeightSeries};
use gaitrisk::pipeline::{build_feature_table, PipelineConfig};
use gaitrisk::synth::{generate_dataset as synth_dataset, DatasetConfig};
use gaitrisk::table::FeatureTable;
use gaitrisk::{BoundingBox, Detection};
use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(gaitrisk_py, GaitriskError, PyException);

fn err(e: gaitrisk::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        GaitriskError::new_err(e.to_string())
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Array2::from_shape_vec((n, p), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn bbox(b: (f64, f64, f64, f64)) -> PyResult<BoundingBox> {
    BoundingBox::new(b.0, b.1, b.2, b.3).map_err(err)
}

/// Intersection over union of two `(x1, y1, x2, y2)` boxes.
#[pyfunction]
fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> PyResult<f64> {
    Ok(gaitrisk::tracker::iou(&bbox(a)?, &bbox(b)?))
}

/// Minimum-cost assignment as `(row, col)` pairs.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    gaitrisk::tracker::hungarian(&cost).map_err(err)
}

#[pyfunction]
fn height_change_score(heights: Vec<f64>) -> PyResult<f64> {
    let series = HeightSeries::new(0, heights.into_iter().enumerate().collect()).map_err(err)?;
    score_series(&series).map_err(err)
}

#[pyfunction]
fn spectral_entropy(series: Vec<f64>) -> PyResult<f64> {
    gaitrisk::features::spectral_entropy(&series).map_err(err)
}

/// Tracks `(frame, x1, y1, x2, y2, confidence, label)` detections with the
/// default tracker settings; returns `{track_id: [(frame, x1, y1, x2, y2), ...]}`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn track(detections: Vec<(usize, f64, f64, f64, f64, f64, String)>) -> PyResult<BTreeMap<u64, Vec<(usize, f64, f64, f64, f64)>>> {
    let dets = detections
        .into_iter()
        .map(|(f, x1, y1, x2, y2, c, label)| Detection::new(f, bbox((x1, y1, x2, y2))?, c, &label).map_err(err))
        .collect::<PyResult<Vec<_>>>()?;
    let tracks = gaitrisk::tracker::track(&dets, &Default::default()).map_err(err)?;
    Ok(tracks
        .into_iter()
        .map(|t| {
            let boxes = t.observations.iter().map(|(&f, b)| (f, b.x1, b.y1, b.x2, b.y2)).collect();
            (t.track_id, boxes)
        })
        .collect())
}

/// Writes a synthetic dataset under `out_dir` and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, n_per_class = 40, sites = 5, seed = 0))]
fn generate_dataset(py: Python<'_>, out_dir: PathBuf, n_per_class: usize, sites: usize, seed: u64) -> PyResult<PathBuf> {
    let config = DatasetConfig {
        n_per_class,
        sites,
        ..DatasetConfig::default()
    };
    py.detach(|| synth_dataset(&config, seed, &out_dir)).map_err(err)?;
    Ok(out_dir.join("manifest.jsonl"))
}

#[pyclass(name = "FeatureTable", frozen)]
struct PyFeatureTable {
    inner: FeatureTable,
}

#[pymethods]
impl PyFeatureTable {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyFeatureTable {
            inner: FeatureTable::read(path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn video_ids(&self) -> Vec<String> {
        self.inner.rows.iter().map(|r| r.video_id.clone()).collect()
    }

    #[getter]
    fn sites(&self) -> Vec<String> {
        self.inner.rows.iter().map(|r| r.site_id.clone()).collect()
    }

    #[getter]
    fn scores(&self) -> Vec<u8> {
        self.inner.scores()
    }

    /// Feature matrix as a list of rows.
    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.row(i)).collect()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let j = self
            .inner
            .column_index(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown feature {name:?}")))?;
        Ok(self.inner.features.column(j).to_vec())
    }
}

/// Runs tracking, isolation and feature extraction for every manifest record.
#[pyfunction]
fn build_features(py: Python<'_>, manifest: PathBuf) -> PyResult<PyFeatureTable> {
    let m = gaitrisk::load_manifest(&manifest).map_err(err)?;
    let (table, _) = py.detach(|| build_feature_table(&m, &PipelineConfig::default())).map_err(err)?;
    Ok(PyFeatureTable { inner: table })
}

#[pyclass(name = "RandomForest", frozen)]
struct PyForest {
    inner: RandomForest,
}

#[pymethods]
impl PyForest {
    /// `task` is "classification" (non-negative integer labels) or "regression".
    #[staticmethod]
    #[pyo3(signature = (x, y, task = "classification", feature_names = None, n_trees = 100, seed = 0))]
    fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, task: &str, feature_names: Option<Vec<String>>, n_trees: usize, seed: u64) -> PyResult<Self> {
        let x = matrix(&x)?;
        let names = feature_names.unwrap_or_else(|| (0..x.ncols()).map(|j| format!("f{j}")).collect());
        let config = ForestConfig {
            n_trees,
            seed,
            ..ForestConfig::default()
        };
        let forest = match task {
            "classification" => {
                if y.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
                    return Err(PyValueError::new_err("class labels must be non-negative integers"));
                }
                let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
                fit_forest(x.view(), Targets::classes(&labels), &names, &config)
            }
            "regression" => fit_forest(x.view(), Targets::Values(&y), &names, &config),
            other => return Err(PyValueError::new_err(format!("unknown task {other:?}"))),
        }
        .map_err(err)?;
        Ok(PyForest { inner: forest })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyForest {
            inner: RandomForest::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_rows(matrix(&x)?.view()).map_err(err)
    }

    fn predict_proba(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict_proba(&x).map_err(err)
    }

    fn feature_importances(&self) -> Vec<f64> {
        self.inner.feature_importances()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn oob_score(&self) -> Option<f64> {
        self.inner.oob_score
    }

    /// `(base_value, shap_values)` for one sample; classifiers explain
    /// `class_index` (class 1 by default).
    #[pyo3(signature = (x, class_index = None))]
    fn shap(&self, x: Vec<f64>, class_index: Option<usize>) -> PyResult<(f64, Vec<f64>)> {
        let target = match class_index {
            Some(c) => ExplainTarget::Class(c),
            None => ExplainTarget::default_for(&self.inner),
        };
        let e = tree_shap(&self.inner, &x, target).map_err(err)?;
        Ok((e.base_value, e.shap_values))
    }
}

#[pyclass(name = "ExperimentReport", frozen)]
struct PyReport {
    inner: ExperimentReport,
}

#[pymethods]
impl PyReport {
    /// `(mean, std)` of a metric across repeats.
    fn metric(&self, name: &str) -> Option<(f64, f64)> {
        self.inner.metric(name).map(|m| (m.mean, m.std))
    }

    /// `{site: ({metric: mean}, majority baseline)}` for leave-one-site-out reports.
    fn sites(&self) -> BTreeMap<String, (BTreeMap<String, f64>, Option<f64>)> {
        self.inner
            .sites
            .iter()
            .map(|s| {
                let means = s.summary.iter().map(|(k, v)| (k.clone(), v.mean)).collect();
                (s.site.clone(), (means, s.majority_baseline))
            })
            .collect()
    }

    fn render_table(&self) -> String {
        self.inner.render_table()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }
}

/// Evaluates with the settings of a TOML run configuration (empty for defaults).
#[pyfunction]
#[pyo3(signature = (table, config_toml = "", seed = None))]
fn evaluate(py: Python<'_>, table: &PyFeatureTable, config_toml: &str, seed: Option<u64>) -> PyResult<PyReport> {
    let config = RunConfig::from_toml(config_toml).map_err(err)?;
    let seed = seed.unwrap_or(config.seed);
    let eval = config.eval_config();
    let report = py.detach(|| run_experiment(&table.inner, &eval, seed)).map_err(err)?;
    Ok(PyReport { inner: report })
}

#[pymodule]
fn gaitrisk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GaitriskError", m.py().get_type::<GaitriskError>())?;
    m.add("__version__", gaitrisk::config::VERSION)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(height_change_score, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(build_features, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<PyFeatureTable>()?;
    m.add_class::<PyForest>()?;
    m.add_class::<PyReport>()?;
    Ok(())
}
