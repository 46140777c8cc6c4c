//! Feature table: one row per video with identifiers, the SARA gait score
//! and a numeric feature matrix.

use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::manifest::ManifestRecord;

const ID_COLUMNS: [&str; 4] = ["video_id", "site_id", "participant_id", "sara_gait_score"];

#[derive(Debug, Clone, PartialEq)]
pub struct RowMeta {
    pub video_id: String,
    pub site_id: String,
    pub participant_id: String,
    pub sara_gait_score: u8,
}

impl From<&ManifestRecord> for RowMeta {
    fn from(r: &ManifestRecord) -> Self {
        RowMeta {
            video_id: r.video_id.clone(),
            site_id: r.site_id.clone(),
            participant_id: r.participant_id.clone(),
            sara_gait_score: r.sara_gait_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<RowMeta>,
    pub feature_names: Vec<String>,
    pub features: Array2<f64>,
}

impl FeatureTable {
    pub fn new(rows: Vec<RowMeta>, feature_names: Vec<String>, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                actual: features.nrows(),
            });
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                actual: features.ncols(),
            });
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{}: feature {}",
                rows[r].video_id, feature_names[c]
            )));
        }
        Ok(FeatureTable {
            rows,
            feature_names,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scores(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.sara_gait_score).collect()
    }

    pub fn sites(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.site_id.as_str()).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).to_vec()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            features: self.features.select(Axis(0), idx),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            rows: self.rows.clone(),
            feature_names: idx.iter().map(|&i| self.feature_names[i].clone()).collect(),
            features: self.features.select(Axis(1), idx),
        }
    }

    /// Column subset by name; unknown names are an error.
    pub fn select_named<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureTable> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::Validation(format!("feature {:?} not in table", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&idx))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = ID_COLUMNS
            .iter()
            .copied()
            .chain(self.feature_names.iter().map(String::as_str))
            .collect();
        w.write_record(&header)?;
        for (meta, values) in self.rows.iter().zip(self.features.rows()) {
            let mut rec = vec![
                meta.video_id.clone(),
                meta.site_id.clone(),
                meta.participant_id.clone(),
                meta.sara_gait_score.to_string(),
            ];
            // `{:?}` on f64 prints the shortest round-tripping form
            rec.extend(values.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<FeatureTable> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.len() < ID_COLUMNS.len() || header.iter().take(4).ne(ID_COLUMNS) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                message: format!("header must start with {}", ID_COLUMNS.join(",")),
            });
        }
        let feature_names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let bad = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line,
                message,
            };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let score = rec[3]
                .parse::<u8>()
                .map_err(|e| bad(format!("sara_gait_score {:?}: {e}", &rec[3])))?;
            rows.push(RowMeta {
                video_id: rec[0].to_string(),
                site_id: rec[1].to_string(),
                participant_id: rec[2].to_string(),
                sara_gait_score: score,
            });
            for (j, field) in rec.iter().skip(4).enumerate() {
                let v = field
                    .parse::<f64>()
                    .map_err(|e| bad(format!("{} {field:?}: {e}", feature_names[j])))?;
                values.push(v);
            }
        }
        let features = Array2::from_shape_vec((rows.len(), feature_names.len()), values)
            .map_err(|e| Error::Validation(e.to_string()))?;
        FeatureTable::new(rows, feature_names, features)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<FeatureTable> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        FeatureTable::parse_csv(&text, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> FeatureTable {
        let rows = (0..3)
            .map(|i| RowMeta {
                video_id: format!("v{i}"),
                site_id: format!("S{}", i % 2 + 1),
                participant_id: format!("p{i}"),
                sara_gait_score: i as u8,
            })
            .collect();
        FeatureTable::new(
            rows,
            vec!["a".into(), "b".into()],
            array![[0.1, -2.5], [1e-17, 3.0], [1.0 / 3.0, 7.0]],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let text = t.to_csv().unwrap();
        assert!(text.starts_with("video_id,site_id,participant_id,sara_gait_score,a,b\n"));
        let back = FeatureTable::parse_csv(&text, Path::new("t.csv")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn selection() {
        let t = sample();
        let s = t.select_rows(&[2, 0]).select_named(&["b"]).unwrap();
        assert_eq!(s.features, array![[7.0], [-2.5]]);
        assert_eq!(s.rows[0].video_id, "v2");
        assert!(t.select_named(&["zzz"]).is_err());
    }

    #[test]
    fn bad_value_reports_line() {
        let text = "video_id,site_id,participant_id,sara_gait_score,a\nv0,S1,p0,0,1.0\nv1,S1,p1,0,x\n";
        let err = FeatureTable::parse_csv(text, Path::new("f.csv")).unwrap_err();
        assert!(err.to_string().contains("f.csv"));
        assert!(err.to_string().contains('3'), "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        let text = "video_id,site_id,participant_id,sara_gait_score,a\nv0,S1,p0,0,NaN\n";
        assert!(FeatureTable::parse_csv(text, Path::new("f.csv")).is_err());
    }
}
