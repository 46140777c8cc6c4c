//! Dataset manifest: one JSON object per line describing a labelled video.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::MAX_SARA_GAIT_SCORE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub video_id: String,
    pub site_id: String,
    pub participant_id: String,
    pub sara_gait_score: u8,
    pub fps: f64,
    pub detections_path: PathBuf,
    pub landmarks_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    /// Directory relative paths are resolved against; usually the manifest's own.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let manifest = DatasetManifest {
            records,
            base_dir: base_dir.into(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Validation("empty manifest".into()));
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            validate_record(r)?;
            if !seen.insert(r.video_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate video_id {:?}",
                    r.video_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Counts of (score == 0, score > 0).
    pub fn risk_class_counts(&self) -> (usize, usize) {
        let at_risk = self
            .records
            .iter()
            .filter(|r| r.sara_gait_score > 0)
            .count();
        (self.records.len() - at_risk, at_risk)
    }

    pub fn sites(&self) -> Vec<String> {
        let mut sites: Vec<String> = self.records.iter().map(|r| r.site_id.clone()).collect();
        sites.sort();
        sites.dedup();
        sites
    }

    pub fn site_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.site_id.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse(text: &str, origin: &Path, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(line).map_err(|e| Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            validate_record(&record).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        DatasetManifest::new(records, base_dir)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }
}

fn validate_record(r: &ManifestRecord) -> Result<()> {
    if r.video_id.is_empty() {
        return Err(Error::Validation("record with empty video_id".into()));
    }
    if r.site_id.trim().is_empty() {
        return Err(Error::Validation(format!(
            "record {:?}: empty site_id",
            r.video_id
        )));
    }
    if r.sara_gait_score > MAX_SARA_GAIT_SCORE {
        return Err(Error::Validation(format!(
            "record {:?}: sara_gait_score {} outside [0, 8]",
            r.video_id, r.sara_gait_score
        )));
    }
    if !(r.fps.is_finite() && r.fps > 0.0) {
        return Err(Error::Validation(format!(
            "record {:?}: fps must be positive, got {}",
            r.video_id, r.fps
        )));
    }
    Ok(())
}

/// Reads and validates a JSON Lines manifest. Relative sample paths resolve
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::parse(&text, path, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, site: &str, score: u8) -> ManifestRecord {
        ManifestRecord {
            video_id: id.into(),
            site_id: site.into(),
            participant_id: format!("p-{id}"),
            sara_gait_score: score,
            fps: 30.0,
            detections_path: format!("{id}.det.jsonl").into(),
            landmarks_path: format!("{id}.lmk.jsonl").into(),
        }
    }

    #[test]
    fn clinical_class_counts() {
        let records: Vec<_> = (0..155)
            .map(|i| record(&format!("v{i}"), "S1", if i < 88 { 1 + (i % 3) as u8 } else { 0 }))
            .collect();
        let m = DatasetManifest::new(records, ".").unwrap();
        assert_eq!(m.risk_class_counts(), (67, 88));
    }

    #[test]
    fn empty_manifest_rejected() {
        let err = DatasetManifest::parse("", Path::new("m.jsonl"), ".").unwrap_err();
        assert!(err.to_string().contains("empty manifest"), "{err}");
    }

    #[test]
    fn out_of_range_score_names_record() {
        let mut text = serde_json::to_string(&record("ok", "S1", 2)).unwrap();
        text.push('\n');
        text.push_str(&serde_json::to_string(&record("bad-one", "S1", 9)).unwrap());
        let err = DatasetManifest::parse(&text, Path::new("m.jsonl"), ".").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad-one") && msg.contains(":2:"), "{msg}");
        assert!(err.is_validation());
    }

    #[test]
    fn duplicate_video_rejected() {
        let r = vec![record("a", "S1", 0), record("a", "S2", 1)];
        assert!(DatasetManifest::new(r, ".").is_err());
    }

    #[test]
    fn empty_site_rejected() {
        assert!(DatasetManifest::new(vec![record("a", " ", 0)], ".").is_err());
    }

    #[test]
    fn malformed_line_is_parse_error() {
        let err = DatasetManifest::parse("{\"video_id\": 3}", Path::new("m.jsonl"), ".").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn jsonl_round_trip() {
        let m = DatasetManifest::new(
            vec![record("a", "S1", 0), record("b", "S2", 3)],
            ".",
        )
        .unwrap();
        let text = m.to_jsonl().unwrap();
        let back = DatasetManifest::parse(&text, Path::new("m.jsonl"), ".").unwrap();
        assert_eq!(m, back);
    }
}
