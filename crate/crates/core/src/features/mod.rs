//! Gait feature vector: six statistics for each of thirteen per-frame
//! series, plus the participant's total height reduction (79 values).

mod series;
mod stats;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use series::{
    clean_frames, extract_series, stance_percentage, FeatureConfig, SeriesBundle, SeriesKind,
};
pub use stats::{periodogram, spectral_entropy, subfeatures, SubFeatures, MIN_ENTROPY_SAMPLES, SUBFEATURE_NAMES};

use crate::error::{Error, Result};
use crate::types::{GaitSample, Track};

pub const NUM_FEATURES: usize = 79;
pub const HEIGHT_REDUCTION: &str = "height_reduction";

/// Ordered feature names: for each series group in table order, the six
/// statistics `mean, std, max, min, range, entropy`, then `height_reduction`.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names: Vec<String> = SeriesKind::ALL
            .iter()
            .flat_map(|k| {
                SUBFEATURE_NAMES
                    .iter()
                    .map(move |s| format!("{s}_{}", k.group_name()))
            })
            .collect();
        names.push(HEIGHT_REDUCTION.to_string());
        names
    })
}

pub fn feature_index(name: &str) -> Option<usize> {
    feature_names().iter().position(|n| n == name)
}

/// Resolves every name against the vocabulary, failing on the first unknown one.
pub fn resolve_names<S: AsRef<str>>(names: &[S]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            feature_index(n.as_ref())
                .ok_or_else(|| Error::Validation(format!("unknown feature name {:?}", n.as_ref())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn names(&self) -> &'static [String] {
        feature_names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        feature_names()
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// First minus last observed box height; positive when the person recedes.
pub fn height_reduction(track: &Track) -> Result<f64> {
    let (first, last) = match (
        track.observations.values().next(),
        track.observations.values().next_back(),
    ) {
        (Some(a), Some(b)) if track.len() >= 2 => (a, b),
        _ => {
            return Err(Error::InsufficientData(format!(
                "track {}: height reduction needs at least 2 observations",
                track.track_id
            )))
        }
    };
    Ok(first.height() - last.height())
}

/// Full feature vector for a clipped, isolated sample.
pub fn extract_features(sample: &GaitSample, config: &FeatureConfig) -> Result<FeatureVector> {
    let bundle = extract_series(&sample.pose, Some(&sample.raw_track), config)?;
    let mut values = Vec::with_capacity(NUM_FEATURES);
    for kind in SeriesKind::ALL {
        let sf = subfeatures(bundle.get(kind)).map_err(|e| {
            Error::Validation(format!(
                "{}: series {}: {e}",
                sample.video_id,
                kind.series_name()
            ))
        })?;
        values.extend(sf.as_array());
    }
    values.push(height_reduction(&sample.raw_track)?);
    debug_assert_eq!(values.len(), NUM_FEATURES);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{}: feature {}",
            sample.video_id,
            feature_names()[i]
        )));
    }
    Ok(FeatureVector { values })
}
