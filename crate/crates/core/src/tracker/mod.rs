//! SORT multi-object tracking over precomputed per-frame detections.

mod hungarian;
mod kalman;

use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

pub use hungarian::{assignment_cost, hungarian};
pub use kalman::{
    box_to_measurement, kalman_predict, kalman_update, Covariance, KalmanTrackState, StateVector,
    MIN_AREA,
};

use crate::error::{Error, Result};
use crate::types::{BoundingBox, Detection, Track};

pub const PERSON_LABEL: &str = "person";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Minimum IoU for a detection-track pair to be accepted.
    pub iou_threshold: f64,
    /// Frames a track survives without a matched detection.
    pub max_age: usize,
    /// Observations a track needs before it is reported.
    pub min_hits: usize,
    /// Detections below this confidence are discarded before tracking.
    pub min_confidence: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_threshold: 0.3,
            max_age: 5,
            min_hits: 3,
            min_confidence: 0.8,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "tracker.iou_threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "tracker.min_confidence must lie in [0, 1], got {}",
                self.min_confidence
            )));
        }
        Ok(())
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

struct ActiveTrack {
    filter: KalmanTrackState,
    track: Track,
    time_since_update: usize,
}

/// Runs SORT over `detections` (any order) and returns every track with at
/// least `min_hits` observations, ordered by id.
///
/// Observations store the matched detection boxes, not the filtered state.
pub fn track(detections: &[Detection], config: &TrackerConfig) -> Result<Vec<Track>> {
    config.validate()?;
    let mut by_frame: BTreeMap<usize, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        if d.confidence >= config.min_confidence && d.label == PERSON_LABEL {
            by_frame.entry(d.frame_index).or_default().push(d);
        }
    }
    let (Some(&first), Some(&last)) = (by_frame.keys().next(), by_frame.keys().next_back()) else {
        return Ok(Vec::new());
    };

    let mut active: Vec<ActiveTrack> = Vec::new();
    let mut finished: Vec<Track> = Vec::new();
    let mut next_id = 0u64;
    let empty = Vec::new();

    for frame in first..=last {
        let frame_dets = by_frame.get(&frame).unwrap_or(&empty);

        let mut predicted = Vec::with_capacity(active.len());
        active.retain_mut(|t| {
            t.filter = t.filter.predict();
            t.track.age += 1;
            match t.filter.to_box() {
                Ok(b) => {
                    predicted.push(b);
                    true
                }
                Err(e) => {
                    debug!("dropping track {}: {e}", t.track.track_id);
                    finished.push(t.track.clone());
                    false
                }
            }
        });

        let mut det_matched = vec![false; frame_dets.len()];
        let mut trk_matched = vec![false; active.len()];
        if !frame_dets.is_empty() && !active.is_empty() {
            let ious: Vec<Vec<f64>> = frame_dets
                .iter()
                .map(|d| predicted.iter().map(|p| iou(&d.bbox, p)).collect())
                .collect();
            let cost: Vec<Vec<f64>> = ious
                .iter()
                .map(|row| row.iter().map(|v| 1.0 - v).collect())
                .collect();
            for (di, ti) in hungarian(&cost)? {
                if ious[di][ti] < config.iou_threshold {
                    continue;
                }
                det_matched[di] = true;
                trk_matched[ti] = true;
                let t = &mut active[ti];
                let d = frame_dets[di];
                t.filter = t.filter.update(&d.bbox)?;
                t.track.observations.insert(frame, d.bbox);
                t.track.hit_streak += 1;
                t.time_since_update = 0;
            }
        }

        for (t, matched) in active.iter_mut().zip(&trk_matched) {
            if !matched {
                t.time_since_update += 1;
                t.track.hit_streak = 0;
            }
        }

        for (d, _) in frame_dets.iter().zip(&det_matched).filter(|(_, m)| !**m) {
            let mut t = Track::new(next_id);
            next_id += 1;
            t.observations.insert(frame, d.bbox);
            t.hit_streak = 1;
            t.age = 1;
            active.push(ActiveTrack {
                filter: KalmanTrackState::from_box(&d.bbox),
                track: t,
                time_since_update: 0,
            });
        }

        active.retain(|t| {
            if t.time_since_update > config.max_age {
                finished.push(t.track.clone());
                false
            } else {
                true
            }
        });
    }

    finished.extend(active.into_iter().map(|t| t.track));
    let mut tracks: Vec<Track> = finished
        .into_iter()
        .filter(|t| t.len() >= config.min_hits)
        .collect();
    tracks.sort_by_key(|t| t.track_id);
    Ok(tracks)
}
