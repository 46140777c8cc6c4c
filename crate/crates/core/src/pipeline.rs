//! Per-video processing from raw detections and landmarks to a feature
//! vector, and manifest-wide feature tables.

use log::info;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clip::{clip_first_seconds, clip_frame_limit, DEFAULT_CLIP_SECONDS};
use crate::error::{Error, Result};
use crate::features::{extract_features, feature_names, FeatureConfig, FeatureVector};
use crate::formats::{read_detections, read_landmarks, LandmarkTracks};
use crate::isolation::{select_participant, IsolationConfig, IsolationReport};
use crate::manifest::{DatasetManifest, ManifestRecord};
use crate::table::{FeatureTable, RowMeta};
use crate::tracker::{track, TrackerConfig};
use crate::types::{GaitSample, PoseSequence, Track};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub isolation: IsolationConfig,
    pub features: FeatureConfig,
    pub clip_seconds: f64,
    /// Minimum fraction of confident keypoints that must fall inside the
    /// participant's boxes for a landmark track to be attributed to them.
    pub min_landmark_overlap: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tracker: TrackerConfig::default(),
            isolation: IsolationConfig::default(),
            features: FeatureConfig::default(),
            clip_seconds: DEFAULT_CLIP_SECONDS,
            min_landmark_overlap: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        if !(self.clip_seconds.is_finite() && self.clip_seconds > 0.0) {
            return Err(Error::Config(format!(
                "clip_seconds must be positive, got {}",
                self.clip_seconds
            )));
        }
        if !(0.0..=1.0).contains(&self.min_landmark_overlap) {
            return Err(Error::Config("min_landmark_overlap must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAudit {
    pub video_id: String,
    pub n_tracks: usize,
    pub isolation: IsolationReport,
    pub landmark_track: u64,
    pub landmark_overlap: f64,
    pub shorter_than_window: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedVideo {
    pub sample: GaitSample,
    pub features: FeatureVector,
    pub audit: VideoAudit,
}

/// Fraction of confident keypoints lying inside the track's box at the same frame.
pub fn landmark_overlap(frames: &[crate::types::PoseFrame], track: &Track, min_confidence: f64) -> f64 {
    let (mut inside, mut total) = (0usize, 0usize);
    for f in frames {
        let Some(b) = track.observations.get(&f.frame_index) else {
            continue;
        };
        for k in f.keypoints.iter().filter(|k| k.confidence >= min_confidence) {
            total += 1;
            if b.contains(k.x, k.y) {
                inside += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        inside as f64 / total as f64
    }
}

/// Chooses the landmark track that best overlaps `track` (ties to the lowest id).
pub fn match_landmarks(landmarks: &LandmarkTracks, track: &Track, min_confidence: f64) -> Option<(u64, f64)> {
    let mut best: Option<(u64, f64)> = None;
    for (&id, frames) in landmarks {
        let o = landmark_overlap(frames, track, min_confidence);
        if best.is_none_or(|(_, b)| o > b) {
            best = Some((id, o));
        }
    }
    best
}

/// Tracks, isolates, matches landmarks, clips and extracts features for one
/// video whose detections and landmarks are already loaded.
pub fn process_video(
    record: &ManifestRecord,
    detections: &[crate::types::Detection],
    landmarks: &LandmarkTracks,
    config: &PipelineConfig,
) -> Result<ProcessedVideo> {
    let limit = clip_frame_limit(config.clip_seconds, record.fps);
    let tracks: Vec<Track> = track(detections, &config.tracker)
        .map_err(|e| e.in_stage("track"))?
        .into_iter()
        .map(|t| t.truncated(limit))
        .filter(|t| !t.is_empty())
        .collect();
    let isolation = select_participant(&tracks, &config.isolation).map_err(|e| e.in_stage("isolate"))?;
    let participant = tracks
        .iter()
        .find(|t| t.track_id == isolation.selected_track)
        .expect("selected track exists")
        .clone();
    let (landmark_track, overlap) =
        match_landmarks(landmarks, &participant, config.features.min_keypoint_confidence)
            .ok_or_else(|| Error::InsufficientData("no landmark tracks".into()).in_stage("landmarks"))?;
    if overlap < config.min_landmark_overlap {
        return Err(Error::InsufficientData(format!(
            "best landmark track {landmark_track} overlaps the participant by {overlap:.2} < {}",
            config.min_landmark_overlap
        ))
        .in_stage("landmarks"));
    }
    let frames = landmarks[&landmark_track].clone();
    let sample = GaitSample {
        video_id: record.video_id.clone(),
        site_id: record.site_id.clone(),
        participant_id: record.participant_id.clone(),
        sara_gait_score: record.sara_gait_score,
        fps: record.fps,
        pose: PoseSequence::new(landmark_track, frames, record.fps)?,
        raw_track: participant,
    };
    sample.validate()?;
    let clipped = clip_first_seconds(&sample, config.clip_seconds).map_err(|e| e.in_stage("clip"))?;
    let features = extract_features(&clipped.sample, &config.features).map_err(|e| e.in_stage("features"))?;
    Ok(ProcessedVideo {
        audit: VideoAudit {
            video_id: record.video_id.clone(),
            n_tracks: tracks.len(),
            isolation,
            landmark_track,
            landmark_overlap: overlap,
            shorter_than_window: clipped.shorter_than_window,
        },
        sample: clipped.sample,
        features,
    })
}

/// Reads a record's files and processes it; errors name the video.
pub fn process_record(manifest: &DatasetManifest, record: &ManifestRecord, config: &PipelineConfig) -> Result<ProcessedVideo> {
    let run = || -> Result<ProcessedVideo> {
        let detections = read_detections(manifest.resolve(&record.detections_path)).map_err(|e| e.in_stage("read detections"))?;
        let landmarks = read_landmarks(manifest.resolve(&record.landmarks_path)).map_err(|e| e.in_stage("read landmarks"))?;
        process_video(record, &detections, &landmarks, config)
    };
    run().map_err(|e| Error::Record {
        video_id: record.video_id.clone(),
        source: Box::new(e),
    })
}

/// Processes every record in parallel and assembles the feature table in
/// manifest order.
pub fn build_feature_table(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<(FeatureTable, Vec<VideoAudit>)> {
    config.validate()?;
    let processed: Vec<ProcessedVideo> = manifest
        .records
        .par_iter()
        .map(|r| process_record(manifest, r, config))
        .collect::<Result<_>>()?;
    info!("extracted features for {} videos", processed.len());
    let names = feature_names().to_vec();
    let mut values = Vec::with_capacity(processed.len() * names.len());
    for p in &processed {
        values.extend_from_slice(&p.features.values);
    }
    let features = Array2::from_shape_vec((processed.len(), names.len()), values)
        .map_err(|e| Error::Validation(e.to_string()))?;
    let rows = manifest.records.iter().map(RowMeta::from).collect();
    let table = FeatureTable::new(rows, names, features)?;
    Ok((table, processed.into_iter().map(|p| p.audit).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, generate_videos, DatasetConfig};
    use crate::synth::dataset::PARTICIPANT_POSE_ID;

    fn small() -> DatasetConfig {
        DatasetConfig {
            n_per_class: 2,
            sites: 2,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn isolates_participant_and_matches_pose() {
        let videos = generate_videos(&small(), 4).unwrap();
        for v in &videos {
            let p = process_video(&v.record, &v.detections, &v.landmarks, &PipelineConfig::default()).unwrap();
            assert_eq!(p.audit.landmark_track, PARTICIPANT_POSE_ID, "{}", v.record.video_id);
            assert!(p.audit.landmark_overlap > 0.95);
            assert_eq!(p.sample.pose.len(), 180);
            // the isolated track holds exactly the participant's boxes
            let truth = v.sample.raw_track.truncated(180);
            assert_eq!(p.sample.raw_track.observations, truth.observations);
        }
    }

    #[test]
    fn table_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&small(), 8, dir.path()).unwrap();
        let (table, audits) = build_feature_table(&m, &PipelineConfig::default()).unwrap();
        assert_eq!(table.len(), 8);
        assert_eq!(table.feature_names.len(), 79);
        assert_eq!(audits.len(), 8);
        assert_eq!(table.scores(), vec![0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn errors_name_the_video() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&small(), 8, dir.path()).unwrap();
        std::fs::write(dir.path().join("detections/vid_0002.jsonl"), "{\"frame\": 0}\n").unwrap();
        let err = build_feature_table(&m, &PipelineConfig::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vid_0002"), "{msg}");
        assert!(err.is_validation());
    }
}
