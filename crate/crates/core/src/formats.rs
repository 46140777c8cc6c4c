//! JSON Lines formats for detections, landmarks and tracks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BoundingBox, Detection, Keypoint, PoseFrame, Track, NUM_KEYPOINTS};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    frame: usize,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    confidence: f64,
    label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkRecord {
    frame: usize,
    track_id: u64,
    keypoints: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackRecord {
    track_id: u64,
    frame: usize,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

fn parse_lines<T, F>(path: &Path, text: &str, mut f: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T) -> Result<()>,
{
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let wrap = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: T = serde_json::from_str(line).map_err(|e| wrap(e.to_string()))?;
        f(rec).map_err(|e| wrap(e.to_string()))?;
    }
    Ok(())
}

pub fn parse_detections(text: &str, origin: &Path) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    parse_lines(origin, text, |r: DetectionRecord| {
        let bbox = BoundingBox::new(r.x1, r.y1, r.x2, r.y2)?;
        out.push(Detection::new(r.frame, bbox, r.confidence, r.label)?);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    parse_detections(&fs::read_to_string(path)?, path)
}

pub fn detections_to_jsonl(detections: &[Detection]) -> Result<String> {
    let mut out = String::new();
    for d in detections {
        let rec = DetectionRecord {
            frame: d.frame_index,
            x1: d.bbox.x1,
            y1: d.bbox.y1,
            x2: d.bbox.x2,
            y2: d.bbox.y2,
            confidence: d.confidence,
            label: d.label.clone(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// Landmark frames grouped by the track they were estimated for.
pub type LandmarkTracks = BTreeMap<u64, Vec<PoseFrame>>;

pub fn parse_landmarks(text: &str, origin: &Path) -> Result<LandmarkTracks> {
    let mut out: LandmarkTracks = BTreeMap::new();
    parse_lines(origin, text, |r: LandmarkRecord| {
        if r.keypoints.len() != NUM_KEYPOINTS {
            return Err(Error::Validation(format!(
                "expected {NUM_KEYPOINTS} keypoints, got {}",
                r.keypoints.len()
            )));
        }
        let mut kps = [Keypoint::new(0.0, 0.0, 0.0); NUM_KEYPOINTS];
        for (dst, src) in kps.iter_mut().zip(&r.keypoints) {
            *dst = Keypoint::new(src[0], src[1], src[2]);
        }
        out.entry(r.track_id)
            .or_default()
            .push(PoseFrame::new(r.frame, kps)?);
        Ok(())
    })?;
    for (track_id, frames) in out.iter_mut() {
        frames.sort_by_key(|f| f.frame_index);
        if frames.windows(2).any(|w| w[0].frame_index == w[1].frame_index) {
            return Err(Error::Validation(format!(
                "{}: track {track_id} has two landmark rows for one frame",
                origin.display()
            )));
        }
    }
    Ok(out)
}

pub fn read_landmarks(path: impl AsRef<Path>) -> Result<LandmarkTracks> {
    let path = path.as_ref();
    parse_landmarks(&fs::read_to_string(path)?, path)
}

/// Serializes frames in (frame, track_id) order.
pub fn landmarks_to_jsonl(tracks: &LandmarkTracks) -> Result<String> {
    let mut rows: Vec<(usize, u64, &PoseFrame)> = tracks
        .iter()
        .flat_map(|(&id, frames)| frames.iter().map(move |f| (f.frame_index, id, f)))
        .collect();
    rows.sort_by_key(|(f, id, _)| (*f, *id));
    let mut out = String::new();
    for (frame, track_id, pf) in rows {
        let rec = LandmarkRecord {
            frame,
            track_id,
            keypoints: pf.keypoints.iter().map(|k| [k.x, k.y, k.confidence]).collect(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn tracks_to_jsonl(tracks: &[Track]) -> Result<String> {
    let mut out = String::new();
    for t in tracks {
        for (&frame, b) in &t.observations {
            let rec = TrackRecord {
                track_id: t.track_id,
                frame,
                x1: b.x1,
                y1: b.y1,
                x2: b.x2,
                y2: b.y2,
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn parse_tracks(text: &str, origin: &Path) -> Result<Vec<Track>> {
    let mut by_id: BTreeMap<u64, Track> = BTreeMap::new();
    parse_lines(origin, text, |r: TrackRecord| {
        let b = BoundingBox::new(r.x1, r.y1, r.x2, r.y2)?;
        let t = by_id.entry(r.track_id).or_insert_with(|| Track::new(r.track_id));
        if t.observations.insert(r.frame, b).is_some() {
            return Err(Error::Validation(format!(
                "track {} has two boxes in frame {}",
                r.track_id, r.frame
            )));
        }
        Ok(())
    })?;
    Ok(by_id
        .into_values()
        .map(|mut t| {
            t.age = t.len();
            t.hit_streak = t.len();
            t
        })
        .collect())
}

pub fn read_tracks(path: impl AsRef<Path>) -> Result<Vec<Track>> {
    let path = path.as_ref();
    parse_tracks(&fs::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_line_parses() {
        let text = r#"{"frame":3,"x1":1.0,"y1":2.0,"x2":5.0,"y2":9.0,"confidence":0.93,"label":"person"}"#;
        let dets = parse_detections(text, Path::new("d.jsonl")).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].frame_index, 3);
        assert_eq!(dets[0].bbox.height(), 7.0);
        let again = parse_detections(&detections_to_jsonl(&dets).unwrap(), Path::new("d")).unwrap();
        assert_eq!(dets, again);
    }

    #[test]
    fn invalid_detection_box_reports_line() {
        let text = "\n{\"frame\":0,\"x1\":5,\"y1\":2,\"x2\":1,\"y2\":9,\"confidence\":0.9,\"label\":\"person\"}";
        let err = parse_detections(text, Path::new("d.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn landmark_rows_group_by_track() {
        let kp: Vec<[f64; 3]> = (0..17).map(|i| [i as f64, 1.0, 0.9]).collect();
        let mut text = String::new();
        for (frame, track) in [(1, 7), (0, 7), (0, 2)] {
            text.push_str(
                &serde_json::json!({"frame": frame, "track_id": track, "keypoints": kp}).to_string(),
            );
            text.push('\n');
        }
        let tracks = parse_landmarks(&text, Path::new("l.jsonl")).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[&7][0].frame_index, 0);
        assert_eq!(tracks[&7][1].frame_index, 1);
    }

    #[test]
    fn landmark_row_needs_17_points() {
        let text = serde_json::json!({"frame": 0, "track_id": 0, "keypoints": [[0.0, 0.0, 1.0]]}).to_string();
        assert!(parse_landmarks(&text, Path::new("l.jsonl")).is_err());
    }
}
