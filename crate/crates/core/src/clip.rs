use log::warn;

use crate::error::{Error, Result};
use crate::types::GaitSample;

/// Analysis window applied before isolation and feature extraction.
pub const DEFAULT_CLIP_SECONDS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClippedSample {
    pub sample: GaitSample,
    /// The video ended before the window did; every frame was kept.
    pub shorter_than_window: bool,
}

/// Number of leading frames covered by `duration` seconds at `fps`.
pub fn clip_frame_limit(duration: f64, fps: f64) -> usize {
    (duration * fps).floor() as usize
}

/// Keeps the frames with `frame_index < floor(duration * fps)` in both the
/// pose sequence and the raw track.
pub fn clip_first_seconds(sample: &GaitSample, duration: f64) -> Result<ClippedSample> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Validation(format!(
            "clip duration must be positive, got {duration}"
        )));
    }
    if sample.pose.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: no pose frames to clip",
            sample.video_id
        )));
    }
    let limit = clip_frame_limit(duration, sample.fps);
    let mut out = sample.clone();
    out.pose.frames.retain(|f| f.frame_index < limit);
    out.raw_track = sample.raw_track.truncated(limit);
    if out.pose.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: clip of {duration}s leaves no frames",
            sample.video_id
        )));
    }
    let last = sample
        .pose
        .frames
        .last()
        .map(|f| f.frame_index)
        .unwrap_or(0)
        .max(sample.raw_track.last_frame().unwrap_or(0));
    let shorter_than_window = last + 1 < limit;
    if shorter_than_window {
        warn!(
            "{}: video shorter than the {duration}s window ({} frames < {limit}); keeping all frames",
            sample.video_id,
            last + 1
        );
    }
    Ok(ClippedSample {
        sample: out,
        shorter_than_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BoundingBox, Keypoint, PoseFrame, PoseSequence, Track, NUM_KEYPOINTS};

    fn sample(frames: usize, fps: f64) -> GaitSample {
        let kp = [Keypoint::new(1.0, 1.0, 1.0); NUM_KEYPOINTS];
        let pose_frames = (0..frames).map(|f| PoseFrame::new(f, kp).unwrap()).collect();
        let b = BoundingBox::new(0.0, 0.0, 10.0, 20.0).unwrap();
        GaitSample {
            video_id: "v".into(),
            site_id: "S1".into(),
            participant_id: "p".into(),
            sara_gait_score: 1,
            fps,
            pose: PoseSequence::new(0, pose_frames, fps).unwrap(),
            raw_track: Track::from_boxes(0, (0..frames).map(|f| (f, b))),
        }
    }

    #[test]
    fn six_seconds_at_30fps() {
        let c = clip_first_seconds(&sample(300, 30.0), 6.0).unwrap();
        assert_eq!(c.sample.pose.len(), 180);
        assert_eq!(c.sample.raw_track.len(), 180);
        assert!(!c.shorter_than_window);
        assert_eq!(c.sample.video_id, "v");
        assert_eq!(c.sample.sara_gait_score, 1);
    }

    #[test]
    fn short_video_kept_whole_with_flag() {
        let c = clip_first_seconds(&sample(100, 30.0), 6.0).unwrap();
        assert_eq!(c.sample.pose.len(), 100);
        assert!(c.shorter_than_window);
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(clip_first_seconds(&sample(10, 30.0), 0.0).is_err());
    }

    #[test]
    fn idempotent() {
        let once = clip_first_seconds(&sample(300, 30.0), 6.0).unwrap().sample;
        let twice = clip_first_seconds(&once, 6.0).unwrap().sample;
        assert_eq!(once, twice);
    }

    #[test]
    fn empty_clip_is_error() {
        let mut s = sample(10, 30.0);
        for f in s.pose.frames.iter_mut() {
            f.frame_index += 1000;
        }
        assert!(clip_first_seconds(&s, 1.0).is_err());
    }
}
