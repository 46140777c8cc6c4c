//! Domain types shared across the pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in image pixels, y pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting non-finite corners and non-positive extents.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "box corners ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::Validation(format!(
                "box ({x1}, {y1}, {x2}, {y2}) has non-positive extent"
            )));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub label: String,
}

impl Detection {
    pub fn new(
        frame_index: usize,
        bbox: BoundingBox,
        confidence: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Validation(format!(
                "detection confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Detection {
            frame_index,
            bbox,
            confidence,
            label: label.into(),
        })
    }

    pub fn person(frame_index: usize, bbox: BoundingBox, confidence: f64) -> Result<Self> {
        Detection::new(frame_index, bbox, confidence, "person")
    }
}

/// Identity-stamped sequence of boxes, at most one per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    pub observations: BTreeMap<usize, BoundingBox>,
    pub hit_streak: usize,
    pub age: usize,
}

impl Track {
    pub fn new(track_id: u64) -> Self {
        Track {
            track_id,
            observations: BTreeMap::new(),
            hit_streak: 0,
            age: 0,
        }
    }

    pub fn from_boxes(track_id: u64, boxes: impl IntoIterator<Item = (usize, BoundingBox)>) -> Self {
        let observations: BTreeMap<_, _> = boxes.into_iter().collect();
        let n = observations.len();
        Track {
            track_id,
            observations,
            hit_streak: n,
            age: n,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn first_frame(&self) -> Option<usize> {
        self.observations.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.observations.keys().next_back().copied()
    }

    /// Observed box heights in frame order.
    pub fn heights(&self) -> Vec<(usize, f64)> {
        self.observations
            .iter()
            .map(|(&f, b)| (f, b.height()))
            .collect()
    }

    /// Copy restricted to frames `< end_frame`.
    pub fn truncated(&self, end_frame: usize) -> Track {
        Track {
            track_id: self.track_id,
            observations: self.observations.range(..end_frame).map(|(&f, &b)| (f, b)).collect(),
            hit_streak: self.hit_streak,
            age: self.age,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Keypoint { x, y, confidence }
    }
}

pub const NUM_KEYPOINTS: usize = 17;

/// COCO-17 landmark order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Joint {
    Nose = 0,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl Joint {
    pub const ALL: [Joint; NUM_KEYPOINTS] = [
        Joint::Nose,
        Joint::LeftEye,
        Joint::RightEye,
        Joint::LeftEar,
        Joint::RightEar,
        Joint::LeftShoulder,
        Joint::RightShoulder,
        Joint::LeftElbow,
        Joint::RightElbow,
        Joint::LeftWrist,
        Joint::RightWrist,
        Joint::LeftHip,
        Joint::RightHip,
        Joint::LeftKnee,
        Joint::RightKnee,
        Joint::LeftAnkle,
        Joint::RightAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_index: usize,
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
}

impl PoseFrame {
    pub fn new(frame_index: usize, keypoints: [Keypoint; NUM_KEYPOINTS]) -> Result<Self> {
        for (j, kp) in keypoints.iter().enumerate() {
            if !(0.0..=1.0).contains(&kp.confidence) {
                return Err(Error::Validation(format!(
                    "frame {frame_index}: keypoint {j} confidence {} outside [0, 1]",
                    kp.confidence
                )));
            }
            if !kp.x.is_finite() || !kp.y.is_finite() {
                return Err(Error::NonFinite(format!(
                    "frame {frame_index}: keypoint {j} coordinates"
                )));
            }
        }
        Ok(PoseFrame {
            frame_index,
            keypoints,
        })
    }

    pub fn joint(&self, joint: Joint) -> &Keypoint {
        &self.keypoints[joint.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub track_id: u64,
    pub frames: Vec<PoseFrame>,
    pub fps: f64,
}

impl PoseSequence {
    pub fn new(track_id: u64, frames: Vec<PoseFrame>, fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Validation(format!("fps must be positive, got {fps}")));
        }
        if frames
            .windows(2)
            .any(|w| w[1].frame_index <= w[0].frame_index)
        {
            return Err(Error::Validation(format!(
                "pose frames for track {track_id} are not strictly increasing"
            )));
        }
        Ok(PoseSequence {
            track_id,
            frames,
            fps,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// One labelled walking video after participant isolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSample {
    pub video_id: String,
    pub site_id: String,
    pub participant_id: String,
    pub sara_gait_score: u8,
    pub fps: f64,
    pub pose: PoseSequence,
    pub raw_track: Track,
}

pub const MAX_SARA_GAIT_SCORE: u8 = 8;

impl GaitSample {
    pub fn validate(&self) -> Result<()> {
        if self.sara_gait_score > MAX_SARA_GAIT_SCORE {
            return Err(Error::Validation(format!(
                "{}: sara_gait_score {} outside [0, 8]",
                self.video_id, self.sara_gait_score
            )));
        }
        if self.pose.fps != self.fps {
            return Err(Error::Validation(format!(
                "{}: pose fps {} differs from sample fps {}",
                self.video_id, self.pose.fps, self.fps
            )));
        }
        Ok(())
    }
}
