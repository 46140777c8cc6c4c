//! Per-frame gait series computed from COCO-17 landmarks.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Joint, Keypoint, PoseFrame, PoseSequence, Track, NUM_KEYPOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Keypoints below this confidence are interpolated from neighbouring frames.
    pub min_keypoint_confidence: f64,
    /// Frames with more low-confidence keypoints than this are dropped.
    pub max_low_confidence_keypoints: usize,
    /// Stationarity threshold as a fraction of the frame's reference height.
    pub stance_threshold_fraction: f64,
    /// Divide coordinates by the per-frame reference height before computing series.
    pub normalize_by_height: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            min_keypoint_confidence: 0.3,
            max_low_confidence_keypoints: 8,
            stance_threshold_fraction: 0.01,
            normalize_by_height: false,
        }
    }
}

/// The thirteen per-frame series, in feature-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeriesKind {
    FeetDist,
    FeetAngle,
    RightX,
    RightY,
    LeftX,
    LeftY,
    LeftKneeBent,
    RightKneeBent,
    Imbalance,
    Tilt,
    NoseX,
    NoseY,
    StanceFlag,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 13] = [
        SeriesKind::FeetDist,
        SeriesKind::FeetAngle,
        SeriesKind::RightX,
        SeriesKind::RightY,
        SeriesKind::LeftX,
        SeriesKind::LeftY,
        SeriesKind::LeftKneeBent,
        SeriesKind::RightKneeBent,
        SeriesKind::Imbalance,
        SeriesKind::Tilt,
        SeriesKind::NoseX,
        SeriesKind::NoseY,
        SeriesKind::StanceFlag,
    ];

    /// Key of the raw per-frame series.
    pub fn series_name(self) -> &'static str {
        match self {
            SeriesKind::StanceFlag => "stance_flag",
            other => other.group_name(),
        }
    }

    /// Group name used in feature names (`mean_<group>` and so on).
    pub fn group_name(self) -> &'static str {
        match self {
            SeriesKind::FeetDist => "feet_dist",
            SeriesKind::FeetAngle => "feet_angle",
            SeriesKind::RightX => "right_x",
            SeriesKind::RightY => "right_y",
            SeriesKind::LeftX => "left_x",
            SeriesKind::LeftY => "left_y",
            SeriesKind::LeftKneeBent => "left_knee_bent",
            SeriesKind::RightKneeBent => "right_knee_bent",
            SeriesKind::Imbalance => "imbalance",
            SeriesKind::Tilt => "tilt",
            SeriesKind::NoseX => "nose_x",
            SeriesKind::NoseY => "nose_y",
            SeriesKind::StanceFlag => "stance",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBundle {
    pub frame_indices: Vec<usize>,
    series: Vec<Vec<f64>>,
}

impl SeriesBundle {
    pub fn get(&self, kind: SeriesKind) -> &[f64] {
        &self.series[kind as usize]
    }

    pub fn by_name(&self, name: &str) -> Option<&[f64]> {
        SeriesKind::ALL
            .iter()
            .find(|k| k.series_name() == name)
            .map(|&k| self.get(k))
    }

    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }
}

/// Angle between the segment `from -> to` and the +x axis, in (-pi, pi].
fn segment_angle(from: &Keypoint, to: &Keypoint) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

/// Interior angle at `vertex` between the rays to `a` and `b`, in [0, pi].
fn interior_angle(a: &Keypoint, vertex: &Keypoint, b: &Keypoint) -> f64 {
    let (ux, uy) = (a.x - vertex.x, a.y - vertex.y);
    let (vx, vy) = (b.x - vertex.x, b.y - vertex.y);
    (ux * vy - uy * vx).abs().atan2(ux * vx + uy * vy)
}

/// Orientation of the undirected line through two points, folded into
/// (-pi/2, pi/2].
fn line_angle(a: &Keypoint, b: &Keypoint) -> f64 {
    let theta = segment_angle(a, b);
    let half = std::f64::consts::FRAC_PI_2;
    if theta > half {
        theta - std::f64::consts::PI
    } else if theta <= -half {
        theta + std::f64::consts::PI
    } else {
        theta
    }
}

fn distance(a: &Keypoint, b: &Keypoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Drops frames with too many unreliable keypoints and fills the remaining
/// low-confidence keypoints by linear interpolation in frame index between
/// the nearest confident observations of the same joint (nearest value at
/// the ends).
pub fn clean_frames(frames: &[PoseFrame], config: &FeatureConfig) -> Vec<PoseFrame> {
    let low = |k: &Keypoint| k.confidence < config.min_keypoint_confidence;
    let kept: Vec<PoseFrame> = frames
        .iter()
        .filter(|f| {
            let n_low = f.keypoints.iter().filter(|k| low(k)).count();
            if n_low > config.max_low_confidence_keypoints {
                warn!(
                    "dropping frame {}: {n_low} low-confidence keypoints",
                    f.frame_index
                );
                false
            } else {
                true
            }
        })
        .cloned()
        .collect();

    let mut out = kept.clone();
    for j in 0..NUM_KEYPOINTS {
        let confident: Vec<usize> = (0..kept.len())
            .filter(|&i| !low(&kept[i].keypoints[j]))
            .collect();
        if confident.len() == kept.len() {
            continue;
        }
        if confident.is_empty() {
            warn!("joint {j} is never confidently detected; keeping raw coordinates");
            continue;
        }
        for i in 0..kept.len() {
            if !low(&kept[i].keypoints[j]) {
                continue;
            }
            let pos = confident.partition_point(|&c| c < i);
            let prev = pos.checked_sub(1).map(|p| confident[p]);
            let next = confident.get(pos).copied();
            let (x, y) = match (prev, next) {
                (Some(p), Some(n)) => {
                    let (fp, fnx, fi) = (
                        kept[p].frame_index as f64,
                        kept[n].frame_index as f64,
                        kept[i].frame_index as f64,
                    );
                    let t = (fi - fp) / (fnx - fp);
                    let (a, b) = (&kept[p].keypoints[j], &kept[n].keypoints[j]);
                    (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
                }
                (Some(p), None) => (kept[p].keypoints[j].x, kept[p].keypoints[j].y),
                (None, Some(n)) => (kept[n].keypoints[j].x, kept[n].keypoints[j].y),
                (None, None) => unreachable!("confident list is non-empty"),
            };
            let kp = &mut out[i].keypoints[j];
            kp.x = x;
            kp.y = y;
        }
    }
    out
}

/// Height used to scale the stationarity threshold: the track's box height
/// at the nearest observed frame, or the keypoint extent without a track.
fn reference_heights(frames: &[PoseFrame], track: Option<&Track>) -> Vec<f64> {
    frames
        .iter()
        .map(|f| {
            if let Some(t) = track.filter(|t| !t.is_empty()) {
                let after = t.observations.range(f.frame_index..).next();
                let before = t.observations.range(..f.frame_index).next_back();
                let b = match (before, after) {
                    (Some((&fb, b0)), Some((&fa, b1))) => {
                        if f.frame_index - fb <= fa - f.frame_index {
                            b0
                        } else {
                            b1
                        }
                    }
                    (Some((_, b)), None) | (None, Some((_, b))) => b,
                    (None, None) => unreachable!("track is non-empty"),
                };
                b.height()
            } else {
                let (lo, hi) = f
                    .keypoints
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
                        (lo.min(k.y), hi.max(k.y))
                    });
                (hi - lo).max(f64::MIN_POSITIVE)
            }
        })
        .collect()
}

/// Computes the thirteen per-frame series for a participant's pose sequence.
///
/// `track` supplies the participant's box heights for the stationarity
/// threshold; without it the keypoint extent is used.
pub fn extract_series(
    pose: &PoseSequence,
    track: Option<&Track>,
    config: &FeatureConfig,
) -> Result<SeriesBundle> {
    if pose.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "track {}: need at least 2 pose frames, got {}",
            pose.track_id,
            pose.len()
        )));
    }
    let mut frames = clean_frames(&pose.frames, config);
    if frames.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "track {}: fewer than 2 usable frames after confidence filtering",
            pose.track_id
        )));
    }
    let mut heights = reference_heights(&frames, track);
    if config.normalize_by_height {
        for (f, h) in frames.iter_mut().zip(heights.iter_mut()) {
            for k in f.keypoints.iter_mut() {
                k.x /= *h;
                k.y /= *h;
            }
            *h = 1.0;
        }
    }

    let n = frames.len();
    let mut series = vec![Vec::with_capacity(n); SeriesKind::ALL.len()];
    for f in &frames {
        let la = f.joint(Joint::LeftAnkle);
        let ra = f.joint(Joint::RightAnkle);
        let (ls, rs) = (f.joint(Joint::LeftShoulder), f.joint(Joint::RightShoulder));
        let (lh, rh) = (f.joint(Joint::LeftHip), f.joint(Joint::RightHip));
        let nose = f.joint(Joint::Nose);
        let values = [
            distance(la, ra),
            segment_angle(ra, la),
            ra.x,
            ra.y,
            la.x,
            la.y,
            interior_angle(lh, f.joint(Joint::LeftKnee), la),
            interior_angle(rh, f.joint(Joint::RightKnee), ra),
            ((ls.x + rs.x) / 2.0 - (lh.x + rh.x) / 2.0).abs(),
            line_angle(ls, rs),
            nose.x,
            nose.y,
        ];
        for (s, v) in series.iter_mut().zip(values) {
            s.push(v);
        }
    }

    let mut stance = Vec::with_capacity(n);
    for i in 1..n {
        let (prev, cur) = (&frames[i - 1], &frames[i]);
        let eps = config.stance_threshold_fraction * heights[i];
        let still = |j: Joint| distance(prev.joint(j), cur.joint(j)) < eps;
        stance.push(if still(Joint::LeftAnkle) && still(Joint::RightAnkle) {
            1.0
        } else {
            0.0
        });
    }
    // the first frame has no predecessor; it takes the first interval's flag
    stance.insert(0, stance[0]);
    series[SeriesKind::StanceFlag as usize] = stance;

    Ok(SeriesBundle {
        frame_indices: frames.iter().map(|f| f.frame_index).collect(),
        series,
    })
}

/// Percentage of frames flagged stationary.
pub fn stance_percentage(flags: &[f64]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    100.0 * flags.iter().filter(|&&f| f > 0.5).count() as f64 / flags.len() as f64
}
