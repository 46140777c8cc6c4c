//! Parametric 2D walker seen from behind while walking away from the camera.
//!
//! The skeleton is a template in pixels at the starting height. Each frame
//! it is scaled by `H(t) / H0` where `H(t) = H0 - shrink_rate * t` and `t`
//! counts only walking frames; during a stance pause the whole pose clock
//! stops. Feet trace opposite-phase circles either side of the midline,
//! the upper body sways laterally over the hips.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::types::{BoundingBox, GaitSample, Joint, Keypoint, PoseFrame, PoseSequence, Track, NUM_KEYPOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkerParams {
    /// Steps per second (two steps per stride).
    pub step_frequency: f64,
    /// Lateral ankle separation at the starting height, pixels.
    pub step_width: f64,
    /// Lateral upper-body oscillation amplitude at the starting height, pixels.
    pub sway_amplitude: f64,
    /// Box-height loss per walking frame, pixels.
    pub shrink_rate: f64,
    /// Fraction of frames spent standing still.
    pub stance_pause_fraction: f64,
    /// Gaussian keypoint noise, pixels.
    pub noise_sigma: f64,
    pub severity: f64,
}

/// Endpoint parameter sets; intermediate severities interpolate linearly.
pub const SEVERITY_0: WalkerParams = WalkerParams {
    step_frequency: 1.9,
    step_width: 40.0,
    sway_amplitude: 4.0,
    shrink_rate: 1.0,
    stance_pause_fraction: 0.0,
    noise_sigma: 1.0,
    severity: 0.0,
};

pub const SEVERITY_3: WalkerParams = WalkerParams {
    step_frequency: 1.5,
    step_width: 110.0,
    sway_amplitude: 30.0,
    shrink_rate: 0.45,
    stance_pause_fraction: 0.2,
    noise_sigma: 1.0,
    severity: 3.0,
};

pub const MAX_SEVERITY: f64 = 3.0;

impl WalkerParams {
    pub fn for_severity(severity: f64) -> Result<WalkerParams> {
        if !(0.0..=MAX_SEVERITY).contains(&severity) {
            return Err(Error::Validation(format!(
                "severity {severity} outside [0, {MAX_SEVERITY}]"
            )));
        }
        let t = severity / MAX_SEVERITY;
        let lerp = |a: f64, b: f64| a + (b - a) * t;
        let (a, b) = (SEVERITY_0, SEVERITY_3);
        Ok(WalkerParams {
            step_frequency: lerp(a.step_frequency, b.step_frequency),
            step_width: lerp(a.step_width, b.step_width),
            sway_amplitude: lerp(a.sway_amplitude, b.sway_amplitude),
            shrink_rate: lerp(a.shrink_rate, b.shrink_rate),
            stance_pause_fraction: lerp(a.stance_pause_fraction, b.stance_pause_fraction),
            noise_sigma: lerp(a.noise_sigma, b.noise_sigma),
            severity,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("step_frequency", self.step_frequency),
            ("step_width", self.step_width),
            ("sway_amplitude", self.sway_amplitude),
            ("shrink_rate", self.shrink_rate),
            ("stance_pause_fraction", self.stance_pause_fraction),
            ("noise_sigma", self.noise_sigma),
            ("severity", self.severity),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!("walker {name} must be finite and non-negative, got {v}")));
            }
        }
        if self.stance_pause_fraction >= 1.0 {
            return Err(Error::Validation("walker stance_pause_fraction must be below 1".into()));
        }
        if self.severity > MAX_SEVERITY {
            return Err(Error::Validation(format!("severity {} above {MAX_SEVERITY}", self.severity)));
        }
        Ok(())
    }
}

/// Where the walker appears in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerLayout {
    /// Box height in the first frame, pixels.
    pub start_height: f64,
    pub center_x: f64,
    /// Feet sit at `horizon_y + FOOT_RATIO * H(t)`.
    pub horizon_y: f64,
    pub image_width: f64,
    pub image_height: f64,
    /// Probability that a keypoint is reported with low confidence.
    pub dropout: f64,
}

impl Default for WalkerLayout {
    fn default() -> Self {
        WalkerLayout {
            start_height: 400.0,
            center_x: 640.0,
            horizon_y: 200.0,
            image_width: 1280.0,
            image_height: 720.0,
            dropout: 0.01,
        }
    }
}

pub const FOOT_RATIO: f64 = 1.1;

/// Neutral pose in units of the starting height: (lateral, height above the feet).
const TEMPLATE: [(f64, f64); NUM_KEYPOINTS] = [
    (0.0, 0.94),    // nose
    (-0.025, 0.955),
    (0.025, 0.955),
    (-0.055, 0.945),
    (0.055, 0.945),
    (-0.12, 0.82), // shoulders
    (0.12, 0.82),
    (-0.15, 0.64), // elbows
    (0.15, 0.64),
    (-0.16, 0.48), // wrists
    (0.16, 0.48),
    (-0.08, 0.52), // hips
    (0.08, 0.52),
    (-0.08, 0.28), // knees
    (0.08, 0.28),
    (0.0, 0.09), // ankles; lateral offset comes from the step width
    (0.0, 0.09),
];

/// Radius of the circular ankle path, units of start height. Seen from
/// behind, forward motion in depth shows up as vertical image motion; a
/// circle keeps the foot speed above the stance threshold while walking.
const FOOT_ORBIT: f64 = 0.08;
const SHOULDER_DIP: f64 = 0.3;
const MARGIN: f64 = 0.05;

pub(crate) struct WalkerFrame {
    pub keypoints: [(f64, f64); NUM_KEYPOINTS],
    pub height: f64,
}

/// Noise-free pose and box height for every frame, plus the walking clock.
pub(crate) fn kinematics(
    params: &WalkerParams,
    layout: &WalkerLayout,
    frames: usize,
    fps: f64,
    pause: Option<(usize, usize)>,
    phase0: f64,
) -> Vec<WalkerFrame> {
    let h0 = layout.start_height;
    let mut out = Vec::with_capacity(frames);
    let mut t_eff = 0usize;
    for t in 0..frames {
        if t > 0 && !pause.is_some_and(|(s, e)| (s..e).contains(&t)) {
            t_eff += 1;
        }
        let height = h0 - params.shrink_rate * t_eff as f64;
        let s = height / h0;
        let base_y = layout.horizon_y + FOOT_RATIO * height;
        // one stride (two steps) per 2 / step_frequency seconds
        let phi = phase0 + TAU * params.step_frequency / 2.0 * t_eff as f64 / fps;
        let sway = params.sway_amplitude * phi.sin();
        let half_width = params.step_width / 2.0;
        let mut kp = [(0.0, 0.0); NUM_KEYPOINTS];
        for (j, &(tx, ty)) in TEMPLATE.iter().enumerate() {
            let (mut x, mut y) = (tx * h0, ty * h0);
            match Joint::ALL[j] {
                Joint::LeftAnkle => {
                    x += -half_width + FOOT_ORBIT * h0 * phi.cos();
                    y += FOOT_ORBIT * h0 * phi.sin();
                }
                Joint::RightAnkle => {
                    x += half_width + FOOT_ORBIT * h0 * phi.cos();
                    y -= FOOT_ORBIT * h0 * phi.sin();
                }
                Joint::LeftKnee => {
                    x += -0.6 * half_width + 0.5 * FOOT_ORBIT * h0 * phi.cos();
                    y += 0.5 * FOOT_ORBIT * h0 * phi.sin();
                }
                Joint::RightKnee => {
                    x += 0.6 * half_width + 0.5 * FOOT_ORBIT * h0 * phi.cos();
                    y -= 0.5 * FOOT_ORBIT * h0 * phi.sin();
                }
                Joint::LeftShoulder | Joint::LeftElbow | Joint::LeftWrist => {
                    x += sway;
                    y += SHOULDER_DIP * sway;
                }
                Joint::RightShoulder | Joint::RightElbow | Joint::RightWrist => {
                    x += sway;
                    y -= SHOULDER_DIP * sway;
                }
                Joint::Nose | Joint::LeftEye | Joint::RightEye | Joint::LeftEar | Joint::RightEar => {
                    x += sway;
                    y += 0.005 * h0 * (2.0 * phi).cos();
                }
                Joint::LeftHip | Joint::RightHip => {}
            }
            kp[j] = (layout.center_x + s * x, base_y - s * y);
        }
        out.push(WalkerFrame { keypoints: kp, height });
    }
    out
}

/// Box spanning the noiseless keypoints laterally and exactly `height` vertically.
pub(crate) fn body_box(frame: &WalkerFrame, layout: &WalkerLayout) -> Result<BoundingBox> {
    let (lo, hi) = frame
        .keypoints
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| (lo.min(k.0), hi.max(k.0)));
    let pad = MARGIN * frame.height;
    let bottom = layout.horizon_y + FOOT_RATIO * frame.height;
    BoundingBox::new(lo - pad, bottom - frame.height, hi + pad, bottom)
}

pub(crate) fn pause_window(params: &WalkerParams, frames: usize, rng: &mut SeededRng) -> Option<(usize, usize)> {
    let len = (params.stance_pause_fraction * frames as f64).round() as usize;
    if len == 0 || frames < 4 {
        return None;
    }
    let lo = (0.15 * frames as f64) as usize;
    let hi = ((0.85 * frames as f64) as usize).saturating_sub(len).max(lo);
    let start = rng.random_range(lo..=hi);
    Some((start, (start + len).min(frames)))
}

/// Generates one walking sample with default layout.
pub fn generate_walker(params: &WalkerParams, frames: usize, fps: f64, seed: u64) -> Result<GaitSample> {
    generate_walker_with(params, &WalkerLayout::default(), frames, fps, seed)
}

pub fn generate_walker_with(
    params: &WalkerParams,
    layout: &WalkerLayout,
    frames: usize,
    fps: f64,
    seed: u64,
) -> Result<GaitSample> {
    params.validate()?;
    if frames < 2 {
        return Err(Error::Validation(format!("walker needs at least 2 frames, got {frames}")));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::Validation(format!("fps must be positive, got {fps}")));
    }
    let end_height = layout.start_height - params.shrink_rate * (frames - 1) as f64;
    if end_height <= 0.1 * layout.start_height {
        return Err(Error::Validation(format!(
            "shrink rate {} leaves height {end_height:.1} after {frames} frames",
            params.shrink_rate
        )));
    }
    let mut rng = SeededRng::new(seed);
    let pause = pause_window(params, frames, &mut rng);
    let phase0 = rng.random_range(0.0..TAU);
    let clean = kinematics(params, layout, frames, fps, pause, phase0);
    let noise = Normal::new(0.0, params.noise_sigma).map_err(|e| Error::Validation(e.to_string()))?;

    let mut pose_frames = Vec::with_capacity(frames);
    let mut boxes = Vec::with_capacity(frames);
    for (t, f) in clean.iter().enumerate() {
        let mut kps = [Keypoint::new(0.0, 0.0, 1.0); NUM_KEYPOINTS];
        for (k, &(x, y)) in kps.iter_mut().zip(&f.keypoints) {
            let (nx, ny) = if params.noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let conf = if rng.random::<f64>() < layout.dropout {
                rng.random_range(0.05..0.25)
            } else {
                rng.random_range(0.7..0.99)
            };
            *k = Keypoint::new(x + nx, y + ny, conf);
        }
        pose_frames.push(PoseFrame::new(t, kps)?);
        boxes.push((t, body_box(f, layout)?));
    }
    let score = params.severity.round() as u8;
    Ok(GaitSample {
        video_id: format!("walker_{seed}"),
        site_id: "S1".into(),
        participant_id: format!("walker_{seed}"),
        sara_gait_score: score,
        fps,
        pose: PoseSequence::new(0, pose_frames, fps)?,
        raw_track: Track::from_boxes(0, boxes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_series, height_reduction, FeatureConfig, SeriesKind};

    fn quiet(severity: f64) -> WalkerParams {
        WalkerParams {
            noise_sigma: 0.0,
            sway_amplitude: 0.0,
            stance_pause_fraction: 0.0,
            ..WalkerParams::for_severity(severity).unwrap()
        }
    }

    fn no_dropout() -> WalkerLayout {
        WalkerLayout {
            dropout: 0.0,
            ..WalkerLayout::default()
        }
    }

    #[test]
    fn severity_map_monotone() {
        let mut prev = WalkerParams::for_severity(0.0).unwrap();
        for i in 1..=30 {
            let p = WalkerParams::for_severity(i as f64 / 10.0).unwrap();
            assert!(p.step_width > prev.step_width);
            assert!(p.shrink_rate < prev.shrink_rate);
            assert!(p.sway_amplitude > prev.sway_amplitude);
            assert!(p.stance_pause_fraction > prev.stance_pause_fraction);
            prev = p;
        }
        assert!(WalkerParams::for_severity(3.5).is_err());
    }

    #[test]
    fn exact_height_reduction() {
        let p = quiet(1.2);
        let s = generate_walker_with(&p, &no_dropout(), 120, 30.0, 3).unwrap();
        let hr = height_reduction(&s.raw_track).unwrap();
        assert!((hr - p.shrink_rate * 119.0).abs() < 1e-9, "{hr}");
        assert_eq!(s.sara_gait_score, 1);
    }

    #[test]
    fn no_sway_no_imbalance() {
        let s = generate_walker_with(&quiet(2.0), &no_dropout(), 90, 30.0, 8).unwrap();
        let b = extract_series(&s.pose, Some(&s.raw_track), &FeatureConfig::default()).unwrap();
        assert!(b.get(SeriesKind::Imbalance).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn pause_freezes_clock() {
        let p = WalkerParams {
            noise_sigma: 0.0,
            stance_pause_fraction: 0.2,
            ..WalkerParams::for_severity(1.0).unwrap()
        };
        let s = generate_walker_with(&p, &no_dropout(), 100, 30.0, 1).unwrap();
        let hr = height_reduction(&s.raw_track).unwrap();
        assert!((hr - p.shrink_rate * 79.0).abs() < 1e-9, "{hr}");
        let b = extract_series(&s.pose, Some(&s.raw_track), &FeatureConfig::default()).unwrap();
        let still = b.get(SeriesKind::StanceFlag).iter().filter(|&&f| f > 0.5).count();
        assert!((19..=21).contains(&still), "{still}");
    }

    #[test]
    fn deterministic_and_in_image() {
        let p = WalkerParams::for_severity(2.7).unwrap();
        let a = generate_walker(&p, 210, 30.0, 77).unwrap();
        assert_eq!(a, generate_walker(&p, 210, 30.0, 77).unwrap());
        for b in a.raw_track.observations.values() {
            assert!(b.x1 >= 0.0 && b.x2 <= 1280.0 && b.y1 >= 0.0 && b.y2 <= 720.0);
        }
        assert_eq!(a.pose.len(), 210);
    }

    #[test]
    fn rejects_bad_input() {
        let p = WalkerParams::for_severity(0.0).unwrap();
        assert!(generate_walker(&p, 1, 30.0, 0).is_err());
        assert!(generate_walker(&p, 400, 30.0, 0).is_err());
        let neg = WalkerParams { step_width: -1.0, ..p };
        assert!(generate_walker(&neg, 10, 30.0, 0).is_err());
    }
}
