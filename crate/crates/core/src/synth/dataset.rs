//! Labelled synthetic datasets in the on-disk manifest format: one video per
//! sample with a walking participant, a resting doctor and a passerby.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{detections_to_jsonl, landmarks_to_jsonl, LandmarkTracks};
use crate::manifest::{DatasetManifest, ManifestRecord};
use crate::rng::{derive_seed, SeededRng};
use crate::synth::walker::{generate_walker_with, WalkerLayout, WalkerParams, FOOT_RATIO, MAX_SEVERITY};
use crate::types::{BoundingBox, Detection, GaitSample};

/// Landmark track ids written for the participant and the doctor.
pub const PARTICIPANT_POSE_ID: u64 = 1;
pub const DOCTOR_POSE_ID: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_per_class: usize,
    pub sites: usize,
    pub frames: usize,
    pub fps: f64,
    /// Half-width of the uniform severity spread around each class.
    pub severity_jitter: f64,
    /// Relative per-person spread of the gait parameters.
    pub individual_jitter: f64,
    /// Site geometry scale is drawn from `1 ± site_scale_range`.
    pub site_scale_range: f64,
    /// Site horizontal offset is drawn from `± site_offset_range` pixels.
    pub site_offset_range: f64,
    pub noise_sigma: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_per_class: 40,
            sites: 5,
            frames: 210,
            fps: 30.0,
            severity_jitter: 0.25,
            individual_jitter: 0.05,
            site_scale_range: 0.1,
            site_offset_range: 150.0,
            noise_sigma: 1.0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::Validation("n_per_class must be at least 1".into()));
        }
        if self.sites < 2 {
            return Err(Error::Validation("a dataset needs at least 2 sites".into()));
        }
        if self.frames < 2 {
            return Err(Error::Validation("frames must be at least 2".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!("fps must be positive, got {}", self.fps)));
        }
        if !(0.0..0.5).contains(&self.severity_jitter) {
            return Err(Error::Validation("severity_jitter must lie in [0, 0.5)".into()));
        }
        if !(0.0..0.3).contains(&self.individual_jitter) || !(0.0..0.3).contains(&self.site_scale_range) {
            return Err(Error::Validation("jitter and site scale ranges must lie in [0, 0.3)".into()));
        }
        if !(0.0..=200.0).contains(&self.site_offset_range) {
            return Err(Error::Validation("site_offset_range must lie in [0, 200]".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Validation("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteNuisance {
    pub scale: f64,
    pub offset_x: f64,
}

pub fn site_nuisance(config: &DatasetConfig, seed: u64, site: usize) -> SiteNuisance {
    let mut rng = SeededRng::new(derive_seed(seed, 1_000_000 + site as u64));
    let r = config.site_scale_range;
    let o = config.site_offset_range;
    SiteNuisance {
        scale: if r > 0.0 { rng.random_range(1.0 - r..=1.0 + r) } else { 1.0 },
        offset_x: if o > 0.0 { rng.random_range(-o..=o) } else { 0.0 },
    }
}

pub fn site_name(site: usize) -> String {
    format!("S{}", site + 1)
}

/// One generated video: the participant's sample plus the full scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub record: ManifestRecord,
    pub severity: f64,
    pub sample: GaitSample,
    pub detections: Vec<Detection>,
    pub landmarks: LandmarkTracks,
}

fn jittered(rng: &mut SeededRng, spread: f64) -> f64 {
    if spread == 0.0 {
        return 1.0;
    }
    let n: f64 = Normal::new(0.0, spread).expect("finite spread").sample(rng);
    (1.0 + n).max(0.5)
}

/// Generates sample `index` of the dataset (class `index / n_per_class`,
/// site `index % sites`).
pub fn generate_video(config: &DatasetConfig, seed: u64, index: usize) -> Result<SyntheticVideo> {
    let class = index / config.n_per_class;
    let site = index % config.sites;
    let nuisance = site_nuisance(config, seed, site);
    let mut rng = SeededRng::new(derive_seed(seed, index as u64 + 1));

    let sj = config.severity_jitter;
    let spread = if sj > 0.0 { rng.random_range(-sj..=sj) } else { 0.0 };
    let severity = (class as f64 + spread).clamp(0.0, MAX_SEVERITY);
    let base = WalkerParams::for_severity(severity)?;
    let ij = config.individual_jitter;
    let params = WalkerParams {
        step_frequency: base.step_frequency * jittered(&mut rng, ij),
        step_width: base.step_width * jittered(&mut rng, ij) * nuisance.scale,
        sway_amplitude: base.sway_amplitude * jittered(&mut rng, ij) * nuisance.scale,
        shrink_rate: base.shrink_rate * jittered(&mut rng, ij) * nuisance.scale,
        noise_sigma: config.noise_sigma,
        ..base
    };
    let layout = WalkerLayout {
        start_height: 400.0 * nuisance.scale * jittered(&mut rng, 0.03),
        center_x: 640.0 + nuisance.offset_x + rng.random_range(-20.0..=20.0),
        ..WalkerLayout::default()
    };
    let mut sample = generate_walker_with(&params, &layout, config.frames, config.fps, rng.random())?;

    let video_id = format!("vid_{index:04}");
    let record = ManifestRecord {
        video_id: video_id.clone(),
        site_id: site_name(site),
        participant_id: format!("P{index:04}"),
        sara_gait_score: sample.sara_gait_score,
        fps: config.fps,
        detections_path: PathBuf::from(format!("detections/{video_id}.jsonl")),
        landmarks_path: PathBuf::from(format!("landmarks/{video_id}.jsonl")),
    };
    sample.video_id = record.video_id.clone();
    sample.site_id = record.site_id.clone();
    sample.participant_id = record.participant_id.clone();

    // the doctor rests beside the walking lane
    let doctor_params = WalkerParams {
        step_frequency: 0.0,
        step_width: 30.0,
        sway_amplitude: 0.0,
        shrink_rate: 0.0,
        stance_pause_fraction: 0.0,
        noise_sigma: config.noise_sigma,
        severity: 0.0,
    };
    let doctor_layout = WalkerLayout {
        start_height: rng.random_range(340.0..390.0) * nuisance.scale,
        center_x: rng.random_range(200.0..280.0),
        ..WalkerLayout::default()
    };
    let doctor = generate_walker_with(&doctor_params, &doctor_layout, config.frames, config.fps, rng.random())?;

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut detections = Vec::new();
    let pass_len = rng.random_range(3..=10usize).min(config.frames);
    let pass_start = rng.random_range(0..=config.frames - pass_len);
    let pass_height = rng.random_range(80.0..120.0);
    let pass_x = rng.random_range(1000.0..1150.0);
    let pass_v = rng.random_range(5.0..12.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    for frame in 0..config.frames {
        let b = sample.raw_track.observations[&frame];
        detections.push(Detection::person(frame, b, rng.random_range(0.85..0.99))?);
        let d = doctor.raw_track.observations[&frame];
        let mut j = || 1.5 * unit.sample(&mut rng);
        let jittered_box = BoundingBox::new(d.x1 + j(), d.y1 + j(), d.x2 + j(), d.y2 + j())?;
        detections.push(Detection::person(frame, jittered_box, rng.random_range(0.85..0.99))?);
        if (pass_start..pass_start + pass_len).contains(&frame) {
            let cx = pass_x + pass_v * (frame - pass_start) as f64;
            let bottom = layout.horizon_y + FOOT_RATIO * pass_height;
            let half = 0.2 * pass_height;
            let pb = BoundingBox::new(cx - half, bottom - pass_height, cx + half, bottom)?;
            detections.push(Detection::person(frame, pb, rng.random_range(0.85..0.99))?);
        }
        if rng.random::<f64>() < 0.3 {
            let x = rng.random_range(0.0..1200.0);
            let y = rng.random_range(0.0..600.0);
            let weak = BoundingBox::new(x, y, x + 50.0, y + 110.0)?;
            detections.push(Detection::person(frame, weak, rng.random_range(0.2..0.6))?);
        }
    }

    let mut landmarks = LandmarkTracks::new();
    landmarks.insert(PARTICIPANT_POSE_ID, sample.pose.frames.clone());
    landmarks.insert(DOCTOR_POSE_ID, doctor.pose.frames.clone());

    Ok(SyntheticVideo {
        record,
        severity,
        sample,
        detections,
        landmarks,
    })
}

/// All videos of a dataset, in index order (class-major).
pub fn generate_videos(config: &DatasetConfig, seed: u64) -> Result<Vec<SyntheticVideo>> {
    config.validate()?;
    let n = config.n_per_class * 4;
    (0..n)
        .into_par_iter()
        .map(|i| generate_video(config, seed, i))
        .collect()
}

/// Writes `manifest.jsonl`, `detections/*.jsonl` and `landmarks/*.jsonl`
/// under `out_dir` and returns the manifest.
pub fn generate_dataset(config: &DatasetConfig, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    let videos = generate_videos(config, seed)?;
    fs::create_dir_all(out_dir.join("detections"))?;
    fs::create_dir_all(out_dir.join("landmarks"))?;
    videos.par_iter().try_for_each(|v| -> Result<()> {
        fs::write(out_dir.join(&v.record.detections_path), detections_to_jsonl(&v.detections)?)?;
        fs::write(out_dir.join(&v.record.landmarks_path), landmarks_to_jsonl(&v.landmarks)?)?;
        Ok(())
    })?;
    let manifest = DatasetManifest::new(videos.into_iter().map(|v| v.record).collect(), out_dir)?;
    manifest.write(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
