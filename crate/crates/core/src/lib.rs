//! Automated gait assessment for ataxia from walking videos.
//!
//! The pipeline starts from precomputed person detections and pose
//! landmarks: SORT tracking, participant isolation by bounding-box height
//! change, 79 gait features, random-forest risk and severity models, feature
//! selection, TreeSHAP explanations and cross-validated / leave-one-site-out
//! evaluation. A synthetic generator stands in for clinical data.

pub mod clip;
pub mod config;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod forest;
pub mod formats;
pub mod isolation;
pub mod manifest;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod table;
pub mod tracker;
pub mod types;

pub use clip::{clip_first_seconds, ClippedSample, DEFAULT_CLIP_SECONDS};
pub use error::{Error, Result};
pub use manifest::{load_manifest, DatasetManifest, ManifestRecord};
pub use rng::SeededRng;
pub use types::{
    BoundingBox, Detection, GaitSample, Joint, Keypoint, PoseFrame, PoseSequence, Track,
    NUM_KEYPOINTS,
};
