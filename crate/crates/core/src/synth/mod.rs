//! Deterministic synthetic data: detection scenes for tracking and
//! isolation, parametric walkers whose gait parameters follow a severity
//! value, and complete labelled datasets on disk.

pub mod dataset;
pub mod scene;
pub mod walker;

pub use dataset::{generate_dataset, generate_video, generate_videos, DatasetConfig, SyntheticVideo};
pub use scene::{generate_scene, AgentMotion, AgentSpec, Role, Scene, SceneSpec};
pub use walker::{generate_walker, generate_walker_with, WalkerLayout, WalkerParams, SEVERITY_0, SEVERITY_3};
