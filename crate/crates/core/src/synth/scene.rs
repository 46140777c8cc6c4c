//! Multi-agent detection scenes: a participant walking away from the
//! camera, a doctor standing nearby and a passerby crossing near the
//! horizon for a few frames, plus optional detector clutter.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::synth::walker::FOOT_RATIO;
use crate::types::{BoundingBox, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Participant,
    Doctor,
    Passerby,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentMotion {
    /// Walks away from the camera: box height falls by `shrink_rate` per frame.
    Participant {
        center_x: f64,
        start_height: f64,
        shrink_rate: f64,
    },
    /// Stands still; every box edge jitters with standard deviation `jitter`.
    Doctor { center_x: f64, height: f64, jitter: f64 },
    /// Crosses horizontally at constant height near the horizon.
    Passerby { start_x: f64, velocity: f64, height: f64 },
}

impl AgentMotion {
    pub fn role(&self) -> Role {
        match self {
            AgentMotion::Participant { .. } => Role::Participant,
            AgentMotion::Doctor { .. } => Role::Doctor,
            AgentMotion::Passerby { .. } => Role::Passerby,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub motion: AgentMotion,
    /// Visible for frames `start_frame..end_frame`.
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub frames: usize,
    pub fps: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub horizon_y: f64,
    pub agents: Vec<AgentSpec>,
    /// Adds a low-confidence person box and a non-person box every frame.
    pub clutter: bool,
}

impl SceneSpec {
    fn base(frames: usize, agents: Vec<AgentSpec>) -> SceneSpec {
        SceneSpec {
            frames,
            fps: 30.0,
            image_width: 1280.0,
            image_height: 720.0,
            horizon_y: 200.0,
            agents,
            clutter: false,
        }
    }

    pub fn participant_only(frames: usize) -> SceneSpec {
        SceneSpec::base(
            frames,
            vec![AgentSpec {
                motion: AgentMotion::Participant {
                    center_x: 640.0,
                    start_height: 400.0,
                    shrink_rate: 0.8,
                },
                start_frame: 0,
                end_frame: frames,
            }],
        )
    }

    /// Participant, doctor and a passerby visible for at most 10 frames,
    /// with geometry drawn from `rng`.
    pub fn random_three_agent(frames: usize, rng: &mut impl Rng) -> SceneSpec {
        let pass_len = rng.random_range(3..=10usize).min(frames);
        let pass_start = rng.random_range(0..=frames - pass_len);
        let speed = rng.random_range(5.0..12.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut spec = SceneSpec::base(
            frames,
            vec![
                AgentSpec {
                    motion: AgentMotion::Participant {
                        center_x: rng.random_range(560.0..720.0),
                        start_height: rng.random_range(360.0..420.0),
                        shrink_rate: rng.random_range(0.5..1.1),
                    },
                    start_frame: 0,
                    end_frame: frames,
                },
                AgentSpec {
                    motion: AgentMotion::Doctor {
                        center_x: rng.random_range(180.0..320.0),
                        height: rng.random_range(330.0..400.0),
                        jitter: 1.5,
                    },
                    start_frame: 0,
                    end_frame: frames,
                },
                AgentSpec {
                    motion: AgentMotion::Passerby {
                        start_x: rng.random_range(1000.0..1150.0),
                        velocity: speed,
                        height: rng.random_range(80.0..120.0),
                    },
                    start_frame: pass_start,
                    end_frame: pass_start + pass_len,
                },
            ],
        );
        spec.clutter = true;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Validation("scene needs at least 2 frames".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!("scene fps must be positive, got {}", self.fps)));
        }
        let participants = self.agents.iter().filter(|a| a.motion.role() == Role::Participant).count();
        if participants != 1 {
            return Err(Error::Validation(format!(
                "scene needs exactly one participant, found {participants}"
            )));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.start_frame >= a.end_frame {
                return Err(Error::Validation(format!("agent {i}: empty visibility window")));
            }
            if a.end_frame > self.frames {
                return Err(Error::Validation(format!(
                    "agent {i}: window ends at frame {} beyond the {}-frame scene",
                    a.end_frame, self.frames
                )));
            }
            if let AgentMotion::Participant {
                start_height,
                shrink_rate,
                ..
            } = a.motion
            {
                let end = start_height - shrink_rate * (a.end_frame - a.start_frame - 1) as f64;
                if end <= 0.0 {
                    return Err(Error::Validation(format!(
                        "agent {i}: participant height reaches {end:.1}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn standing_box(&self, center_x: f64, height: f64, width_ratio: f64) -> (f64, f64, f64, f64) {
        let bottom = self.horizon_y + FOOT_RATIO * height;
        let half = width_ratio * height / 2.0;
        (center_x - half, bottom - height, center_x + half, bottom)
    }

    fn clamp_box(&self, (x1, y1, x2, y2): (f64, f64, f64, f64)) -> Result<BoundingBox> {
        BoundingBox::new(
            x1.clamp(0.0, self.image_width),
            y1.clamp(0.0, self.image_height),
            x2.clamp(0.0, self.image_width),
            y2.clamp(0.0, self.image_height),
        )
        .map_err(|e| Error::Validation(format!("agent box leaves the image: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub detections: Vec<Detection>,
    /// Agent index for each detection; `None` for clutter.
    pub identities: Vec<Option<usize>>,
}

impl Scene {
    pub fn participant_index(spec: &SceneSpec) -> usize {
        spec.agents
            .iter()
            .position(|a| a.motion.role() == Role::Participant)
            .expect("validated scene has a participant")
    }
}

pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = SeededRng::new(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut detections = Vec::new();
    let mut identities = Vec::new();
    for frame in 0..spec.frames {
        for (i, a) in spec.agents.iter().enumerate() {
            if !(a.start_frame..a.end_frame).contains(&frame) {
                continue;
            }
            let t = (frame - a.start_frame) as f64;
            let raw = match a.motion {
                AgentMotion::Participant {
                    center_x,
                    start_height,
                    shrink_rate,
                } => {
                    let h = start_height - shrink_rate * t;
                    let (x1, y1, x2, y2) = spec.standing_box(center_x, h, 0.35);
                    let dx = 0.5 * unit.sample(&mut rng);
                    (x1 + dx, y1, x2 + dx, y2)
                }
                AgentMotion::Doctor {
                    center_x,
                    height,
                    jitter,
                } => {
                    let (x1, y1, x2, y2) = spec.standing_box(center_x, height, 0.4);
                    let mut j = || jitter * unit.sample(&mut rng);
                    (x1 + j(), y1 + j(), x2 + j(), y2 + j())
                }
                AgentMotion::Passerby {
                    start_x,
                    velocity,
                    height,
                } => spec.standing_box(start_x + velocity * t, height, 0.4),
            };
            let conf = rng.random_range(0.85..0.99);
            detections.push(Detection::person(frame, spec.clamp_box(raw)?, conf)?);
            identities.push(Some(i));
        }
        if spec.clutter {
            let x = rng.random_range(0.0..spec.image_width - 60.0);
            let y = rng.random_range(0.0..spec.image_height - 120.0);
            let weak = BoundingBox::new(x, y, x + 50.0, y + 110.0)?;
            detections.push(Detection::person(frame, weak, rng.random_range(0.2..0.6))?);
            identities.push(None);
            let chair = BoundingBox::new(420.0, 520.0, 500.0, 640.0)?;
            detections.push(Detection::new(frame, chair, 0.95, "chair")?);
            identities.push(None);
        }
    }
    Ok(Scene {
        detections,
        identities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isolation::{select_participant, IsolationConfig};
    use crate::tracker::{track, TrackerConfig};

    #[test]
    fn participant_only_gives_one_track() {
        let scene = generate_scene(&SceneSpec::participant_only(120), 1).unwrap();
        let tracks = track(&scene.detections, &TrackerConfig::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 120);
    }

    #[test]
    fn three_agents_recovered() {
        let mut rng = SeededRng::new(5);
        let spec = SceneSpec::random_three_agent(180, &mut rng);
        let scene = generate_scene(&spec, 2).unwrap();
        let tracks = track(&scene.detections, &TrackerConfig::default()).unwrap();
        let pass_len = spec.agents[2].end_frame - spec.agents[2].start_frame;
        assert_eq!(tracks.len(), 3, "passerby visible {pass_len} frames");
        let sel = select_participant(&tracks, &IsolationConfig::default()).unwrap();
        let t = tracks.iter().find(|t| t.track_id == sel.selected_track).unwrap();
        assert_eq!(t.len(), 180);
    }

    #[test]
    fn window_beyond_scene_rejected() {
        let mut spec = SceneSpec::participant_only(50);
        spec.agents[0].end_frame = 60;
        assert!(generate_scene(&spec, 0).is_err());
        let mut two = SceneSpec::participant_only(50);
        two.agents.push(two.agents[0]);
        assert!(generate_scene(&two, 0).is_err());
    }

    #[test]
    fn boxes_inside_image() {
        let mut rng = SeededRng::new(9);
        let spec = SceneSpec::random_three_agent(180, &mut rng);
        let scene = generate_scene(&spec, 3).unwrap();
        for d in &scene.detections {
            assert!(d.bbox.x1 >= 0.0 && d.bbox.x2 <= 1280.0 && d.bbox.y1 >= 0.0 && d.bbox.y2 <= 720.0);
        }
        assert_eq!(scene.detections.len(), scene.identities.len());
    }
}
