//! Participant isolation by bounding-box height change.
//!
//! The camera sits behind a participant walking away from it, so the
//! participant's box shrinks steadily while doctors stay roughly constant
//! and passersby are seen only briefly. Each track is scored by the summed
//! frame-to-frame height loss and the highest score wins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Track;

#[derive(Debug, Clone, PartialEq)]
pub struct HeightSeries {
    pub track_id: u64,
    pub heights: Vec<(usize, f64)>,
}

impl HeightSeries {
    pub fn new(track_id: u64, heights: Vec<(usize, f64)>) -> Result<Self> {
        if let Some((f, h)) = heights.iter().find(|(_, h)| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::Validation(format!(
                "track {track_id}: height {h} at frame {f} is not positive"
            )));
        }
        if heights.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Validation(format!(
                "track {track_id}: height frames not strictly increasing"
            )));
        }
        Ok(HeightSeries { track_id, heights })
    }

    /// Heights of the observed frames; occlusion gaps are simply skipped.
    pub fn from_track(track: &Track) -> Result<Self> {
        HeightSeries::new(track.track_id, track.heights())
    }

    /// Centered moving average over `window` observations (odd windows
    /// recommended; 1 leaves the series unchanged).
    pub fn smoothed(&self, window: usize) -> HeightSeries {
        if window <= 1 {
            return self.clone();
        }
        let n = self.heights.len();
        let half = window / 2;
        let heights = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(n);
                let mean =
                    self.heights[lo..hi].iter().map(|(_, h)| h).sum::<f64>() / (hi - lo) as f64;
                (self.heights[i].0, mean)
            })
            .collect();
        HeightSeries {
            track_id: self.track_id,
            heights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsolationConfig {
    /// Moving-average window applied to heights before scoring; 1 = raw.
    pub smoothing_window: usize,
}

impl IsolationConfig {
    pub fn raw() -> Self {
        IsolationConfig { smoothing_window: 1 }
    }
}

// Error-free a - b = s + err.
fn two_diff(a: f64, b: f64) -> (f64, f64) {
    let s = a - b;
    let bb = s - a;
    let err = (a - (s - bb)) - (b + bb);
    (s, err)
}

/// Sum over consecutive observations of `H_i - H_{i+1}`.
///
/// The differences and their rounding residuals are accumulated with
/// compensated summation, so the result equals `H_first - H_last` to within
/// a final rounding.
pub fn height_change_score(series: &HeightSeries) -> Result<f64> {
    if series.heights.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "track {}: insufficient observations for a height-change score",
            series.track_id
        )));
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut add = |x: f64| {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    };
    for w in series.heights.windows(2) {
        let (d, err) = two_diff(w[0].1, w[1].1);
        add(d);
        add(err);
    }
    Ok(sum + comp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationReport {
    pub selected_track: u64,
    /// Score of every eligible track, for manual review.
    pub scores: BTreeMap<u64, f64>,
}

/// Picks the track with the largest height-change score; ties go to the
/// lowest id. Tracks with fewer than two observations are ignored.
pub fn select_participant(tracks: &[Track], config: &IsolationConfig) -> Result<IsolationReport> {
    let mut scores = BTreeMap::new();
    for t in tracks.iter().filter(|t| t.len() >= 2) {
        let series = HeightSeries::from_track(t)?.smoothed(config.smoothing_window);
        scores.insert(t.track_id, height_change_score(&series)?);
    }
    let mut best: Option<(u64, f64)> = None;
    for (&id, &score) in &scores {
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((id, score));
        }
    }
    let (selected_track, _) =
        best.ok_or_else(|| Error::InsufficientData("no track with at least two observations".into()))?;
    Ok(IsolationReport {
        selected_track,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BoundingBox;

    fn series(h: &[f64]) -> HeightSeries {
        HeightSeries::new(0, h.iter().enumerate().map(|(i, &v)| (i, v)).collect()).unwrap()
    }

    fn track_with_heights(id: u64, start: usize, h: &[f64]) -> Track {
        Track::from_boxes(
            id,
            h.iter()
                .enumerate()
                .map(|(i, &v)| (start + i, BoundingBox::new(0.0, 500.0 - v, 40.0, 500.0).unwrap())),
        )
    }

    #[test]
    fn constant_is_zero() {
        assert_eq!(height_change_score(&series(&[100.0, 100.0, 100.0])).unwrap(), 0.0);
    }

    #[test]
    fn telescopes() {
        assert_eq!(height_change_score(&series(&[100.0, 90.0, 80.0, 70.0])).unwrap(), 30.0);
    }

    #[test]
    fn doctor_versus_participant() {
        let doctor = height_change_score(&series(&[100.0, 98.0, 101.0, 99.0, 100.0])).unwrap();
        assert_eq!(doctor, 0.0);
        let p: Vec<f64> = (0..7).map(|i| 120.0 - 10.0 * i as f64).collect();
        assert_eq!(height_change_score(&series(&p)).unwrap(), 60.0);
        let tracks = vec![
            track_with_heights(0, 0, &[100.0, 98.0, 101.0, 99.0, 100.0]),
            track_with_heights(1, 0, &p),
        ];
        let r = select_participant(&tracks, &IsolationConfig::raw()).unwrap();
        assert_eq!(r.selected_track, 1);
        assert_eq!(r.scores.len(), 2);
    }

    #[test]
    fn needs_two_observations() {
        assert!(height_change_score(&series(&[100.0])).is_err());
        let tracks = vec![track_with_heights(3, 0, &[50.0])];
        assert!(select_participant(&tracks, &IsolationConfig::raw()).is_err());
        assert!(select_participant(&[], &IsolationConfig::raw()).is_err());
    }

    #[test]
    fn single_track_wins() {
        let tracks = vec![track_with_heights(9, 4, &[10.0, 12.0])];
        assert_eq!(select_participant(&tracks, &IsolationConfig::raw()).unwrap().selected_track, 9);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let tracks = vec![
            track_with_heights(5, 0, &[100.0, 80.0]),
            track_with_heights(2, 0, &[60.0, 40.0]),
        ];
        assert_eq!(select_participant(&tracks, &IsolationConfig::raw()).unwrap().selected_track, 2);
    }

    #[test]
    fn gaps_use_consecutive_observations() {
        let s = HeightSeries::new(0, vec![(0, 100.0), (5, 90.0), (9, 85.0)]).unwrap();
        assert_eq!(height_change_score(&s).unwrap(), 15.0);
    }

    #[test]
    fn rejects_non_positive_heights() {
        assert!(HeightSeries::new(0, vec![(0, 1.0), (1, 0.0)]).is_err());
    }

    #[test]
    fn smoothing_preserves_length() {
        let s = series(&[10.0, 20.0, 30.0, 40.0]).smoothed(3);
        assert_eq!(s.heights.len(), 4);
        assert_eq!(s.heights[1].1, 20.0);
        assert_eq!(s.heights[0].1, 15.0);
    }
}
