//! Constant-velocity Kalman filter over `[u, v, s, r, du, dv, ds]`: box
//! center, area and aspect ratio, with velocities for everything but the
//! aspect ratio. Noise and initial covariance follow the SORT reference.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::types::BoundingBox;

pub type StateVector = SVector<f64, 7>;
pub type Covariance = SMatrix<f64, 7, 7>;
type Measurement = SVector<f64, 4>;

/// Floor applied to the predicted area when the motion model drives it to zero.
pub const MIN_AREA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrackState {
    pub mean: StateVector,
    pub covariance: Covariance,
    /// Set by the last predict when the area had to be clamped to `MIN_AREA`.
    pub area_clamped: bool,
}

fn transition() -> SMatrix<f64, 7, 7> {
    let mut f = SMatrix::<f64, 7, 7>::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> SMatrix<f64, 4, 7> {
    let mut h = SMatrix::<f64, 4, 7>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn process_noise() -> Covariance {
    Covariance::from_diagonal(&StateVector::from_column_slice(&[
        1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4,
    ]))
}

fn measurement_noise() -> SMatrix<f64, 4, 4> {
    SMatrix::<f64, 4, 4>::from_diagonal(&Measurement::new(1.0, 1.0, 10.0, 10.0))
}

fn initial_covariance() -> Covariance {
    Covariance::from_diagonal(&StateVector::from_column_slice(&[
        10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4,
    ]))
}

/// `[u, v, s, r]` for a box.
pub fn box_to_measurement(b: &BoundingBox) -> [f64; 4] {
    let (u, v) = b.center();
    [u, v, b.area(), b.width() / b.height()]
}

fn symmetrize(p: &Covariance) -> Covariance {
    (p + p.transpose()) * 0.5
}

impl KalmanTrackState {
    /// New track at rest on `b`, with inflated velocity variance.
    pub fn from_box(b: &BoundingBox) -> Self {
        let z = box_to_measurement(b);
        let mean = StateVector::from_column_slice(&[z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0]);
        KalmanTrackState {
            mean,
            covariance: initial_covariance(),
            area_clamped: false,
        }
    }

    pub fn to_box(&self) -> Result<BoundingBox> {
        let s = self.mean[2].max(MIN_AREA);
        let r = self.mean[3];
        if !(r > 0.0) {
            return Err(Error::Numerical(format!("aspect ratio {r} is not positive")));
        }
        let w = (s * r).sqrt();
        let h = s / w;
        let (u, v) = (self.mean[0], self.mean[1]);
        BoundingBox::new(u - w / 2.0, v - h / 2.0, u + w / 2.0, v + h / 2.0)
    }

    pub fn predict(&self) -> KalmanTrackState {
        let f = transition();
        let mut mean = self.mean;
        if mean[2] + mean[6] <= 0.0 {
            mean[6] = 0.0;
        }
        mean = f * mean;
        let mut area_clamped = false;
        if mean[2] <= 0.0 {
            mean[2] = MIN_AREA;
            area_clamped = true;
        }
        let covariance = symmetrize(&(f * self.covariance * f.transpose() + process_noise()));
        KalmanTrackState {
            mean,
            covariance,
            area_clamped,
        }
    }

    pub fn update(&self, measurement: &BoundingBox) -> Result<KalmanTrackState> {
        let h = observation();
        let z = Measurement::from(box_to_measurement(measurement));
        let innovation = z - h * self.mean;
        let s = h * self.covariance * h.transpose() + measurement_noise();
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
        let gain = self.covariance * h.transpose() * s_inv;
        let mean = self.mean + gain * innovation;
        let covariance =
            symmetrize(&((Covariance::identity() - gain * h) * self.covariance));
        Ok(KalmanTrackState {
            mean,
            covariance,
            area_clamped: false,
        })
    }
}

pub fn kalman_predict(state: &KalmanTrackState) -> KalmanTrackState {
    state.predict()
}

pub fn kalman_update(state: &KalmanTrackState, measurement: &BoundingBox) -> Result<KalmanTrackState> {
    state.update(measurement)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asym(p: &Covariance) -> f64 {
        (p - p.transpose()).amax()
    }

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn zero_velocity_keeps_position() {
        let s = KalmanTrackState::from_box(&b(0.0, 0.0, 10.0, 20.0));
        let p = s.predict();
        assert_eq!(p.mean.fixed_rows::<4>(0), s.mean.fixed_rows::<4>(0));
        let expected = transition() * s.covariance * transition().transpose() + process_noise();
        assert!((p.covariance - expected).amax() < 1e-12);
    }

    #[test]
    fn velocity_advances_center() {
        let mut s = KalmanTrackState::from_box(&b(0.0, 0.0, 10.0, 20.0));
        s.mean[4] = 2.0;
        let u0 = s.mean[0];
        let p = s.predict();
        assert_eq!(p.mean[0], u0 + 2.0);
        assert_eq!(p.predict().mean[0], u0 + 4.0);
    }

    #[test]
    fn fifty_steps_constant_velocity() {
        let mut s = KalmanTrackState::from_box(&b(100.0, 100.0, 140.0, 200.0));
        s.mean[4] = 1.5;
        s.mean[5] = -0.75;
        let (u0, v0) = (s.mean[0], s.mean[1]);
        for _ in 0..50 {
            s = s.predict();
        }
        assert!((s.mean[0] - (u0 + 75.0)).abs() < 1e-9);
        assert!((s.mean[1] - (v0 - 37.5)).abs() < 1e-9);
        assert!(asym(&s.covariance) < 1e-9);
    }

    #[test]
    fn update_with_predicted_measurement_keeps_mean() {
        let s = KalmanTrackState::from_box(&b(10.0, 10.0, 30.0, 50.0)).predict();
        let predicted = s.to_box().unwrap();
        let u = s.update(&predicted).unwrap();
        assert!((u.mean - s.mean).amax() < 1e-9);
    }

    #[test]
    fn exact_zero_innovation() {
        // box with exactly representable center/area/ratio
        let bx = b(0.0, 0.0, 4.0, 8.0);
        let s = KalmanTrackState::from_box(&bx);
        let u = s.update(&bx).unwrap();
        assert!((u.mean - s.mean).amax() < 1e-12);
    }

    #[test]
    fn trace_shrinks_on_update() {
        let s = KalmanTrackState::from_box(&b(0.0, 0.0, 10.0, 20.0)).predict();
        let u = s.update(&b(1.0, 1.0, 11.0, 22.0)).unwrap();
        assert!(u.covariance.trace() <= s.covariance.trace());
        assert!(asym(&u.covariance) < 1e-9);
    }

    #[test]
    fn converges_to_fixed_box() {
        let target = b(50.0, 60.0, 80.0, 120.0);
        let mut s = KalmanTrackState::from_box(&b(0.0, 0.0, 10.0, 20.0));
        for _ in 0..500 {
            s = s.predict().update(&target).unwrap();
        }
        let z = box_to_measurement(&target);
        for i in 0..4 {
            assert!((s.mean[i] - z[i]).abs() / z[i].abs().max(1.0) < 1e-3, "{i}: {} vs {}", s.mean[i], z[i]);
        }
    }

    #[test]
    fn negative_area_is_clamped_and_flagged() {
        let mut s = KalmanTrackState::from_box(&b(0.0, 0.0, 2.0, 2.0));
        s.mean[2] = 0.0;
        s.mean[6] = 0.0;
        let p = s.predict();
        assert!(p.area_clamped);
        assert_eq!(p.mean[2], MIN_AREA);
    }
}
