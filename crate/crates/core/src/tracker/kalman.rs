//! Constant-velocity Kalman filter over `(cx, cy, aspect, h)` box coordinates.

use crate::imgcore::{AffineTransform, BoundingBox, RectF};
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
type Vector4 = SVector<f64, 4>;
type Matrix4 = SMatrix<f64, 4, 4>;
type Matrix48 = SMatrix<f64, 4, 8>;

const MIN_SIZE: f64 = 1e-3;

/// Noise weights, all relative to the box height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    pub std_weight_measurement: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            std_weight_measurement: 1.0 / 20.0,
        }
    }
}

/// Box measurement `(cx, cy, w/h, h)`.
pub fn measurement_of(b: &BoundingBox) -> [f64; 4] {
    let (cx, cy) = b.to_rect().center();
    [cx, cy, b.w as f64 / b.h as f64, b.h as f64]
}

#[derive(Clone, Debug, PartialEq)]
pub struct KalmanBoxState {
    pub mean: Vector8,
    pub covariance: Matrix8,
}

impl KalmanBoxState {
    /// New state at `bbox` with zero velocity and wide velocity uncertainty.
    pub fn initiate(bbox: &BoundingBox, p: &KalmanParams) -> Self {
        let z = measurement_of(bbox);
        let h = z[3];
        let (wp, wv) = (p.std_weight_position, p.std_weight_velocity);
        let std = [
            2.0 * wp * h,
            2.0 * wp * h,
            1e-2,
            2.0 * wp * h,
            10.0 * wv * h,
            10.0 * wv * h,
            1e-5,
            10.0 * wv * h,
        ];
        let mut mean = Vector8::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from_slice(&z);
        Self {
            mean,
            covariance: Matrix8::from_diagonal(&Vector8::from_iterator(std.iter().map(|s| s * s))),
        }
    }

    pub fn rect(&self) -> RectF {
        let (cx, cy, a, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        let w = a * h;
        RectF {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[4], self.mean[5])
    }

    /// Map the state through a camera transform: position by `m`, velocities by its
    /// linear part, height by the square root of its area scale.
    pub fn transformed(&self, m: &AffineTransform) -> Self {
        let s = m.determinant().abs().sqrt();
        let mut t = Matrix8::zeros();
        for base in [0, 4] {
            t[(base, base)] = m.a00;
            t[(base, base + 1)] = m.a01;
            t[(base + 1, base)] = m.a10;
            t[(base + 1, base + 1)] = m.a11;
            t[(base + 2, base + 2)] = 1.0;
            t[(base + 3, base + 3)] = s;
        }
        let mut mean = t * self.mean;
        let (cx, cy) = m.apply(self.mean[0], self.mean[1]);
        mean[0] = cx;
        mean[1] = cy;
        let covariance = symmetrize(t * self.covariance * t.transpose());
        Self { mean, covariance }
    }
}

fn transition() -> Matrix8 {
    let mut f = Matrix8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> Matrix48 {
    let mut h = Matrix48::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(m: Matrix8) -> Matrix8 {
    (m + m.transpose()) * 0.5
}

pub fn kalman_predict(state: &KalmanBoxState, p: &KalmanParams) -> KalmanBoxState {
    let h = state.mean[3].max(MIN_SIZE);
    let (wp, wv) = (p.std_weight_position, p.std_weight_velocity);
    let std = [wp * h, wp * h, 1e-2, wp * h, wv * h, wv * h, 1e-5, wv * h];
    let q = Matrix8::from_diagonal(&Vector8::from_iterator(std.iter().map(|s| s * s)));
    let f = transition();
    KalmanBoxState {
        mean: f * state.mean,
        covariance: symmetrize(f * state.covariance * f.transpose() + q),
    }
}

/// Correct `state` with a box measurement. Uses the Joseph form so the covariance
/// stays symmetric positive semi-definite.
pub fn kalman_update(
    state: &KalmanBoxState,
    bbox: &BoundingBox,
    p: &KalmanParams,
) -> KalmanBoxState {
    let z = Vector4::from(measurement_of(bbox));
    let h = state.mean[3].max(MIN_SIZE);
    let wm = p.std_weight_measurement;
    let std = [wm * h, wm * h, 1e-1, wm * h];
    let r = Matrix4::from_diagonal(&Vector4::from_iterator(std.iter().map(|s| s * s)));
    let hm = observation();
    let pc = &state.covariance;
    let s = hm * pc * hm.transpose() + r;
    let Some(chol) = s.cholesky() else {
        return state.clone();
    };
    // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P
    let k = chol.solve(&(hm * pc)).transpose();
    let innovation = z - hm * state.mean;
    let mut mean = state.mean + k * innovation;
    mean[2] = mean[2].max(MIN_SIZE);
    mean[3] = mean[3].max(MIN_SIZE);
    let ikh = Matrix8::identity() - k * hm;
    let covariance = symmetrize(ikh * pc * ikh.transpose() + k * r * k.transpose());
    KalmanBoxState { mean, covariance }
}
