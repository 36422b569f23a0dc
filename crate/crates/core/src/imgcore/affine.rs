use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// 2D affine map `p' = A p + b`, with `A = [[a00, a01], [a10, a11]]` and `b = (bx, by)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub a00: f64,
    pub a01: f64,
    pub a10: f64,
    pub a11: f64,
    pub bx: f64,
    pub by: f64,
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        a00: 1.0,
        a01: 0.0,
        a10: 0.0,
        a11: 1.0,
        bx: 0.0,
        by: 0.0,
    };

    pub const fn new(a00: f64, a01: f64, a10: f64, a11: f64, bx: f64, by: f64) -> Self {
        Self {
            a00,
            a01,
            a10,
            a11,
            bx,
            by,
        }
    }

    pub fn translation(bx: f64, by: f64) -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0, bx, by)
    }

    /// Rotation by `degrees` (counter-clockwise in a y-down image reads as clockwise)
    /// about `(cx, cy)`, followed by a translation of `(tx, ty)`.
    pub fn rotation_about(degrees: f64, cx: f64, cy: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Self::new(
            c,
            -s,
            s,
            c,
            cx - c * cx + s * cy + tx,
            cy - s * cx - c * cy + ty,
        )
    }

    /// Entries in `[a00, a01, a10, a11, bx, by]` order.
    pub fn to_array(&self) -> [f64; 6] {
        [self.a00, self.a01, self.a10, self.a11, self.bx, self.by]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a00 * x + self.a01 * y + self.bx,
            self.a10 * x + self.a11 * y + self.by,
        )
    }

    /// Apply only the linear part (for velocities).
    #[inline]
    pub fn apply_linear(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a00 * x + self.a01 * y, self.a10 * x + self.a11 * y)
    }

    pub fn determinant(&self) -> f64 {
        self.a00 * self.a11 - self.a01 * self.a10
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if !det.is_finite() || det.abs() <= 1e-6 {
            return Err(Error::Estimation(format!(
                "affine transform is singular (det = {det:e})"
            )));
        }
        let i00 = self.a11 / det;
        let i01 = -self.a01 / det;
        let i10 = -self.a10 / det;
        let i11 = self.a00 / det;
        Ok(Self::new(
            i00,
            i01,
            i10,
            i11,
            -(i00 * self.bx + i01 * self.by),
            -(i10 * self.bx + i11 * self.by),
        ))
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &AffineTransform) -> Self {
        Self::new(
            self.a00 * first.a00 + self.a01 * first.a10,
            self.a00 * first.a01 + self.a01 * first.a11,
            self.a10 * first.a00 + self.a11 * first.a10,
            self.a10 * first.a01 + self.a11 * first.a11,
            self.a00 * first.bx + self.a01 * first.by + self.bx,
            self.a10 * first.bx + self.a11 * first.by + self.by,
        )
    }

    /// Rotation angle of the linear part in degrees (exact for similarity transforms).
    pub fn rotation_degrees(&self) -> f64 {
        (self.a10 - self.a01)
            .atan2(self.a00 + self.a11)
            .to_degrees()
    }

    /// Largest absolute difference between corresponding entries.
    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
