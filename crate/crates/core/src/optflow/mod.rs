//! Dense two-frame optical flow (Farnebäck polynomial expansion).

mod farneback;
mod pyramid;

pub use farneback::farneback_flow;
pub use pyramid::build_pyramid;

pub(crate) use pyramid::{gaussian_blur, plane_pyramid};

use crate::imgcore::BitGrid;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Farnebäck hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub pyr_scale: f64,
    /// Side of the averaging window for the displacement solve (odd).
    pub window_size: usize,
    pub iterations: usize,
    /// Polynomial neighbourhood radius (5 or 7).
    pub poly_n: usize,
    /// Gaussian applicability width for the polynomial fit.
    pub poly_sigma: f64,
    /// Displacements beyond this (px) are flagged invalid.
    pub max_displacement: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyr_scale: 0.5,
            window_size: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
            max_displacement: 32.0,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 {
            return Err(Error::Config("pyramid_levels must be >= 1".into()));
        }
        if !(self.pyr_scale > 0.0 && self.pyr_scale < 1.0) {
            return Err(Error::Config(format!(
                "pyr_scale {} not in (0, 1)",
                self.pyr_scale
            )));
        }
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window_size {} must be odd and >= 3",
                self.window_size
            )));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.poly_n != 5 && self.poly_n != 7 {
            return Err(Error::Config(format!(
                "poly_n {} must be 5 or 7",
                self.poly_n
            )));
        }
        if !(self.poly_sigma.is_finite() && self.poly_sigma > 0.0) {
            return Err(Error::Config("poly_sigma must be positive".into()));
        }
        if !(self.max_displacement.is_finite() && self.max_displacement > 0.0) {
            return Err(Error::Config("max_displacement must be positive".into()));
        }
        Ok(())
    }
}

/// Per-pixel displacement `(u, v)` plus a reliability bit.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    valid: BitGrid,
}

/// Magic header of the binary flow dump.
pub const FLOW_MAGIC: &[u8; 8] = b"DWFLOW01";

impl FlowField {
    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        u: Vec<f32>,
        v: Vec<f32>,
        valid: BitGrid,
    ) -> Self {
        debug_assert_eq!(u.len(), width * height);
        debug_assert_eq!(v.len(), width * height);
        Self {
            width,
            height,
            u,
            v,
            valid,
        }
    }

    /// Uniform field, every pixel valid. Mostly useful for tests and tooling.
    pub fn uniform(width: usize, height: usize, u: f32, v: f32) -> Self {
        let n = width * height;
        let mut valid = BitGrid::new(width, height);
        for y in 0..height {
            for x in 0..width {
                valid.set(x, y, true);
            }
        }
        Self::from_parts(width, height, vec![u; n], vec![v; n], valid)
    }

    /// Field built from per-pixel `(u, v)` values, every pixel valid.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (f32, f32),
    ) -> Self {
        let mut field = Self::uniform(width, height, 0.0, 0.0);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                field.u[y * width + x] = u;
                field.v[y * width + x] = v;
            }
        }
        field
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn valid(&self) -> &BitGrid {
        &self.valid
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.get(x, y)
    }

    pub fn set_valid(&mut self, x: usize, y: usize, on: bool) {
        self.valid.set(x, y, on);
    }

    /// Clear the valid bit on a border of `margin` pixels.
    pub fn invalidate_border(&mut self, margin: usize) {
        for y in 0..self.height {
            for x in 0..self.width {
                let inside = x >= margin
                    && y >= margin
                    && x + margin < self.width
                    && y + margin < self.height;
                if !inside {
                    self.valid.set(x, y, false);
                }
            }
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count()
    }

    /// Means of `u`, `v`, `|u|`, `|v|` over valid pixels at least `border` pixels from
    /// the edge, and the number of pixels used.
    pub fn interior_stats(&self, border: usize) -> FlowStats {
        let mut s = FlowStats::default();
        let (mut su, mut sv, mut sau, mut sav) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for y in border..self.height.saturating_sub(border) {
            for x in border..self.width.saturating_sub(border) {
                if !self.valid.get(x, y) {
                    continue;
                }
                let i = y * self.width + x;
                let (u, v) = (self.u[i] as f64, self.v[i] as f64);
                su += u;
                sv += v;
                sau += u.abs();
                sav += v.abs();
                s.count += 1;
            }
        }
        if s.count > 0 {
            let n = s.count as f64;
            s.mean_u = su / n;
            s.mean_v = sv / n;
            s.mean_abs_u = sau / n;
            s.mean_abs_v = sav / n;
        }
        s
    }

    /// Write the binary dump: magic, width and height as little-endian u32, then
    /// the u plane and v plane as little-endian f32.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(FLOW_MAGIC)?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&(self.height as u32).to_le_bytes())?;
        for plane in [&self.u, &self.v] {
            for value in plane.iter() {
                out.write_all(&value.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_dump(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * self.u.len());
        self.write_dump(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Read a dump written by [`FlowField::write_dump`]. Validity is not stored, so
    /// every pixel of the result is marked valid.
    pub fn read_dump<R: Read>(input: &mut R) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != FLOW_MAGIC {
            return Err(bad("not a flow dump"));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word) as usize;
        input.read_exact(&mut word)?;
        let height = u32::from_le_bytes(word) as usize;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| bad("dimensions overflow"))?;
        let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for plane in planes.iter_mut() {
            for _ in 0..n {
                input.read_exact(&mut word)?;
                plane.push(f32::from_le_bytes(word));
            }
        }
        let [u, v] = planes;
        let mut field = Self::uniform(width, height, 0.0, 0.0);
        field.u = u;
        field.v = v;
        Ok(field)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlowStats {
    pub mean_u: f64,
    pub mean_v: f64,
    pub mean_abs_u: f64,
    pub mean_abs_v: f64,
    pub count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::GrayFrame;
    use crate::simulator::texture::textured_frame;

    /// `cur(x, y) = prev(x − dx, y − dy)`, edges replicated.
    fn shifted(f: &GrayFrame, dx: i32, dy: i32) -> GrayFrame {
        let (w, h) = (f.width() as i32, f.height() as i32);
        GrayFrame::from_fn(f.width(), f.height(), |x, y| {
            let sx = (x as i32 - dx).clamp(0, w - 1);
            let sy = (y as i32 - dy).clamp(0, h - 1);
            f.get(sx as usize, sy as usize)
        })
        .unwrap()
    }

    #[test]
    fn zero_motion() {
        let f = textured_frame(128, 128, 11);
        let flow = farneback_flow(&f, &f, &FlowParams::default()).unwrap();
        let s = flow.interior_stats(0);
        assert!(s.count > 128 * 128 * 9 / 10);
        assert!(s.mean_abs_u < 0.05 && s.mean_abs_v < 0.05, "{s:?}");
    }

    #[test]
    fn known_horizontal_shift() {
        let f = textured_frame(128, 128, 12);
        let flow = farneback_flow(&f, &shifted(&f, 2, 0), &FlowParams::default()).unwrap();
        let s = flow.interior_stats(16);
        assert!((1.8..=2.2).contains(&s.mean_u), "{s:?}");
        assert!(s.mean_abs_v < 0.2, "{s:?}");
    }

    #[test]
    fn known_vertical_shift() {
        let f = textured_frame(128, 128, 13);
        let flow = farneback_flow(&f, &shifted(&f, 0, -3), &FlowParams::default()).unwrap();
        let s = flow.interior_stats(16);
        assert!((-3.3..=-2.7).contains(&s.mean_v), "{s:?}");
    }

    #[test]
    fn constant_frames_are_invalid() {
        let f = GrayFrame::filled(64, 64, 90).unwrap();
        let flow = farneback_flow(&f, &f, &FlowParams::default()).unwrap();
        assert_eq!(flow.valid_count(), 0);
        assert!(flow.u().iter().chain(flow.v()).all(|v| *v == 0.0));
    }

    #[test]
    fn contract_and_config_errors() {
        let a = textured_frame(64, 64, 1);
        let b = textured_frame(64, 48, 1);
        assert!(matches!(
            farneback_flow(&a, &b, &FlowParams::default()),
            Err(Error::Contract(_))
        ));
        let small = textured_frame(32, 32, 1);
        assert!(matches!(
            farneback_flow(&small, &small, &FlowParams::default()),
            Err(Error::Config(_))
        ));
        let even = FlowParams {
            window_size: 14,
            ..FlowParams::default()
        };
        assert!(matches!(
            farneback_flow(&a, &a, &even),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn deterministic() {
        let f = textured_frame(96, 96, 4);
        let g = shifted(&f, 1, 1);
        let a = farneback_flow(&f, &g, &FlowParams::default()).unwrap();
        let b = farneback_flow(&f, &g, &FlowParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dump_round_trip() {
        let field = FlowField::from_fn(9, 8, |x, y| (x as f32 * 0.5, -(y as f32)));
        let mut buf = Vec::new();
        field.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..8], FLOW_MAGIC);
        assert_eq!(buf.len(), 16 + 2 * 4 * 72);
        let back = FlowField::read_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(back, field);
    }
}
