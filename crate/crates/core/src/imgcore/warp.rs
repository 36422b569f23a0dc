use super::{AffineTransform, GrayFrame};
use crate::{Error, Result};

/// Resample `frame` through an affine map with bilinear interpolation.
///
/// Output pixel `p` takes the value of `frame` at `m · p`, so `m` maps output
/// coordinates to source sampling locations. Locations that fall outside the source
/// raster produce 0; use [`validity_margin`] to know how wide that border can be.
pub fn warp_affine(frame: &GrayFrame, m: &AffineTransform) -> Result<GrayFrame> {
    if !m.is_finite() || m.determinant().abs() <= 1e-6 {
        return Err(Error::Estimation(format!(
            "cannot warp with singular transform (det = {:e})",
            m.determinant()
        )));
    }
    let (w, h) = (frame.width(), frame.height());
    let src = frame.data();
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let yf = y as f64;
        for x in 0..w {
            let (sx, sy) = m.apply(x as f64, yf);
            // tolerate round-off just outside the raster
            let sx = snap(sx, max_x);
            let sy = snap(sy, max_y);
            if !(0.0..=max_x).contains(&sx) || !(0.0..=max_y).contains(&sy) {
                out.push(0);
                continue;
            }
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let p00 = src[y0 * w + x0] as f64;
            let p10 = src[y0 * w + x1] as f64;
            let p01 = src[y1 * w + x0] as f64;
            let p11 = src[y1 * w + x1] as f64;
            let top = p00 + (p10 - p00) * fx;
            let bottom = p01 + (p11 - p01) * fx;
            let v = top + (bottom - top) * fy;
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayFrame::new(w, h, out)
}

#[inline]
fn snap(v: f64, max: f64) -> f64 {
    if v < 0.0 && v > -1e-9 {
        0.0
    } else if v > max && v < max + 1e-9 {
        max
    } else {
        v
    }
}

/// Border width (pixels) that may contain fill values after [`warp_affine`] with `m`
/// on a `width × height` frame: the largest per-axis corner displacement, rounded
/// up, plus 2. For a pure translation this is `ceil(max(|bx|, |by|)) + 2`.
pub fn validity_margin(m: &AffineTransform, width: usize, height: usize) -> usize {
    let corners = [
        (0.0, 0.0),
        ((width - 1) as f64, 0.0),
        (0.0, (height - 1) as f64),
        ((width - 1) as f64, (height - 1) as f64),
    ];
    let worst = corners
        .iter()
        .map(|&(x, y)| {
            let (sx, sy) = m.apply(x, y);
            (sx - x).abs().max((sy - y).abs())
        })
        .fold(0.0, f64::max);
    // shave float noise so an exact integer shift is not rounded up
    (worst - 1e-9).max(0.0).ceil() as usize + 2
}
