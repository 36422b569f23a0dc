//! Pyramidal Lucas–Kanade point tracking with a forward–backward consistency check.

use super::features::{sobel, FeaturePoint};
use crate::imgcore::{GrayFrame, Plane};
use crate::optflow::plane_pyramid;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LkParams {
    /// Half side of the tracking window (window is `2r+1` square).
    pub window_radius: usize,
    pub pyramid_levels: usize,
    pub max_iterations: usize,
    /// Stop iterating when the update is shorter than this (px).
    pub epsilon: f64,
    /// Minimum eigenvalue of the window-normalized gradient matrix.
    pub min_eigen: f64,
    /// Largest allowed round-trip error of the forward–backward check (px).
    pub fb_threshold: f64,
    /// Largest allowed `|q − p|` (px).
    pub max_displacement: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            window_radius: 7,
            pyramid_levels: 3,
            max_iterations: 30,
            epsilon: 0.01,
            min_eigen: 1e-2,
            fb_threshold: 1.0,
            max_displacement: 48.0,
        }
    }
}

/// Matched pair: `p` in the previous frame, `q` its location in the current one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub p: FeaturePoint,
    pub qx: f64,
    pub qy: f64,
    /// Mean absolute intensity difference over the final window.
    pub match_error: f64,
}

impl Correspondence {
    pub fn displacement(&self) -> (f64, f64) {
        (self.qx - self.p.x, self.qy - self.p.y)
    }
}

struct Level {
    img: Plane,
    gx: Plane,
    gy: Plane,
}

struct Pyramid {
    levels: Vec<Level>,
    scale: f32,
}

impl Pyramid {
    fn new(frame: &GrayFrame, levels: usize) -> Self {
        // stop early if the frame gets too small
        let mut n = 1;
        let (mut w, mut h) = (frame.width(), frame.height());
        while n < levels && w / 2 >= 16 && h / 2 >= 16 {
            n += 1;
            w /= 2;
            h /= 2;
        }
        let levels = plane_pyramid(frame.to_plane(), n, 0.5)
            .into_iter()
            .map(|img| {
                let (gx, gy) = sobel(&img);
                Level { img, gx, gy }
            })
            .collect();
        Self { levels, scale: 0.5 }
    }

    fn to_level(&self, v: f64, level: usize) -> f64 {
        let f = (self.scale as f64).powi(level as i32);
        (v + 0.5) * f - 0.5
    }
}

#[derive(Clone, Copy, Debug)]
struct Tracked {
    x: f64,
    y: f64,
    error: f64,
}

/// Bilinear samples of the `(2r+1)²` window centred at `(cx, cy)`, row-major,
/// border replicated. The fractional offset is shared by every tap, so the fast
/// path computes the weights once.
fn sample_window(p: &Plane, cx: f64, cy: f64, r: isize, out: &mut Vec<f32>) {
    out.clear();
    let x0 = (cx - r as f64).floor();
    let y0 = (cy - r as f64).floor();
    let side = 2 * r + 1;
    let inside = x0 >= 0.0
        && y0 >= 0.0
        && x0 + (side as f64) < p.width as f64
        && y0 + (side as f64) < p.height as f64;
    if !inside {
        for dy in -r..=r {
            for dx in -r..=r {
                out.push(p.sample_clamped((cx + dx as f64) as f32, (cy + dy as f64) as f32));
            }
        }
        return;
    }
    let fx = (cx - r as f64 - x0) as f32;
    let fy = (cy - r as f64 - y0) as f32;
    let (x0, y0, w) = (x0 as usize, y0 as usize, p.width);
    let side = side as usize;
    for j in 0..side {
        let top = &p.data[(y0 + j) * w + x0..(y0 + j) * w + x0 + side + 1];
        let bottom = &p.data[(y0 + j + 1) * w + x0..(y0 + j + 1) * w + x0 + side + 1];
        for i in 0..side {
            let t = top[i] + (top[i + 1] - top[i]) * fx;
            let b = bottom[i] + (bottom[i + 1] - bottom[i]) * fx;
            out.push(t + (b - t) * fy);
        }
    }
}

/// Track one point from `a` to `b`; `None` if the window is degenerate or leaves the frame.
fn track_point(a: &Pyramid, b: &Pyramid, x: f64, y: f64, params: &LkParams) -> Option<Tracked> {
    let r = params.window_radius as isize;
    let win_n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let top = a.levels.len().min(b.levels.len()) - 1;
    // displacement estimate in the coordinates of the current level
    let mut gdx = 0.0f64;
    let mut gdy = 0.0f64;
    let mut error = 0.0;
    let (mut win_i, mut win_x, mut win_y, mut win_j) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for level in (0..=top).rev() {
        let la = &a.levels[level];
        let lb = &b.levels[level];
        let px = a.to_level(x, level);
        let py = a.to_level(y, level);
        let (w, h) = (la.img.width as f64, la.img.height as f64);
        if px < 0.0 || py < 0.0 || px > w - 1.0 || py > h - 1.0 {
            return None;
        }

        sample_window(&la.img, px, py, r, &mut win_i);
        sample_window(&la.gx, px, py, r, &mut win_x);
        sample_window(&la.gy, px, py, r, &mut win_y);
        let (mut g11, mut g12, mut g22) = (0.0f64, 0.0f64, 0.0f64);
        for (&ix, &iy) in win_x.iter().zip(&win_y) {
            let (ix, iy) = (ix as f64, iy as f64);
            g11 += ix * ix;
            g12 += ix * iy;
            g22 += iy * iy;
        }
        let det = g11 * g22 - g12 * g12;
        let half_tr = 0.5 * (g11 + g22);
        let min_eig = half_tr - (0.25 * (g11 - g22).powi(2) + g12 * g12).sqrt();
        if min_eig / win_n < params.min_eigen || det <= 0.0 {
            return None;
        }

        let (mut nx, mut ny) = (0.0f64, 0.0f64);
        for _ in 0..params.max_iterations {
            let cx = px + gdx + nx;
            let cy = py + gdy + ny;
            if cx < -(r as f64) || cy < -(r as f64) || cx > w + r as f64 || cy > h + r as f64 {
                return None;
            }
            sample_window(&lb.img, cx, cy, r, &mut win_j);
            let (mut b1, mut b2) = (0.0f64, 0.0f64);
            for k in 0..win_j.len() {
                let diff = (win_i[k] - win_j[k]) as f64;
                b1 += diff * win_x[k] as f64;
                b2 += diff * win_y[k] as f64;
            }
            let ex = (g22 * b1 - g12 * b2) / det;
            let ey = (g11 * b2 - g12 * b1) / det;
            nx += ex;
            ny += ey;
            if ex * ex + ey * ey < params.epsilon * params.epsilon {
                break;
            }
        }
        if level == 0 {
            let cx = px + gdx + nx;
            let cy = py + gdy + ny;
            sample_window(&lb.img, cx, cy, r, &mut win_j);
            let err: f64 = win_i
                .iter()
                .zip(&win_j)
                .map(|(&i, &j)| (i - j).abs() as f64)
                .sum();
            error = err / win_n;
        }
        gdx += nx;
        gdy += ny;
        if level > 0 {
            gdx /= a.scale as f64;
            gdy /= a.scale as f64;
        }
    }
    let (qx, qy) = (x + gdx, y + gdy);
    if !qx.is_finite() || !qy.is_finite() {
        return None;
    }
    Some(Tracked {
        x: qx,
        y: qy,
        error,
    })
}

/// Track `points` from `prev` into `cur`, keeping only matches that survive the
/// forward–backward check and stay inside the frame.
pub fn match_features(
    prev: &GrayFrame,
    cur: &GrayFrame,
    points: &[FeaturePoint],
    params: &LkParams,
) -> Vec<Correspondence> {
    if !prev.same_size(cur) || points.is_empty() {
        return Vec::new();
    }
    let a = Pyramid::new(prev, params.pyramid_levels);
    let b = Pyramid::new(cur, params.pyramid_levels);
    let (w, h) = (cur.width() as f64, cur.height() as f64);
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let Some(fwd) = track_point(&a, &b, p.x, p.y, params) else {
            continue;
        };
        if fwd.x < 0.0 || fwd.y < 0.0 || fwd.x > w - 1.0 || fwd.y > h - 1.0 {
            continue;
        }
        let (dx, dy) = (fwd.x - p.x, fwd.y - p.y);
        if (dx * dx + dy * dy).sqrt() > params.max_displacement {
            continue;
        }
        let Some(back) = track_point(&b, &a, fwd.x, fwd.y, params) else {
            continue;
        };
        let (ex, ey) = (back.x - p.x, back.y - p.y);
        if (ex * ex + ey * ey).sqrt() > params.fb_threshold {
            continue;
        }
        out.push(Correspondence {
            p: *p,
            qx: fwd.x,
            qy: fwd.y,
            match_error: fwd.error,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::texture::textured_frame;

    fn shifted(f: &GrayFrame, dx: i32, dy: i32) -> GrayFrame {
        let (w, h) = (f.width() as i32, f.height() as i32);
        GrayFrame::from_fn(f.width(), f.height(), |x, y| {
            let sx = (x as i32 - dx).clamp(0, w - 1);
            let sy = (y as i32 - dy).clamp(0, h - 1);
            f.get(sx as usize, sy as usize)
        })
        .unwrap()
    }

    fn grid_points(w: usize, h: usize, step: usize, margin: usize) -> Vec<FeaturePoint> {
        let mut pts = Vec::new();
        for y in (margin..h - margin).step_by(step) {
            for x in (margin..w - margin).step_by(step) {
                pts.push(FeaturePoint {
                    x: x as f64,
                    y: y as f64,
                    score: 1.0,
                });
            }
        }
        pts
    }

    #[test]
    fn identical_frames_give_zero_motion() {
        let f = textured_frame(128, 128, 3);
        let pts = grid_points(128, 128, 16, 16);
        let corrs = match_features(&f, &f, &pts, &LkParams::default());
        assert!(corrs.len() > pts.len() / 2);
        for c in corrs {
            let (dx, dy) = c.displacement();
            assert!((dx * dx + dy * dy).sqrt() < 0.1);
        }
    }

    #[test]
    fn recovers_known_shift() {
        let f = textured_frame(128, 128, 5);
        let g = shifted(&f, 4, 1);
        let pts = grid_points(128, 128, 16, 20);
        let corrs = match_features(&f, &g, &pts, &LkParams::default());
        assert!(corrs.len() > pts.len() / 2);
        for c in corrs {
            let (dx, dy) = c.displacement();
            assert!(
                (dx - 4.0).abs() < 0.3 && (dy - 1.0).abs() < 0.3,
                "{dx} {dy}"
            );
        }
    }

    #[test]
    fn textureless_point_is_dropped() {
        // flat left half, textured right half
        let tex = textured_frame(128, 128, 9);
        let f =
            GrayFrame::from_fn(128, 128, |x, y| if x < 64 { 100 } else { tex.get(x, y) }).unwrap();
        let g = shifted(&f, 2, 0);
        let flat = FeaturePoint {
            x: 24.0,
            y: 64.0,
            score: 0.0,
        };
        assert!(match_features(&f, &g, &[flat], &LkParams::default()).is_empty());
    }
}
