//! Farnebäck two-frame motion estimation.
//!
//! Each neighbourhood is approximated by a quadratic `f(x) ≈ xᵀAx + bᵀx + c`
//! (Gaussian-weighted least squares). A displacement `d` turns `f1` into
//! `f2(x) = f1(x − d)`, so `b2 = b1 − 2·A·d`; solving that relation in a window,
//! coarse to fine, gives the dense field.

use super::pyramid::{box_mean, checked_plane_pyramid, filter_cols, filter_rows, gaussian_kernel};
use super::{FlowField, FlowParams};
use crate::imgcore::{BitGrid, GrayFrame, Plane};
use crate::{Error, Result};
use nalgebra::SMatrix;

/// Per-pixel quadratic coefficients: `b = (bx, by)`, `A = [[axx, axy], [axy, ayy]]`.
pub(crate) struct PolyExpansion {
    width: usize,
    height: usize,
    bx: Vec<f32>,
    by: Vec<f32>,
    axx: Vec<f32>,
    ayy: Vec<f32>,
    axy: Vec<f32>,
}

impl PolyExpansion {
    #[inline]
    fn coeffs(&self, i: usize) -> [f32; 5] {
        [
            self.bx[i],
            self.by[i],
            self.axx[i],
            self.ayy[i],
            self.axy[i],
        ]
    }

    /// Coefficients bilinearly interpolated at a real position, border replicated.
    #[inline]
    fn sample(&self, x: f32, y: f32) -> [f32; 5] {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let c00 = self.coeffs(y0 * self.width + x0);
        let c10 = self.coeffs(y0 * self.width + x1);
        let c01 = self.coeffs(y1 * self.width + x0);
        let c11 = self.coeffs(y1 * self.width + x1);
        std::array::from_fn(|k| w00 * c00[k] + w10 * c10[k] + w01 * c01[k] + w11 * c11[k])
    }
}

/// Weighted least-squares quadratic fit at every pixel.
pub(crate) fn poly_expand(img: &Plane, radius: usize, sigma: f32) -> PolyExpansion {
    let g = gaussian_kernel(sigma, radius);
    let offs: Vec<f32> = (0..g.len()).map(|i| i as f32 - radius as f32).collect();
    let g1: Vec<f32> = g.iter().zip(&offs).map(|(w, d)| w * d).collect();
    let g2: Vec<f32> = g.iter().zip(&offs).map(|(w, d)| w * d * d).collect();

    // basis order: 1, x, y, x², y², xy
    let mut gram = SMatrix::<f64, 6, 6>::zeros();
    for (j, &dy) in offs.iter().enumerate() {
        for (i, &dx) in offs.iter().enumerate() {
            let w = (g[i] * g[j]) as f64;
            let (dx, dy) = (dx as f64, dy as f64);
            let phi = [1.0, dx, dy, dx * dx, dy * dy, dx * dy];
            for r in 0..6 {
                for c in 0..6 {
                    gram[(r, c)] += w * phi[r] * phi[c];
                }
            }
        }
    }
    let inv = gram
        .try_inverse()
        .expect("polynomial basis Gram matrix is positive definite");

    let r0 = filter_rows(img, &g);
    let r1 = filter_rows(img, &g1);
    let r2 = filter_rows(img, &g2);
    let m1 = filter_cols(&r0, &g);
    let mx = filter_cols(&r1, &g);
    let my = filter_cols(&r0, &g1);
    let mxx = filter_cols(&r2, &g);
    let myy = filter_cols(&r0, &g2);
    let mxy = filter_cols(&r1, &g1);

    let n = img.width * img.height;
    let row = |r: usize| -> [f32; 6] { std::array::from_fn(|c| inv[(r, c)] as f32) };
    let (ib, ic, ixx, iyy, ixy) = (row(1), row(2), row(3), row(4), row(5));
    let mut out = PolyExpansion {
        width: img.width,
        height: img.height,
        bx: vec![0.0; n],
        by: vec![0.0; n],
        axx: vec![0.0; n],
        ayy: vec![0.0; n],
        axy: vec![0.0; n],
    };
    for i in 0..n {
        let m = [
            m1.data[i],
            mx.data[i],
            my.data[i],
            mxx.data[i],
            myy.data[i],
            mxy.data[i],
        ];
        let dot = |r: &[f32; 6]| r.iter().zip(&m).map(|(a, b)| a * b).sum::<f32>();
        out.bx[i] = dot(&ib);
        out.by[i] = dot(&ic);
        out.axx[i] = dot(&ixx);
        out.ayy[i] = dot(&iyy);
        // fitted xy coefficient is 2·A12
        out.axy[i] = 0.5 * dot(&ixy);
    }
    out
}

/// Minimum eigenvalue (per px⁴, intensity²) of the window-averaged `AᵀA` below which
/// a pixel is considered textureless.
const MIN_STRUCTURE: f32 = 1e-3;

struct LevelSolve {
    u: Vec<f32>,
    v: Vec<f32>,
    valid: Vec<bool>,
}

fn refine(
    p1: &PolyExpansion,
    p2: &PolyExpansion,
    u: &[f32],
    v: &[f32],
    window: usize,
) -> LevelSolve {
    let (w, h) = (p1.width, p1.height);
    let n = w * h;
    let mut g11 = Plane::zeros(w, h);
    let mut g12 = Plane::zeros(w, h);
    let mut g22 = Plane::zeros(w, h);
    let mut h1 = Plane::zeros(w, h);
    let mut h2 = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = (u[i], v[i]);
            let c1 = p1.coeffs(i);
            let c2 = p2.sample(x as f32 + dx, y as f32 + dy);
            let a11 = 0.5 * (c1[2] + c2[2]);
            let a22 = 0.5 * (c1[3] + c2[3]);
            let a12 = 0.5 * (c1[4] + c2[4]);
            let db1 = -0.5 * (c2[0] - c1[0]) + a11 * dx + a12 * dy;
            let db2 = -0.5 * (c2[1] - c1[1]) + a12 * dx + a22 * dy;
            g11.data[i] = a11 * a11 + a12 * a12;
            g12.data[i] = a12 * (a11 + a22);
            g22.data[i] = a12 * a12 + a22 * a22;
            h1.data[i] = a11 * db1 + a12 * db2;
            h2.data[i] = a12 * db1 + a22 * db2;
        }
    }
    let g11 = box_mean(&g11, window);
    let g12 = box_mean(&g12, window);
    let g22 = box_mean(&g22, window);
    let h1 = box_mean(&h1, window);
    let h2 = box_mean(&h2, window);

    let mut out = LevelSolve {
        u: u.to_vec(),
        v: v.to_vec(),
        valid: vec![false; n],
    };
    for i in 0..n {
        let (a, b, c) = (g11.data[i], g12.data[i], g22.data[i]);
        let half_tr = 0.5 * (a + c);
        let min_eig = half_tr - (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let det = a * c - b * b;
        if min_eig > MIN_STRUCTURE && det > 0.0 {
            out.u[i] = (c * h1.data[i] - b * h2.data[i]) / det;
            out.v[i] = (a * h2.data[i] - b * h1.data[i]) / det;
            out.valid[i] = true;
        }
    }
    out
}

/// Upsample a flow field from a coarser level, scaling the displacements.
fn upsample(
    u: &[f32],
    v: &[f32],
    from: (usize, usize),
    to: (usize, usize),
) -> (Vec<f32>, Vec<f32>) {
    let pu = Plane {
        width: from.0,
        height: from.1,
        data: u.to_vec(),
    };
    let pv = Plane {
        width: from.0,
        height: from.1,
        data: v.to_vec(),
    };
    let sx = from.0 as f32 / to.0 as f32;
    let sy = from.1 as f32 / to.1 as f32;
    let mut ou = Vec::with_capacity(to.0 * to.1);
    let mut ov = Vec::with_capacity(to.0 * to.1);
    for y in 0..to.1 {
        let fy = (y as f32 + 0.5) * sy - 0.5;
        for x in 0..to.0 {
            let fx = (x as f32 + 0.5) * sx - 0.5;
            ou.push(pu.sample_clamped(fx, fy) / sx);
            ov.push(pv.sample_clamped(fx, fy) / sy);
        }
    }
    (ou, ov)
}

/// Flow fields of one pyramid level with their size.
type LevelFlow = (Vec<f32>, Vec<f32>, (usize, usize));

/// Dense flow from `prev` to `cur`: `cur(x + d(x)) ≈ prev(x)`.
pub fn farneback_flow(prev: &GrayFrame, cur: &GrayFrame, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if !prev.same_size(cur) {
        return Err(Error::Contract(format!(
            "flow frames differ in size: {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height()
        )));
    }
    let min_dim = (1usize << params.pyramid_levels) * params.poly_n;
    if prev.width() < min_dim || prev.height() < min_dim {
        return Err(Error::Config(format!(
            "frame {}x{} too small for {} pyramid levels with poly_n {} (need {min_dim})",
            prev.width(),
            prev.height(),
            params.pyramid_levels,
            params.poly_n
        )));
    }
    let scale = params.pyr_scale as f32;
    let min_side = 2 * params.poly_n + 1;
    let pyr1 = checked_plane_pyramid(prev, params.pyramid_levels, scale, min_side)?;
    let pyr2 = checked_plane_pyramid(cur, params.pyramid_levels, scale, min_side)?;

    let mut flow: Option<LevelFlow> = None;
    let mut valid = Vec::new();
    for level in (0..params.pyramid_levels).rev() {
        let (p1, p2) = (&pyr1[level], &pyr2[level]);
        let size = (p1.width, p1.height);
        let (mut u, mut v) = match flow.take() {
            None => (vec![0.0; size.0 * size.1], vec![0.0; size.0 * size.1]),
            Some((u, v, from)) => upsample(&u, &v, from, size),
        };
        let e1 = poly_expand(p1, params.poly_n, params.poly_sigma as f32);
        let e2 = poly_expand(p2, params.poly_n, params.poly_sigma as f32);
        for _ in 0..params.iterations {
            let s = refine(&e1, &e2, &u, &v, params.window_size);
            u = s.u;
            v = s.v;
            valid = s.valid;
        }
        flow = Some((u, v, size));
    }
    let (mut u, mut v, _) = flow.expect("at least one pyramid level");

    let (w, h) = (prev.width(), prev.height());
    let mut bits = BitGrid::new(w, h);
    let max_d = params.max_displacement as f32;
    for i in 0..w * h {
        if !u[i].is_finite() || !v[i].is_finite() {
            u[i] = 0.0;
            v[i] = 0.0;
            continue;
        }
        if valid[i] && u[i].abs() <= max_d && v[i].abs() <= max_d {
            bits.set(i % w, i / w, true);
        }
    }
    Ok(FlowField::from_parts(w, h, u, v, bits))
}
