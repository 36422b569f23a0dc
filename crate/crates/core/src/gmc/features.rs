use crate::imgcore::{BitGrid, GrayFrame, Plane};
use serde::{Deserialize, Serialize};

/// Corner location (sub-pixel capable) with its Shi–Tomasi response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// 3×3 Sobel derivatives (scaled by 1/8), border replicated.
pub(crate) fn sobel(img: &Plane) -> (Plane, Plane) {
    let (w, h) = (img.width, img.height);
    let mut gx = Plane::zeros(w, h);
    let mut gy = Plane::zeros(w, h);
    let px = |x: isize, y: isize| -> f32 {
        img.at(
            x.clamp(0, w as isize - 1) as usize,
            y.clamp(0, h as isize - 1) as usize,
        )
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let dy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            gx.set(x as usize, y as usize, dx / 8.0);
            gy.set(x as usize, y as usize, dy / 8.0);
        }
    }
    (gx, gy)
}

/// Minimum eigenvalue of the gradient structure tensor summed over a
/// `block × block` neighbourhood.
pub(crate) fn min_eigen_response(frame: &GrayFrame, block: usize) -> Plane {
    let img = frame.to_plane();
    let (gx, gy) = sobel(&img);
    let (w, h) = (img.width, img.height);
    let r = (block / 2) as isize;
    let mut out = Plane::zeros(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut a, mut b, mut c) = (0.0f32, 0.0f32, 0.0f32);
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let ix = gx.at(sx, sy);
                    let iy = gy.at(sx, sy);
                    a += ix * ix;
                    b += ix * iy;
                    c += iy * iy;
                }
            }
            let half_tr = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            out.set(x as usize, y as usize, (half_tr - disc).max(0.0));
        }
    }
    out
}

/// Shi–Tomasi corners outside `exclusion`.
///
/// Responses below `quality · max` are discarded, survivors must be 3×3 local maxima,
/// and points are then accepted greedily by descending score while keeping at least
/// `min_distance` between any two. Ties are broken by raster order.
pub fn detect_features(
    frame: &GrayFrame,
    exclusion: &BitGrid,
    max_count: usize,
    quality: f64,
    min_distance: f64,
) -> Vec<FeaturePoint> {
    detect_features_with_block(frame, exclusion, max_count, quality, min_distance, 3)
}

pub(crate) fn detect_features_with_block(
    frame: &GrayFrame,
    exclusion: &BitGrid,
    max_count: usize,
    quality: f64,
    min_distance: f64,
    block: usize,
) -> Vec<FeaturePoint> {
    let resp = min_eigen_response(frame, block);
    let (w, h) = (frame.width(), frame.height());
    // keep clear of the border so the detector window sees real pixels
    let border = block / 2 + 1;
    if w <= 2 * border || h <= 2 * border {
        return Vec::new();
    }
    let allowed = |x: usize, y: usize| !exclusion.get(x, y);

    let mut max_resp = 0.0f32;
    for y in border..h - border {
        for x in border..w - border {
            if allowed(x, y) {
                max_resp = max_resp.max(resp.at(x, y));
            }
        }
    }
    if max_resp <= 1e-6 {
        return Vec::new();
    }
    let threshold = (quality as f32 * max_resp).max(1e-6);

    let mut candidates = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let v = resp.at(x, y);
            if v < threshold || !allowed(x, y) {
                continue;
            }
            let is_max = (y - 1..=y + 1).all(|ny| (x - 1..=x + 1).all(|nx| resp.at(nx, ny) <= v));
            if is_max {
                candidates.push((v, y * w + x));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let min_d2 = min_distance * min_distance;
    let mut out: Vec<FeaturePoint> = Vec::new();
    for (score, idx) in candidates {
        if out.len() >= max_count {
            break;
        }
        let (x, y) = ((idx % w) as f64, (idx / w) as f64);
        let far = out.iter().all(|p| {
            let (dx, dy) = (p.x - x, p.y - y);
            dx * dx + dy * dy >= min_d2
        });
        if far {
            out.push(FeaturePoint {
                x,
                y,
                score: score as f64,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::BoundingBox;
    use proptest::prelude::*;

    fn checkerboard(size: usize, cell: usize) -> GrayFrame {
        GrayFrame::from_fn(size, size, |x, y| {
            if (x / cell + y / cell).is_multiple_of(2) {
                40
            } else {
                210
            }
        })
        .unwrap()
    }

    #[test]
    fn constant_frame_has_no_corners() {
        let f = GrayFrame::filled(64, 64, 128).unwrap();
        assert!(detect_features(&f, &BitGrid::new(64, 64), 100, 0.01, 3.0).is_empty());
    }

    #[test]
    fn checkerboard_corners_on_junctions() {
        let f = checkerboard(64, 8);
        let pts = detect_features(&f, &BitGrid::new(64, 64), 100, 0.01, 3.0);
        assert!(pts.len() >= 40, "only {} corners", pts.len());
        // junctions sit between pixels 8k-1 and 8k
        for p in &pts {
            let near = |c: f64| {
                let j = ((c + 0.5) / 8.0).round() * 8.0 - 0.5;
                (c - j).abs() <= 1.0
            };
            assert!(near(p.x) && near(p.y), "corner {p:?} not at a junction");
        }
    }

    #[test]
    fn exclusion_is_respected() {
        let f = checkerboard(64, 8);
        let excl = BitGrid::from_rect(64, 64, BoundingBox::new(0, 0, 32, 64));
        let pts = detect_features(&f, &excl, 100, 0.01, 3.0);
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|p| p.x >= 32.0));
    }

    #[test]
    fn max_count_caps_output() {
        let f = checkerboard(64, 8);
        assert_eq!(
            detect_features(&f, &BitGrid::new(64, 64), 5, 0.01, 3.0).len(),
            5
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn no_feature_inside_exclusion(
            seed in 0u64..1000,
            x in 0u32..60, y in 0u32..60, w in 1u32..40, h in 1u32..40,
        ) {
            let f = crate::simulator::texture::textured_frame(96, 96, seed);
            let excl = BitGrid::from_rect(96, 96, BoundingBox::new(x, y, w, h)).dilate(2);
            for p in detect_features(&f, &excl, 200, 0.01, 4.0) {
                prop_assert!(!excl.get(p.x as usize, p.y as usize));
                prop_assert!(p.x > 0.0 && p.y > 0.0 && p.x < 95.0 && p.y < 95.0);
            }
        }
    }
}
