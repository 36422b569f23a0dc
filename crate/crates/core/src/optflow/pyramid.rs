use crate::imgcore::{GrayFrame, Plane};
use crate::{Error, Result};

/// Normalized 1D Gaussian kernel of the given radius.
pub(crate) fn gaussian_kernel(sigma: f32, radius: usize) -> Vec<f32> {
    let mut k: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f32 - radius as f32;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable correlation with border replication; `kernel.len()` must be odd.
pub(crate) fn separable_filter(src: &Plane, kx: &[f32], ky: &[f32]) -> Plane {
    let tmp = filter_rows(src, kx);
    filter_cols(&tmp, ky)
}

pub(crate) fn filter_rows(src: &Plane, k: &[f32]) -> Plane {
    let (w, h) = (src.width, src.height);
    let r = (k.len() / 2) as isize;
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * row[sx];
            }
            *d = acc;
        }
    }
    out
}

pub(crate) fn filter_cols(src: &Plane, k: &[f32]) -> Plane {
    let (w, h) = (src.width, src.height);
    let r = (k.len() / 2) as isize;
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (i, &kv) in k.iter().enumerate() {
            let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
            let row = &src.data[sy * w..(sy + 1) * w];
            for (d, &s) in dst.iter_mut().zip(row) {
                *d += kv * s;
            }
        }
    }
    out
}

pub(crate) fn gaussian_blur(src: &Plane, sigma: f32) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let radius = ((sigma * 3.0).ceil() as usize).max(1);
    let k = gaussian_kernel(sigma, radius);
    separable_filter(src, &k, &k)
}

/// Normalized box mean over a `size × size` window (size odd), border replicated.
pub(crate) fn box_mean(src: &Plane, size: usize) -> Plane {
    let k = vec![1.0 / size as f32; size];
    separable_filter(src, &k, &k)
}

/// Bilinear resample to `new_w × new_h` with pixel-center alignment.
pub(crate) fn resize(src: &Plane, new_w: usize, new_h: usize) -> Plane {
    let sx = src.width as f32 / new_w as f32;
    let sy = src.height as f32 / new_h as f32;
    let mut out = Plane::zeros(new_w, new_h);
    for y in 0..new_h {
        let fy = (y as f32 + 0.5) * sy - 0.5;
        for x in 0..new_w {
            let fx = (x as f32 + 0.5) * sx - 0.5;
            out.set(x, y, src.sample_clamped(fx, fy));
        }
    }
    out
}

pub(crate) fn level_size(width: usize, height: usize, scale: f32, level: usize) -> (usize, usize) {
    let f = scale.powi(level as i32);
    (
        ((width as f32 * f).round() as usize).max(1),
        ((height as f32 * f).round() as usize).max(1),
    )
}

/// Float pyramid: level 0 is the input; every further level is the previous one
/// smoothed against aliasing and resampled by `scale`.
pub(crate) fn plane_pyramid(base: Plane, levels: usize, scale: f32) -> Vec<Plane> {
    let sigma = ((1.0 / (scale * scale)) - 1.0).max(0.0).sqrt() * 0.5;
    let mut out = Vec::with_capacity(levels);
    out.push(base);
    for level in 1..levels {
        let prev = &out[level - 1];
        let (w0, h0) = (out[0].width, out[0].height);
        let (w, h) = level_size(w0, h0, scale, level);
        let smoothed = gaussian_blur(prev, sigma);
        out.push(resize(&smoothed, w, h));
    }
    out
}

fn check_pyramid(
    width: usize,
    height: usize,
    levels: usize,
    scale: f32,
    min_side: usize,
) -> Result<()> {
    if levels == 0 {
        return Err(Error::Config("pyramid needs at least one level".into()));
    }
    if !(scale > 0.0 && scale < 1.0) {
        return Err(Error::Config(format!(
            "pyramid scale {scale} not in (0, 1)"
        )));
    }
    let (w, h) = level_size(width, height, scale, levels - 1);
    if w < min_side || h < min_side {
        return Err(Error::Config(format!(
            "pyramid level {} would be {w}x{h}, smaller than {min_side}",
            levels - 1
        )));
    }
    Ok(())
}

pub(crate) fn checked_plane_pyramid(
    frame: &GrayFrame,
    levels: usize,
    scale: f32,
    min_side: usize,
) -> Result<Vec<Plane>> {
    check_pyramid(frame.width(), frame.height(), levels, scale, min_side)?;
    Ok(plane_pyramid(frame.to_plane(), levels, scale))
}

/// Gaussian pyramid of 8-bit frames. Level 0 is `frame` itself; every level must stay
/// at least `min_side` pixels (the polynomial neighbourhood) and no smaller than the
/// minimum frame side.
pub fn build_pyramid(
    frame: &GrayFrame,
    levels: usize,
    scale: f32,
    min_side: usize,
) -> Result<Vec<GrayFrame>> {
    let min_side = min_side.max(crate::imgcore::MIN_FRAME_SIDE);
    let planes = checked_plane_pyramid(frame, levels, scale, min_side)?;
    let mut out = Vec::with_capacity(levels);
    out.push(frame.clone());
    for p in &planes[1..] {
        out.push(p.to_frame()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_is_input() {
        let f = GrayFrame::from_fn(128, 128, |x, y| ((x ^ y) & 0xff) as u8).unwrap();
        let p = build_pyramid(&f, 1, 0.5, 5).unwrap();
        assert_eq!(p, vec![f]);
    }

    #[test]
    fn level_dimensions_halve() {
        let f = GrayFrame::filled(128, 128, 9).unwrap();
        let dims: Vec<_> = build_pyramid(&f, 3, 0.5, 5)
            .unwrap()
            .iter()
            .map(|l| (l.width(), l.height()))
            .collect();
        assert_eq!(dims, [(128, 128), (64, 64), (32, 32)]);
    }

    #[test]
    fn constant_frame_stays_constant() {
        let f = GrayFrame::filled(128, 96, 117).unwrap();
        for level in build_pyramid(&f, 4, 0.5, 5).unwrap() {
            assert!(level.data().iter().all(|&v| (v as i32 - 117).abs() <= 1));
        }
    }

    #[test]
    fn too_deep_pyramid_is_config_error() {
        let f = GrayFrame::filled(40, 40, 0).unwrap();
        assert!(matches!(
            build_pyramid(&f, 4, 0.5, 7),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_pyramid(&f, 0, 0.5, 7),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn box_mean_of_constant() {
        let p = Plane {
            width: 9,
            height: 7,
            data: vec![3.0; 63],
        };
        assert!(box_mean(&p, 5).data.iter().all(|v| (v - 3.0).abs() < 1e-5));
    }
}
