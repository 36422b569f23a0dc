//! Global affine motion compensation.
//!
//! Container regions are masked out, background corners are tracked from the
//! previous frame into the current one, and a RANSAC affine fit gives the camera
//! motion `M` (previous → current coordinates). The current frame is then resampled
//! at `M · p` so that it lines up with the previous frame.

mod features;
mod lk;
mod ransac;

pub use features::{detect_features, FeaturePoint};
pub use lk::{match_features, Correspondence, LkParams};
pub use ransac::{estimate_affine_ransac, fit_affine_least_squares, GmcResult, RansacParams};

use crate::imgcore::{validity_margin, warp_affine, BitGrid, GrayFrame, InstanceMask};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmcConfig {
    /// Dilation (px) applied to the union of container masks.
    pub mask_dilation: usize,
    pub max_features: usize,
    pub feature_quality: f64,
    pub min_feature_distance: f64,
    pub lk: LkParams,
    pub ransac: RansacParams,
}

impl Default for GmcConfig {
    fn default() -> Self {
        Self {
            mask_dilation: 5,
            max_features: 250,
            feature_quality: 0.01,
            min_feature_distance: 8.0,
            lk: LkParams::default(),
            ransac: RansacParams::default(),
        }
    }
}

impl GmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_features < 4 {
            return Err(Error::Config("max_features must be >= 4".into()));
        }
        if !(self.feature_quality > 0.0 && self.feature_quality < 1.0) {
            return Err(Error::Config("feature_quality must be in (0, 1)".into()));
        }
        if self.lk.window_radius == 0 || self.lk.pyramid_levels == 0 {
            return Err(Error::Config(
                "lk window_radius and pyramid_levels must be >= 1".into(),
            ));
        }
        let r = &self.ransac;
        if !(r.inlier_threshold.is_finite() && r.inlier_threshold > 0.0) || r.max_iterations == 0 {
            return Err(Error::Config(
                "ransac inlier_threshold and max_iterations must be positive".into(),
            ));
        }
        if !(r.confidence > 0.0 && r.confidence < 1.0) {
            return Err(Error::Config("ransac confidence must be in (0, 1)".into()));
        }
        if !(r.det_min > 0.0 && r.det_min < r.det_max) {
            return Err(Error::Config(
                "ransac det band must satisfy 0 < det_min < det_max".into(),
            ));
        }
        Ok(())
    }
}

/// Union of all container masks, dilated. Its complement is the background
/// from which camera motion is measured.
pub fn build_exclusion_mask(
    masks: &[InstanceMask],
    width: usize,
    height: usize,
    dilation: usize,
) -> Result<BitGrid> {
    let mut union = BitGrid::new(width, height);
    for m in masks {
        union.union_with(m.bits())?;
    }
    Ok(union.dilate(dilation))
}

/// Aligned current frame plus estimation diagnostics.
#[derive(Clone, Debug)]
pub struct Compensated {
    pub frame: GrayFrame,
    pub result: GmcResult,
    /// Border (px) of `frame` that may hold warp fill values.
    pub validity_margin: usize,
}

impl Compensated {
    /// The aligned frame with its validity band replaced by `reference` pixels.
    /// Flow is computed on this: the zero fill would otherwise form a hard edge
    /// that coarse pyramid levels smear far into the interior.
    pub fn flow_input(&self, reference: &GrayFrame) -> Result<GrayFrame> {
        if !reference.same_size(&self.frame) {
            return Err(Error::Contract("reference frame differs in size".into()));
        }
        let m = self.validity_margin;
        if m == 0 {
            return Ok(self.frame.clone());
        }
        let (w, h) = (self.frame.width(), self.frame.height());
        GrayFrame::from_fn(w, h, |x, y| {
            if x < m || y < m || x + m >= w || y + m >= h {
                reference.get(x, y)
            } else {
                self.frame.get(x, y)
            }
        })
    }
}

/// Estimate camera motion between `prev` and `cur` from background features and
/// resample `cur` into `prev`'s reference frame. A degraded estimate returns `cur`
/// unchanged with the flag set.
pub fn compensate(
    prev: &GrayFrame,
    cur: &GrayFrame,
    masks: &[InstanceMask],
    cfg: &GmcConfig,
    seed: u64,
) -> Result<Compensated> {
    if !prev.same_size(cur) {
        return Err(Error::Contract(format!(
            "frames differ in size: {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height()
        )));
    }
    let exclusion = build_exclusion_mask(masks, prev.width(), prev.height(), cfg.mask_dilation)?;
    let points = detect_features(
        prev,
        &exclusion,
        cfg.max_features,
        cfg.feature_quality,
        cfg.min_feature_distance,
    );
    let corrs = match_features(prev, cur, &points, &cfg.lk);
    let result = estimate_affine_ransac(&corrs, &cfg.ransac, seed);
    if result.degraded {
        return Ok(Compensated {
            frame: cur.clone(),
            result,
            validity_margin: 0,
        });
    }
    let frame = warp_affine(cur, &result.transform)?;
    let margin = validity_margin(&result.transform, cur.width(), cur.height());
    Ok(Compensated {
        frame,
        result,
        validity_margin: margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::BoundingBox;
    use crate::simulator::texture::textured_frame;

    #[test]
    fn exclusion_examples() {
        let empty = build_exclusion_mask(&[], 64, 64, 5).unwrap();
        assert!(empty.is_empty());

        let sq = InstanceMask::from_rect(1, 64, 64, BoundingBox::new(20, 20, 10, 10)).unwrap();
        let e0 = build_exclusion_mask(std::slice::from_ref(&sq), 64, 64, 0).unwrap();
        assert_eq!(&e0, sq.bits());

        let e2 = build_exclusion_mask(&[sq], 64, 64, 2).unwrap();
        assert_eq!(
            e2,
            BitGrid::from_rect(64, 64, BoundingBox::new(18, 18, 14, 14))
        );
    }

    #[test]
    fn incongruent_mask_is_contract_error() {
        let sq = InstanceMask::from_rect(1, 32, 32, BoundingBox::new(2, 2, 4, 4)).unwrap();
        assert!(matches!(
            build_exclusion_mask(&[sq], 64, 64, 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn static_scene_is_identity() {
        let f = textured_frame(160, 120, 21);
        let c = compensate(&f, &f, &[], &GmcConfig::default(), 1).unwrap();
        assert!(!c.result.degraded);
        assert!(
            c.result
                .transform
                .max_abs_diff(&crate::AffineTransform::IDENTITY)
                < 1e-3
        );
        assert_eq!(c.frame, f);
    }

    #[test]
    fn flow_input_replaces_only_the_band() {
        let f = textured_frame(64, 48, 4);
        let zero = GrayFrame::filled(64, 48, 0).unwrap();
        let c = Compensated {
            frame: zero,
            result: estimate_affine_ransac(&[], &RansacParams::default(), 0),
            validity_margin: 3,
        };
        let g = c.flow_input(&f).unwrap();
        assert_eq!(g.get(2, 20), f.get(2, 20));
        assert_eq!(g.get(61, 47), f.get(61, 47));
        assert_eq!(g.get(3, 3), 0);
        assert_eq!(g.get(60, 44), 0);
    }
}
