//! Synthetic container-stack scenes with exact ground truth.
//!
//! A scene is a textured background with textured rectangular containers. Each
//! frame is rendered by mapping every image pixel back into scene coordinates
//! through the inverse camera pose, so camera motion, container drift and the
//! resulting masks are all known exactly.
//!
//! `camera_path[t]` is the scene → image pose of frame `t`. The inter-frame camera
//! motion `M_t = pose_t ∘ pose_{t−1}⁻¹` maps previous-frame pixel coordinates to
//! current-frame ones, which is what motion compensation estimates.

mod emit;
pub mod presets;
pub mod texture;

pub use emit::{emit, scenario_hash, Manifest, GROUND_TRUTH_SCHEMA_VERSION};

use crate::imgcore::{AffineTransform, BitGrid, BoundingBox, GrayFrame, InstanceMask, Plane};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Lateral drift segment; active from `start_frame` until the next segment starts.
/// The per-frame displacement at frame `t` is `u_velocity + acceleration · (t − start_frame)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSegment {
    pub start_frame: usize,
    pub u_velocity: f64,
    #[serde(default)]
    pub acceleration: f64,
}

/// Half-open frame interval `[start_frame, end_frame)` during which a container's
/// mask is missing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occlusion {
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerSpec {
    pub label: u32,
    pub nominal_bbox: BoundingBox,
    pub texture_seed: u64,
    #[serde(default)]
    pub drift: Vec<DriftSegment>,
    #[serde(default)]
    pub occluded: Vec<Occlusion>,
}

impl ContainerSpec {
    pub fn new(label: u32, nominal_bbox: BoundingBox, texture_seed: u64) -> Self {
        Self {
            label,
            nominal_bbox,
            texture_seed,
            drift: Vec::new(),
            occluded: Vec::new(),
        }
    }

    /// Lateral displacement between frame `t − 1` and frame `t` (0 at `t = 0`).
    pub fn velocity_at(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.drift
            .iter()
            .rev()
            .find(|s| s.start_frame <= t)
            .map_or(0.0, |s| {
                s.u_velocity + s.acceleration * (t - s.start_frame) as f64
            })
    }

    /// Integrated lateral offset from the nominal position at frame `t`.
    pub fn offset_at(&self, t: usize) -> f64 {
        (1..=t).map(|s| self.velocity_at(s)).sum()
    }

    pub fn is_occluded(&self, t: usize) -> bool {
        self.occluded
            .iter()
            .any(|o| (o.start_frame..o.end_frame).contains(&t))
    }

    pub fn is_drifting(&self, t: usize) -> bool {
        self.velocity_at(t) != 0.0
    }
}

fn default_intensity_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// `[width, height]` in pixels.
    pub frame_size: [usize; 2],
    pub fps: f64,
    pub duration: usize,
    pub containers: Vec<ContainerSpec>,
    /// Scene → image pose per frame.
    pub camera_path: Vec<AffineTransform>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Intensity added per frame (can be negative).
    #[serde(default)]
    pub illumination_drift: f64,
    /// Multiplier on rendered intensities; values well below 1 give night scenes.
    #[serde(default = "default_intensity_scale")]
    pub intensity_scale: f64,
    pub seed: u64,
}

/// Exact per-frame truth accompanying a rendered frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_index: usize,
    /// Scene → image pose.
    pub camera_pose: AffineTransform,
    /// Previous-frame → current-frame camera motion (identity at frame 0).
    pub camera_motion: AffineTransform,
    /// Scene-space lateral displacement of each container since the previous frame.
    pub per_container_u: BTreeMap<u32, f64>,
}

/// One rendered frame.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub frame: GrayFrame,
    pub masks: Vec<InstanceMask>,
    pub truth: GroundTruth,
}

impl Scenario {
    pub fn width(&self) -> usize {
        self.frame_size[0]
    }

    pub fn height(&self) -> usize {
        self.frame_size[1]
    }

    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.frame_size;
        if w < crate::imgcore::MIN_FRAME_SIDE || h < crate::imgcore::MIN_FRAME_SIDE {
            return Err(Error::Config(format!("frame_size {w}x{h} too small")));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        if self.camera_path.len() != self.duration {
            return Err(Error::Config(format!(
                "camera_path has {} poses for duration {}",
                self.camera_path.len(),
                self.duration
            )));
        }
        for (t, pose) in self.camera_path.iter().enumerate() {
            let det = pose.determinant();
            if !pose.is_finite() || !(0.8..=1.25).contains(&det) {
                return Err(Error::Config(format!(
                    "camera pose at frame {t} has determinant {det} outside [0.8, 1.25]"
                )));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0)
            || !(self.intensity_scale.is_finite() && self.intensity_scale > 0.0)
        {
            return Err(Error::Config(
                "noise_sigma must be >= 0 and intensity_scale > 0".into(),
            ));
        }
        let mut labels = std::collections::BTreeSet::new();
        for c in &self.containers {
            if c.label == 0 || !labels.insert(c.label) {
                return Err(Error::Config(format!(
                    "container label {} is zero or duplicated",
                    c.label
                )));
            }
            let b = c.nominal_bbox;
            if b.w == 0 || b.h == 0 || b.right() as usize > w || b.bottom() as usize > h {
                return Err(Error::Config(format!(
                    "container {} box {b:?} outside the frame",
                    c.label
                )));
            }
            if c.drift
                .windows(2)
                .any(|p| p[0].start_frame >= p[1].start_frame)
            {
                return Err(Error::Config(format!(
                    "container {} drift segments overlap or are unordered",
                    c.label
                )));
            }
            for o in &c.occluded {
                if o.start_frame >= o.end_frame || o.end_frame > self.duration {
                    return Err(Error::Config(format!(
                        "container {} occlusion {o:?} not within duration {}",
                        c.label, self.duration
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "scenario line {} column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn camera_motion(&self, t: usize) -> Result<AffineTransform> {
        if t == 0 {
            return Ok(AffineTransform::IDENTITY);
        }
        Ok(self.camera_path[t].compose(&self.camera_path[t - 1].inverse()?))
    }

    pub fn container(&self, label: u32) -> Option<&ContainerSpec> {
        self.containers.iter().find(|c| c.label == label)
    }
}

/// Scenario with its textures prepared, ready to render any frame.
pub struct Renderer<'a> {
    scenario: &'a Scenario,
    background: Plane,
    /// scene coordinate of background pixel (0, 0)
    pad: f64,
    textures: Vec<Plane>,
}

impl<'a> Renderer<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let (w, h) = (scenario.width(), scenario.height());
        // enough background to cover every pose's view of the frame
        let mut reach = 0.0f64;
        for pose in &scenario.camera_path {
            let inv = pose.inverse()?;
            for (x, y) in [
                (0.0, 0.0),
                (w as f64, 0.0),
                (0.0, h as f64),
                (w as f64, h as f64),
            ] {
                let (sx, sy) = inv.apply(x, y);
                reach = reach
                    .max(-sx)
                    .max(-sy)
                    .max(sx - w as f64)
                    .max(sy - h as f64);
            }
        }
        let pad = (reach.ceil() + 8.0).max(8.0);
        let bw = w + 2 * pad as usize;
        let bh = h + 2 * pad as usize;
        let background =
            texture::noise_texture(bw, bh, scenario.seed ^ 0x9e37_79b9_7f4a_7c15, 60.0, 190.0);
        let textures = scenario
            .containers
            .iter()
            .map(|c| {
                let b = c.nominal_bbox;
                texture::noise_texture(
                    b.w as usize + 2,
                    b.h as usize + 2,
                    c.texture_seed,
                    15.0,
                    240.0,
                )
            })
            .collect();
        Ok(Self {
            scenario,
            background,
            pad,
            textures,
        })
    }

    pub fn render(&self, t: usize) -> Result<RenderedFrame> {
        let sc = self.scenario;
        if t >= sc.duration {
            return Err(Error::Contract(format!(
                "frame {t} outside scenario duration {}",
                sc.duration
            )));
        }
        let (w, h) = (sc.width(), sc.height());
        let pose = sc.camera_path[t];
        let inv = pose.inverse()?;
        let offsets: Vec<f64> = sc.containers.iter().map(|c| c.offset_at(t)).collect();
        let mut owner: Vec<Option<usize>> = vec![None; w * h];
        let mut values = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                // later containers are drawn on top
                // footprint covers pixel centres, i.e. [x0 - 0.5, x0 + w - 0.5)
                let hit = sc.containers.iter().enumerate().rev().find(|(i, c)| {
                    let b = c.nominal_bbox;
                    let x0 = b.x as f64 + offsets[*i] - 0.5;
                    let y0 = b.y as f64 - 0.5;
                    sx >= x0 && sx < x0 + b.w as f64 && sy >= y0 && sy < y0 + b.h as f64
                });
                let v = match hit {
                    Some((i, c)) => {
                        owner[y * w + x] = Some(i);
                        let b = c.nominal_bbox;
                        let lx = sx - (b.x as f64 + offsets[i]) + 1.0;
                        let ly = sy - b.y as f64 + 1.0;
                        self.textures[i].sample_clamped(lx as f32, ly as f32)
                    }
                    None => self
                        .background
                        .sample_clamped((sx + self.pad) as f32, (sy + self.pad) as f32),
                };
                values.push(v as f64);
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(sc.seed, t));
        let noise =
            Normal::new(0.0, sc.noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
        let shift = sc.illumination_drift * t as f64;
        let data = values
            .into_iter()
            .map(|v| {
                let n = if sc.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                (v * sc.intensity_scale + shift + n)
                    .round()
                    .clamp(0.0, 255.0) as u8
            })
            .collect();
        let frame = GrayFrame::new(w, h, data)?;

        let mut masks = Vec::new();
        for (i, c) in sc.containers.iter().enumerate() {
            if c.is_occluded(t) {
                continue;
            }
            let mut bits = BitGrid::new(w, h);
            for (idx, o) in owner.iter().enumerate() {
                if *o == Some(i) {
                    bits.set(idx % w, idx / w, true);
                }
            }
            if bits.is_empty() {
                continue;
            }
            masks.push(InstanceMask::new(c.label, bits)?);
        }

        let truth = GroundTruth {
            frame_index: t,
            camera_pose: pose,
            camera_motion: sc.camera_motion(t)?,
            per_container_u: sc
                .containers
                .iter()
                .map(|c| (c.label, c.velocity_at(t)))
                .collect(),
        };
        Ok(RenderedFrame {
            frame,
            masks,
            truth,
        })
    }
}

fn frame_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d)
        .wrapping_add((t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Render frame `t` of `scenario`. Prefer [`Renderer`] when rendering many frames.
pub fn render(scenario: &Scenario, t: usize) -> Result<RenderedFrame> {
    Renderer::new(scenario)?.render(t)
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    #[test]
    fn identity_camera_puts_containers_at_nominal() {
        let sc = static_stack(3, 8, AffineTransform::IDENTITY, 0.0, 1);
        let r = render(&sc, 0).unwrap();
        assert_eq!(r.masks.len(), 8);
        for m in &r.masks {
            assert_eq!(m.bbox(), sc.container(m.label()).unwrap().nominal_bbox);
        }
    }

    #[test]
    fn camera_translation_shifts_masks_exactly() {
        let base = static_stack(2, 6, AffineTransform::IDENTITY, 0.0, 2);
        let mut moved = base.clone();
        moved.camera_path[1] = AffineTransform::translation(5.0, 0.0);
        let a = render(&base, 1).unwrap();
        let b = render(&moved, 1).unwrap();
        for (ma, mb) in a.masks.iter().zip(&b.masks) {
            let (ba, bb) = (ma.bbox(), mb.bbox());
            assert_eq!((bb.x, bb.y, bb.w, bb.h), (ba.x + 5, ba.y, ba.w, ba.h));
        }
    }

    #[test]
    fn drift_integrates_into_centroid() {
        let mut sc = static_stack(12, 8, AffineTransform::IDENTITY, 0.0, 3);
        sc.containers[3].drift = vec![
            DriftSegment {
                start_frame: 1,
                u_velocity: 0.5,
                acceleration: 0.0,
            },
            DriftSegment {
                start_frame: 11,
                u_velocity: 0.0,
                acceleration: 0.0,
            },
        ];
        let r0 = render(&sc, 0).unwrap();
        let r = render(&sc, 11).unwrap();
        let label = sc.containers[3].label;
        let c0 = r0
            .masks
            .iter()
            .find(|m| m.label() == label)
            .unwrap()
            .centroid();
        let c1 = r
            .masks
            .iter()
            .find(|m| m.label() == label)
            .unwrap()
            .centroid();
        let n0 = r0.masks[0].centroid();
        let n1 = r.masks[0].centroid();
        let rel = (c1.0 - c0.0) - (n1.0 - n0.0);
        assert!((rel - 5.0).abs() <= 0.5, "relative displacement {rel}");
        assert_eq!(r.truth.per_container_u[&label], 0.0);
        assert_eq!(render(&sc, 5).unwrap().truth.per_container_u[&label], 0.5);
    }

    #[test]
    fn out_of_range_frame_is_contract_error() {
        let sc = static_stack(4, 4, AffineTransform::IDENTITY, 0.0, 1);
        assert!(matches!(render(&sc, 4), Err(Error::Contract(_))));
    }

    #[test]
    fn occluded_frames_drop_the_mask() {
        let mut sc = static_stack(10, 4, AffineTransform::IDENTITY, 0.0, 1);
        sc.containers[1].occluded = vec![Occlusion {
            start_frame: 3,
            end_frame: 8,
        }];
        let renderer = Renderer::new(&sc).unwrap();
        let missing = (0..10)
            .filter(|&t| {
                !renderer
                    .render(t)
                    .unwrap()
                    .masks
                    .iter()
                    .any(|m| m.label() == sc.containers[1].label)
            })
            .count();
        assert_eq!(missing, 5);
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        let mut sc = static_stack(4, 4, AffineTransform::IDENTITY, 0.0, 1);
        sc.camera_path.pop();
        assert!(sc.validate().is_err());
        let mut sc = static_stack(4, 4, AffineTransform::IDENTITY, 0.0, 1);
        sc.camera_path[2] = AffineTransform::new(2.0, 0.0, 0.0, 2.0, 0.0, 0.0);
        assert!(sc.validate().is_err());
        let mut sc = static_stack(4, 4, AffineTransform::IDENTITY, 0.0, 1);
        sc.containers[0].occluded = vec![Occlusion {
            start_frame: 2,
            end_frame: 9,
        }];
        assert!(sc.validate().is_err());
    }

    #[test]
    fn ground_truth_motion_matches_centroids() {
        // every mask centroid sits within rounding of the exact centroid implied by
        // the camera pose and integrated drift
        let mut sc = swaying_stack(30, 8, 4.0, 0.5, 0.0, 5);
        sc.containers[0].drift = vec![DriftSegment {
            start_frame: 10,
            u_velocity: -0.7,
            acceleration: 0.0,
        }];
        let renderer = Renderer::new(&sc).unwrap();
        for t in 0..30 {
            let r = renderer.render(t).unwrap();
            for m in &r.masks {
                let c = sc.container(m.label()).unwrap();
                let b = c.nominal_bbox;
                let sx = b.x as f64 + c.offset_at(t) + (b.w as f64 - 1.0) / 2.0;
                let sy = b.y as f64 + (b.h as f64 - 1.0) / 2.0;
                let (ex, ey) = r.truth.camera_pose.apply(sx, sy);
                let (cx, cy) = m.centroid();
                assert!(
                    (cx - ex).abs() <= 0.5,
                    "t={t} label={} x {cx} vs {ex}",
                    m.label()
                );
                assert!(
                    (cy - ey).abs() <= 0.5,
                    "t={t} label={} y {cy} vs {ey}",
                    m.label()
                );
            }
        }
    }
}
