use super::config::RunConfig;
use crate::gmc::{compensate, GmcConfig};
use crate::imgcore::{AffineTransform, BoundingBox, GrayFrame, InstanceMask};
use crate::motion::{
    accumulate_and_classify, common_motion, mask_mean_horizontal_flow, ClassifierConfig,
    ResidualSample, Stability, StabilityVerdict,
};
use crate::optflow::{farneback_flow, FlowParams};
use crate::tracker::{assign_masks, Detection, TrackStatus, Tracker, TrackerConfig};
use crate::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;

/// Everything the per-frame analysis needs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalyzerConfig {
    pub fps: f64,
    pub seed: u64,
    pub flow: FlowParams,
    pub gmc: GmcConfig,
    pub tracker: TrackerConfig,
    pub classifier: ClassifierConfig,
}

impl AnalyzerConfig {
    pub fn from_run_config(cfg: &RunConfig, fps: f64) -> Self {
        Self {
            fps,
            seed: cfg.seed,
            flow: cfg.flow.clone(),
            gmc: cfg.gmc.clone(),
            tracker: cfg.tracker.clone(),
            classifier: cfg.classifier.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config("fps must be a positive number".into()));
        }
        self.flow.validate()?;
        self.gmc.validate()?;
        self.tracker.validate()?;
        self.classifier.validate()
    }
}

/// Camera-motion diagnostics for one frame pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GmcSummary {
    pub transform: AffineTransform,
    pub correspondences: usize,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
    pub mean_reprojection_error: f64,
    pub degraded: bool,
    pub validity_margin: usize,
    /// Mean `|u|` of the post-compensation flow inside the validity margin.
    pub interior_mean_abs_u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub track_id: u64,
    pub mask_label: u32,
    pub sample: ResidualSample,
    pub verdict: StabilityVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackRow {
    pub track_id: u64,
    pub status: TrackStatus,
    pub bbox: BoundingBox,
    pub mask_label: Option<u32>,
    pub stability: Stability,
    /// Residual of this frame, when one was measured.
    pub v_rel: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Alert {
    pub frame_index: u64,
    pub time_s: f64,
    pub track_id: u64,
    pub bbox: [u32; 4],
    pub accumulated_px: f64,
    pub sustained_frames: usize,
    pub threshold: f64,
}

/// Result of analysing one frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameReport {
    pub frame_index: u64,
    /// `None` for the first frame.
    pub gmc: Option<GmcSummary>,
    /// Tracks contributing a residual sample (N of the common-motion median).
    pub n_containers: usize,
    pub residuals: Vec<ResidualRow>,
    pub tracks: Vec<TrackRow>,
    pub alerts: Vec<Alert>,
}

struct Previous {
    frame_index: u64,
    frame: GrayFrame,
    masks: Vec<InstanceMask>,
    assignment: BTreeMap<u64, u32>,
}

/// Streaming analyser: feed frames in order, get one report per frame. Holds only
/// the previous frame and its masks.
pub struct Analyzer {
    cfg: AnalyzerConfig,
    tracker: Tracker,
    prev: Option<Previous>,
    frames: u64,
    degraded_frames: u64,
    alerts: u64,
}

/// Per-frame RANSAC seed derived from the run seed.
pub fn frame_seed(seed: u64, frame_index: u64) -> u64 {
    let mut z = seed ^ frame_index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Analyzer {
    pub fn new(cfg: AnalyzerConfig) -> Result<Self> {
        cfg.validate()?;
        let tracker = Tracker::new(cfg.tracker.clone())?;
        Ok(Self {
            cfg,
            tracker,
            prev: None,
            frames: 0,
            degraded_frames: 0,
            alerts: 0,
        })
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.cfg
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames
    }

    pub fn degraded_frames(&self) -> u64 {
        self.degraded_frames
    }

    pub fn alert_count(&self) -> u64 {
        self.alerts
    }

    /// Analyse the next frame. Frame indices must increase; frame size must not change.
    pub fn push_frame(
        &mut self,
        frame_index: u64,
        frame: GrayFrame,
        masks: Vec<InstanceMask>,
    ) -> Result<FrameReport> {
        if let Some(p) = &self.prev {
            if frame_index <= p.frame_index {
                return Err(Error::Contract(format!(
                    "frame {frame_index} pushed after frame {}",
                    p.frame_index
                )));
            }
            if !p.frame.same_size(&frame) {
                return Err(Error::data(
                    frame_index,
                    format!(
                        "frame is {}x{}, previous frames were {}x{}",
                        frame.width(),
                        frame.height(),
                        p.frame.width(),
                        p.frame.height()
                    ),
                ));
            }
        }
        for m in &masks {
            if m.width() != frame.width() || m.height() != frame.height() {
                return Err(Error::data(
                    frame_index,
                    format!("mask {} does not match the frame size", m.label()),
                ));
            }
        }

        let mut report = FrameReport {
            frame_index,
            gmc: None,
            n_containers: 0,
            residuals: Vec::new(),
            tracks: Vec::new(),
            alerts: Vec::new(),
        };

        // camera motion and residual flow against the previous frame
        let mut flow_state = None;
        if let Some(p) = &self.prev {
            let comp = compensate(
                &p.frame,
                &frame,
                &p.masks,
                &self.cfg.gmc,
                frame_seed(self.cfg.seed, frame_index),
            )?;
            let mut flow = farneback_flow(&p.frame, &comp.flow_input(&p.frame)?, &self.cfg.flow)?;
            flow.invalidate_border(comp.validity_margin);
            let stats = flow.interior_stats(comp.validity_margin);
            if comp.result.degraded {
                self.degraded_frames += 1;
            } else {
                self.tracker.apply_camera_motion(&comp.result.transform);
            }
            report.gmc = Some(GmcSummary {
                transform: comp.result.transform,
                correspondences: comp.result.correspondences,
                inlier_count: comp.result.inlier_count,
                inlier_ratio: comp.result.inlier_ratio,
                mean_reprojection_error: comp.result.mean_reprojection_error,
                degraded: comp.result.degraded,
                validity_margin: comp.validity_margin,
                interior_mean_abs_u: stats.mean_abs_u,
            });
            flow_state = Some((flow, comp.result.degraded));
        }

        let dets = masks
            .iter()
            .map(|m| Detection::from_mask(&frame, m))
            .collect::<Result<Vec<_>>>()?;
        self.tracker.step(frame_index, &dets)?;
        let assignment = assign_masks(self.tracker.tracks(), &masks, self.cfg.tracker.iou_gate);

        let mut v_rel_by_track = BTreeMap::new();
        if let (Some((flow, gmc_degraded)), Some(p)) = (&flow_state, &self.prev) {
            let cc = &self.cfg.classifier;
            // confirmed tracks with a mask in both frames; flow lives on the previous grid
            let mut measured: Vec<(u64, u32, Option<f64>)> = Vec::new();
            for t in self.tracker.tracks().iter().filter(|t| t.is_confirmed()) {
                let (Some(prev_label), Some(&label)) =
                    (p.assignment.get(&t.id), assignment.get(&t.id))
                else {
                    continue;
                };
                let mask = p
                    .masks
                    .iter()
                    .find(|m| m.label() == *prev_label)
                    .expect("assigned label exists");
                measured.push((
                    t.id,
                    label,
                    mask_mean_horizontal_flow(flow, mask, cc.min_valid_pixels)?,
                ));
            }
            report.n_containers = measured.len();
            let values: Vec<f64> = measured.iter().filter_map(|m| m.2).collect();
            let frame_missing =
                *gmc_degraded || measured.len() < cc.min_containers_n || values.is_empty();
            let v_common = if values.is_empty() {
                0.0
            } else {
                common_motion(&values)?
            };
            let samples: Vec<(u64, u32, ResidualSample)> = measured
                .iter()
                .map(|&(id, label, v)| {
                    let s = ResidualSample::new(
                        frame_index,
                        v.unwrap_or(v_common),
                        v_common,
                        frame_missing || v.is_none(),
                    );
                    (id, label, s)
                })
                .collect();
            let scene: Vec<f64> = samples
                .iter()
                .filter(|s| !s.2.degraded)
                .map(|s| s.2.v_rel)
                .collect();
            for (id, label, sample) in samples {
                let track = self.tracker.track_mut(id).expect("measured track is live");
                let before = track.stability;
                let verdict = accumulate_and_classify(track, sample, &scene, cc)?;
                if verdict.stability == Stability::Unstable && before != Stability::Unstable {
                    let b = track.bbox();
                    report.alerts.push(Alert {
                        frame_index,
                        time_s: frame_index as f64 / self.cfg.fps,
                        track_id: id,
                        bbox: [b.x, b.y, b.w, b.h],
                        accumulated_px: verdict.accumulated,
                        sustained_frames: verdict.sustained_frames,
                        threshold: verdict.threshold_used,
                    });
                }
                v_rel_by_track.insert(id, sample.v_rel);
                report.residuals.push(ResidualRow {
                    track_id: id,
                    mask_label: label,
                    sample,
                    verdict,
                });
            }
        }
        self.alerts += report.alerts.len() as u64;

        report.tracks = self
            .tracker
            .tracks()
            .iter()
            .map(|t| TrackRow {
                track_id: t.id,
                status: t.status,
                bbox: t.bbox(),
                mask_label: assignment.get(&t.id).copied(),
                stability: t.stability,
                v_rel: v_rel_by_track.get(&t.id).copied(),
            })
            .collect();

        self.prev = Some(Previous {
            frame_index,
            frame,
            masks,
            assignment,
        });
        self.frames += 1;
        Ok(report)
    }
}
