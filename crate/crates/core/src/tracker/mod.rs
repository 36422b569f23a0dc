//! Online multi-object tracking of containers.
//!
//! Each track carries a constant-velocity Kalman filter over its box. Per frame,
//! tracks are predicted, matched to detections by a Hungarian assignment on a
//! blend of IoU and appearance (intensity histogram) distance, and then updated,
//! confirmed or aged out. [`assign_masks`] links tracks back to segmentation
//! instances so motion can be measured inside each container's mask.

mod hungarian;
mod kalman;

pub use hungarian::solve as hungarian;
pub use kalman::{
    kalman_predict, kalman_update, measurement_of, KalmanBoxState, KalmanParams, Matrix8, Vector8,
};

use crate::imgcore::{iou_rect, AffineTransform, BoundingBox, GrayFrame, InstanceMask};
use crate::motion::{RingSample, Stability};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

pub const HISTOGRAM_BINS: usize = 32;

pub type Histogram = [f64; HISTOGRAM_BINS];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Consecutive matches needed to confirm a track.
    pub n_init: u32,
    /// A track is deleted once its consecutive misses exceed this.
    pub max_age: u32,
    /// Pairs with IoU below this are never associated.
    pub iou_gate: f64,
    /// Weight of the IoU term in the association cost; appearance gets `1 − λ`.
    pub lambda: f64,
    /// Weight kept by the old appearance when blending in a new detection.
    pub appearance_momentum: f64,
    pub kalman: KalmanParams,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            n_init: 3,
            max_age: 15,
            iou_gate: 0.2,
            lambda: 0.7,
            appearance_momentum: 0.9,
            kalman: KalmanParams::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 {
            return Err(Error::Config("tracker n_init must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_gate) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(
                "tracker iou_gate and lambda must be in [0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.appearance_momentum) {
            return Err(Error::Config(
                "tracker appearance_momentum must be in [0, 1)".into(),
            ));
        }
        let k = &self.kalman;
        if !(k.std_weight_position > 0.0
            && k.std_weight_velocity > 0.0
            && k.std_weight_measurement > 0.0)
        {
            return Err(Error::Config(
                "kalman noise weights must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One segmented container in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub mask_label: u32,
    pub appearance: Histogram,
}

impl Detection {
    /// Box and normalized intensity histogram of `mask` over `frame`.
    pub fn from_mask(frame: &GrayFrame, mask: &InstanceMask) -> Result<Self> {
        if frame.width() != mask.width() || frame.height() != mask.height() {
            return Err(Error::Contract(format!(
                "mask {} is {}x{}, frame is {}x{}",
                mask.label(),
                mask.width(),
                mask.height(),
                frame.width(),
                frame.height()
            )));
        }
        let mut counts = [0u32; HISTOGRAM_BINS];
        for (x, y) in mask.bits().iter_set() {
            counts[frame.get(x, y) as usize * HISTOGRAM_BINS / 256] += 1;
        }
        let n = mask.pixel_count() as f64;
        let mut appearance = [0.0; HISTOGRAM_BINS];
        for (a, c) in appearance.iter_mut().zip(counts) {
            *a = c as f64 / n;
        }
        Ok(Self {
            bbox: mask.bbox(),
            mask_label: mask.label(),
            appearance,
        })
    }
}

pub fn cosine_distance(a: &Histogram, b: &Histogram) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Deleted => "deleted",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrackState {
    pub id: u64,
    pub kalman: KalmanBoxState,
    pub status: TrackStatus,
    /// Consecutive frames matched.
    pub hits: u32,
    /// Consecutive frames unmatched.
    pub misses: u32,
    pub appearance: Histogram,
    /// Most recent residual samples, oldest first.
    pub residual_ring: VecDeque<RingSample>,
    /// Sum of surviving `|v_rel|` over the ring (px).
    pub accumulator: f64,
    pub stability: Stability,
    /// Label of the detection matched this frame, if any.
    pub last_detection: Option<u32>,
}

impl TrackState {
    fn new(id: u64, det: &Detection, cfg: &TrackerConfig) -> Self {
        Self {
            id,
            kalman: KalmanBoxState::initiate(&det.bbox, &cfg.kalman),
            status: TrackStatus::Tentative,
            hits: 1,
            misses: 0,
            appearance: det.appearance,
            residual_ring: VecDeque::new(),
            accumulator: 0.0,
            stability: Stability::Stable,
            last_detection: Some(det.mask_label),
        }
    }

    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    /// Current box estimate, rounded to integer pixels and clipped at zero.
    pub fn bbox(&self) -> BoundingBox {
        let r = self.kalman.rect();
        let x0 = r.x.round().max(0.0);
        let y0 = r.y.round().max(0.0);
        let x1 = (r.x + r.w).round().max(x0 + 1.0);
        let y1 = (r.y + r.h).round().max(y0 + 1.0);
        BoundingBox::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Association {
    /// `(track_id, detection_index)` pairs.
    pub matches: Vec<(u64, usize)>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_detections: Vec<usize>,
}

// Costs closer than this count as ties; the lower track id then wins.
const TIE_EPS: f64 = 1e-9;
const FORBIDDEN: f64 = 1e6;

/// Match tracks to detections by minimum total cost
/// `λ·(1 − IoU) + (1 − λ)·cosine_distance`, with pairs below the IoU gate excluded.
pub fn associate(tracks: &[TrackState], dets: &[Detection], cfg: &TrackerConfig) -> Association {
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by_key(|&i| tracks[i].id);
    let (rows, cols) = (order.len(), dets.len());
    let mut cost = vec![FORBIDDEN; rows * cols];
    for (r, &ti) in order.iter().enumerate() {
        let t = &tracks[ti];
        let pred = t.kalman.rect();
        for (c, d) in dets.iter().enumerate() {
            let overlap = iou_rect(&pred, &d.bbox.to_rect());
            if overlap >= cfg.iou_gate && overlap > 0.0 {
                let app = cosine_distance(&t.appearance, &d.appearance);
                cost[r * cols + c] = cfg.lambda * (1.0 - overlap)
                    + (1.0 - cfg.lambda) * app
                    + TIE_EPS * (r + 1) as f64;
            }
        }
    }
    let solution = hungarian(&cost, rows, cols);
    let mut out = Association::default();
    let mut det_used = vec![false; cols];
    for (r, &ti) in order.iter().enumerate() {
        match solution[r] {
            Some(c) if cost[r * cols + c] < FORBIDDEN => {
                det_used[c] = true;
                out.matches.push((tracks[ti].id, c));
            }
            _ => out.unmatched_tracks.push(tracks[ti].id),
        }
    }
    out.unmatched_detections = (0..cols).filter(|&c| !det_used[c]).collect();
    out
}

/// Greedy descending-IoU pairing of tracks (current box estimate) with mask boxes;
/// each track and each mask is used at most once.
pub fn assign_masks(
    tracks: &[TrackState],
    masks: &[InstanceMask],
    iou_gate: f64,
) -> BTreeMap<u64, u32> {
    let mut pairs = Vec::new();
    for t in tracks.iter().filter(|t| t.status != TrackStatus::Deleted) {
        let r = t.kalman.rect();
        for m in masks {
            let overlap = iou_rect(&r, &m.bbox().to_rect());
            if overlap > 0.0 && overlap >= iou_gate {
                pairs.push((overlap, t.id, m.label()));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = BTreeMap::new();
    let mut used_masks = Vec::new();
    for (_, id, label) in pairs {
        if out.contains_key(&id) || used_masks.contains(&label) {
            continue;
        }
        out.insert(id, label);
        used_masks.push(label);
    }
    out
}

/// Stateful tracker: owns the live tracks and the id counter.
#[derive(Clone, Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<TrackState>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live tracks in ascending id order.
    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    pub fn tracks_mut(&mut self) -> &mut [TrackState] {
        &mut self.tracks
    }

    pub fn track(&self, id: u64) -> Option<&TrackState> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn track_mut(&mut self, id: u64) -> Option<&mut TrackState> {
        self.tracks.iter_mut().find(|t| t.id == id)
    }

    /// Total number of tracks ever created.
    pub fn tracks_created(&self) -> u64 {
        self.next_id - 1
    }

    /// Re-express every track in the coordinates of the next frame, given the
    /// camera motion `m` (previous → current).
    pub fn apply_camera_motion(&mut self, m: &AffineTransform) {
        for t in &mut self.tracks {
            t.kalman = t.kalman.transformed(m);
        }
    }

    /// Advance one frame. Returns the ids of tracks deleted by this step.
    pub fn step(&mut self, frame_index: u64, dets: &[Detection]) -> Result<Vec<u64>> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::Contract(format!(
                    "tracker stepped with frame {frame_index} after frame {last}"
                )));
            }
        }
        self.last_frame = Some(frame_index);
        let cfg = &self.cfg;
        for t in &mut self.tracks {
            t.kalman = kalman_predict(&t.kalman, &cfg.kalman);
            t.last_detection = None;
        }
        let assoc = associate(&self.tracks, dets, cfg);
        for &(id, di) in &assoc.matches {
            let d = &dets[di];
            let t = self
                .tracks
                .iter_mut()
                .find(|t| t.id == id)
                .expect("matched id is live");
            t.kalman = kalman_update(&t.kalman, &d.bbox, &cfg.kalman);
            t.hits += 1;
            t.misses = 0;
            t.last_detection = Some(d.mask_label);
            let m = cfg.appearance_momentum;
            let mut sum = 0.0;
            for (a, b) in t.appearance.iter_mut().zip(&d.appearance) {
                *a = m * *a + (1.0 - m) * b;
                sum += *a;
            }
            if sum > 0.0 {
                t.appearance.iter_mut().for_each(|a| *a /= sum);
            }
            if t.status == TrackStatus::Tentative && t.hits >= cfg.n_init {
                t.status = TrackStatus::Confirmed;
            }
        }
        for &id in &assoc.unmatched_tracks {
            let t = self
                .tracks
                .iter_mut()
                .find(|t| t.id == id)
                .expect("unmatched id is live");
            t.hits = 0;
            t.misses += 1;
            if t.status == TrackStatus::Tentative || t.misses > cfg.max_age {
                t.status = TrackStatus::Deleted;
            }
        }
        let mut deleted = Vec::new();
        self.tracks.retain(|t| {
            if t.status == TrackStatus::Deleted {
                deleted.push(t.id);
                false
            } else {
                true
            }
        });
        for &di in &assoc.unmatched_detections {
            let mut t = TrackState::new(self.next_id, &dets[di], cfg);
            if cfg.n_init <= 1 {
                t.status = TrackStatus::Confirmed;
            }
            self.tracks.push(t);
            self.next_id += 1;
        }
        Ok(deleted)
    }
}
