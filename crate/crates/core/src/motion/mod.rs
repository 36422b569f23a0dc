//! Residual container motion and instability classification.
//!
//! Per frame, the horizontal flow is averaged inside each container mask
//! (`v_abs`), the median over containers is taken as the common motion of the
//! stack (`v_common`), and each container's residual `v_rel = v_abs − v_common` is
//! pushed into its track's window. Within the window, samples that are IQR
//! outliers are suppressed, and a container is declared unstable once its residual
//! stays above a scene-adaptive threshold for `sustain_m` surviving samples in a row.

use crate::imgcore::InstanceMask;
use crate::optflow::FlowField;
use crate::tracker::TrackState;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Residual window length (samples).
    pub window_w: usize,
    pub iqr_k: f64,
    /// Floor of the adaptive threshold (px/frame).
    pub min_abs_threshold: f64,
    /// Multiplier on the scene residual IQR.
    pub adaptive_k: f64,
    /// Run length that makes a container unstable.
    pub sustain_m: usize,
    /// Frames with fewer measured containers are treated as missing.
    pub min_containers_n: usize,
    /// Minimum flow-valid pixels inside a mask for a usable `v_abs`.
    pub min_valid_pixels: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            window_w: 30,
            iqr_k: 1.5,
            min_abs_threshold: 0.3,
            adaptive_k: 3.0,
            sustain_m: 10,
            min_containers_n: 4,
            min_valid_pixels: 25,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sustain_m == 0 || self.window_w < self.sustain_m {
            return Err(Error::Config(
                "classifier needs window_w >= sustain_m >= 1".into(),
            ));
        }
        if !(self.min_abs_threshold > 0.0 && self.adaptive_k > 0.0 && self.iqr_k > 0.0) {
            return Err(Error::Config(
                "classifier min_abs_threshold, adaptive_k and iqr_k must be positive".into(),
            ));
        }
        if self.min_valid_pixels == 0 {
            return Err(Error::Config(
                "classifier min_valid_pixels must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Run length at which a container becomes suspect.
    pub fn suspect_m(&self) -> usize {
        self.sustain_m.div_ceil(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub frame_index: u64,
    pub v_abs: f64,
    pub v_common: f64,
    pub v_rel: f64,
    /// Not usable (GMC degraded, too few valid flow pixels, or too few containers).
    pub degraded: bool,
}

impl ResidualSample {
    pub fn new(frame_index: u64, v_abs: f64, v_common: f64, degraded: bool) -> Self {
        Self {
            frame_index,
            v_abs,
            v_common,
            v_rel: relative_motion(v_abs, v_common),
            degraded,
        }
    }
}

/// A window entry: the sample and the threshold in force when it was taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingSample {
    pub sample: ResidualSample,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Suspect,
    Unstable,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Suspect => "suspect",
            Stability::Unstable => "unstable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub track_id: u64,
    pub frame_index: u64,
    pub stability: Stability,
    /// Sum of surviving `|v_rel|` in the window (px).
    pub accumulated: f64,
    pub threshold_used: f64,
    pub sustained_frames: usize,
    /// Whether this frame's own sample was suppressed.
    pub suppressed: bool,
}

/// Mean horizontal flow over mask pixels that are also flow-valid. `Ok(None)` when
/// fewer than `min_valid` such pixels exist.
pub fn mask_mean_horizontal_flow(
    flow: &FlowField,
    mask: &InstanceMask,
    min_valid: usize,
) -> Result<Option<f64>> {
    if flow.width() != mask.width() || flow.height() != mask.height() {
        return Err(Error::Contract(format!(
            "mask {} is {}x{}, flow is {}x{}",
            mask.label(),
            mask.width(),
            mask.height(),
            flow.width(),
            flow.height()
        )));
    }
    let u = flow.u();
    let w = flow.width();
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (x, y) in mask.bits().iter_set() {
        if flow.is_valid(x, y) {
            sum += u[y * w + x] as f64;
            n += 1;
        }
    }
    Ok((n >= min_valid.max(1)).then(|| sum / n as f64))
}

/// Median of `values`; the mean of the two central values for even counts.
pub fn common_motion(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::NoContainers);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn relative_motion(v_abs: f64, v_common: f64) -> f64 {
    v_abs - v_common
}

/// Linear-interpolation quantile of sorted data, `q` in [0, 1].
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(Q1, Q3)` by linear interpolation; `None` for empty input.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some((quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75)))
}

/// Suppression flags for a window, parallel to `samples`.
#[derive(Clone, Debug, PartialEq)]
pub struct IqrFiltered {
    pub suppressed: Vec<bool>,
    pub suppressed_count: usize,
}

/// Flag samples whose `|v_rel|` falls outside the `k`-IQR fences of the usable
/// samples in the window. Degraded samples are always flagged; with fewer than
/// four usable samples nothing else is.
pub fn iqr_filter(samples: &[ResidualSample], k: f64) -> IqrFiltered {
    let usable: Vec<f64> = samples
        .iter()
        .filter(|s| !s.degraded)
        .map(|s| s.v_rel.abs())
        .collect();
    let fences = if usable.len() >= 4 {
        quartiles(&usable).map(|(q1, q3)| {
            let iqr = q3 - q1;
            (q1 - k * iqr, q3 + k * iqr)
        })
    } else {
        None
    };
    let suppressed: Vec<bool> = samples
        .iter()
        .map(|s| {
            s.degraded
                || fences.is_some_and(|(lo, hi)| {
                    let a = s.v_rel.abs();
                    a < lo || a > hi
                })
        })
        .collect();
    let suppressed_count = suppressed.iter().filter(|&&b| b).count();
    IqrFiltered {
        suppressed,
        suppressed_count,
    }
}

/// `max(min_abs_threshold, adaptive_k · IQR(scene residuals))`.
pub fn adaptive_threshold(scene_residuals: &[f64], cfg: &ClassifierConfig) -> f64 {
    let iqr = quartiles(scene_residuals).map_or(0.0, |(q1, q3)| q3 - q1);
    cfg.min_abs_threshold.max(cfg.adaptive_k * iqr)
}

/// Length of the newest run of surviving samples above their thresholds.
/// Suppressed entries neither extend nor break the run.
pub fn sustained_run(ring: &[RingSample], suppressed: &[bool]) -> usize {
    let mut run = 0;
    for (e, &skip) in ring.iter().zip(suppressed).rev() {
        if skip {
            continue;
        }
        if e.sample.v_rel.abs() > e.threshold {
            run += 1;
        } else {
            break;
        }
    }
    run
}

pub fn classify(sustained: usize, cfg: &ClassifierConfig) -> Stability {
    if sustained >= cfg.sustain_m {
        Stability::Unstable
    } else if sustained >= cfg.suspect_m() {
        Stability::Suspect
    } else {
        Stability::Stable
    }
}

/// Push `sample` into the track's window and re-evaluate its stability.
/// `scene_residuals` are the usable `v_rel` of all containers this frame.
pub fn accumulate_and_classify(
    track: &mut TrackState,
    sample: ResidualSample,
    scene_residuals: &[f64],
    cfg: &ClassifierConfig,
) -> Result<StabilityVerdict> {
    if let Some(last) = track.residual_ring.back() {
        if sample.frame_index <= last.sample.frame_index {
            return Err(Error::Contract(format!(
                "track {}: sample for frame {} after frame {}",
                track.id, sample.frame_index, last.sample.frame_index
            )));
        }
    }
    let threshold = adaptive_threshold(scene_residuals, cfg);
    track
        .residual_ring
        .push_back(RingSample { sample, threshold });
    while track.residual_ring.len() > cfg.window_w {
        track.residual_ring.pop_front();
    }
    let ring: Vec<RingSample> = track.residual_ring.iter().copied().collect();
    let samples: Vec<ResidualSample> = ring.iter().map(|e| e.sample).collect();
    let filtered = iqr_filter(&samples, cfg.iqr_k);
    track.accumulator = ring
        .iter()
        .zip(&filtered.suppressed)
        .filter(|(_, &s)| !s)
        .map(|(e, _)| e.sample.v_rel.abs())
        .sum();
    let sustained = sustained_run(&ring, &filtered.suppressed);
    track.stability = classify(sustained, cfg);
    Ok(StabilityVerdict {
        track_id: track.id,
        frame_index: sample.frame_index,
        stability: track.stability,
        accumulated: track.accumulator,
        threshold_used: threshold,
        sustained_frames: sustained,
        suppressed: *filtered.suppressed.last().expect("ring is non-empty"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::BoundingBox;
    use crate::tracker::{Detection, Tracker, TrackerConfig};
    use proptest::prelude::*;

    fn sample(frame: u64, v_rel: f64) -> ResidualSample {
        ResidualSample::new(frame, v_rel, 0.0, false)
    }

    fn new_track() -> TrackState {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        let det = Detection {
            bbox: BoundingBox::new(0, 0, 10, 10),
            mask_label: 1,
            appearance: [1.0 / 32.0; 32],
        };
        tracker.step(0, &[det]).unwrap();
        tracker.tracks()[0].clone()
    }

    #[test]
    fn mask_mean_examples() {
        let m = InstanceMask::from_rect(1, 32, 32, BoundingBox::new(4, 4, 10, 10)).unwrap();
        let f = FlowField::uniform(32, 32, 1.5, 0.0);
        assert_eq!(mask_mean_horizontal_flow(&f, &m, 25).unwrap(), Some(1.5));

        let f = FlowField::from_fn(32, 32, |x, y| {
            if m.bits().get(x, y) {
                (2.0, 0.0)
            } else {
                (-7.0, 0.0)
            }
        });
        assert_eq!(mask_mean_horizontal_flow(&f, &m, 25).unwrap(), Some(2.0));

        // 100 px mask: first 6 rows u=1, last 4 rows u=2
        let f = FlowField::from_fn(32, 32, |_, y| if y < 10 { (1.0, 0.0) } else { (2.0, 0.0) });
        let v = mask_mean_horizontal_flow(&f, &m, 25).unwrap().unwrap();
        assert!((v - 1.4).abs() < 1e-12);
    }

    #[test]
    fn too_few_valid_pixels_and_size_mismatch() {
        let m = InstanceMask::from_rect(1, 32, 32, BoundingBox::new(4, 4, 4, 4)).unwrap();
        let f = FlowField::uniform(32, 32, 1.0, 0.0);
        assert_eq!(mask_mean_horizontal_flow(&f, &m, 25).unwrap(), None);
        let f = FlowField::uniform(16, 16, 1.0, 0.0);
        assert!(matches!(
            mask_mean_horizontal_flow(&f, &m, 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn median_examples() {
        assert_eq!(common_motion(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(common_motion(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 2.5);
        assert_eq!(common_motion(&[5.0]).unwrap(), 5.0);
        assert!(matches!(common_motion(&[]), Err(Error::NoContainers)));
    }

    #[test]
    fn relative_examples() {
        assert_eq!(relative_motion(2.0, 2.0), 0.0);
        assert_eq!(relative_motion(3.5, 2.0), 1.5);
        let c = 0.37;
        let vals = [c; 6];
        let m = common_motion(&vals).unwrap();
        assert!(vals.iter().all(|v| relative_motion(*v, m) == 0.0));
    }

    #[test]
    fn iqr_examples() {
        let ring: Vec<_> = (0..20).map(|i| sample(i, 0.2)).collect();
        assert_eq!(iqr_filter(&ring, 1.5).suppressed_count, 0);

        let mut ring: Vec<_> = (0..19).map(|i| sample(i, 0.1)).collect();
        ring.push(sample(19, 5.0));
        let f = iqr_filter(&ring, 1.5);
        assert_eq!(f.suppressed_count, 1);
        assert!(f.suppressed[19]);

        let ring: Vec<_> = [0.1, 9.0, 0.2]
            .iter()
            .enumerate()
            .map(|(i, v)| sample(i as u64, *v))
            .collect();
        assert_eq!(iqr_filter(&ring, 1.5).suppressed_count, 0);
    }

    #[test]
    fn degraded_samples_always_suppressed() {
        let mut ring: Vec<_> = (0..3).map(|i| sample(i, 0.2)).collect();
        ring[1].degraded = true;
        assert_eq!(iqr_filter(&ring, 1.5).suppressed, vec![false, true, false]);
    }

    #[test]
    fn zero_residuals_stay_stable() {
        let cfg = ClassifierConfig::default();
        let mut t = new_track();
        for f in 1..=60 {
            let v = accumulate_and_classify(&mut t, sample(f, 0.0), &[0.0; 8], &cfg).unwrap();
            assert_eq!(v.stability, Stability::Stable);
            assert_eq!(v.accumulated, 0.0);
        }
    }

    #[test]
    fn single_spike_is_suppressed() {
        let cfg = ClassifierConfig::default();
        let mut t = new_track();
        for f in 1..=20 {
            accumulate_and_classify(&mut t, sample(f, 0.05), &[0.05; 8], &cfg).unwrap();
        }
        let v = accumulate_and_classify(&mut t, sample(21, 6.0), &[0.05; 8], &cfg).unwrap();
        assert!(v.suppressed);
        assert_eq!(v.stability, Stability::Stable);
        assert_eq!(v.sustained_frames, 0);
    }

    #[test]
    fn sustained_residual_becomes_unstable() {
        let cfg = ClassifierConfig::default();
        let mut t = new_track();
        let mut first_unstable = None;
        for f in 1..=60u64 {
            let v_rel = if f > 30 { 0.8 } else { 0.02 * ((f % 3) as f64) };
            let v =
                accumulate_and_classify(&mut t, sample(f, v_rel), &[0.0, 0.01, 0.02, -0.01], &cfg)
                    .unwrap();
            if v.stability == Stability::Unstable && first_unstable.is_none() {
                first_unstable = Some(f);
                assert!(v.sustained_frames >= cfg.sustain_m);
            }
        }
        let f = first_unstable.expect("becomes unstable");
        assert!((40..=50).contains(&f), "{f}");
    }

    #[test]
    fn missing_samples_do_not_break_runs() {
        let cfg = ClassifierConfig::default();
        let ring: Vec<RingSample> = [1.0, 1.0, 0.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, v)| RingSample {
                sample: sample(i as u64, *v),
                threshold: 0.3,
            })
            .collect();
        assert_eq!(sustained_run(&ring, &[false, false, true, false]), 3);
        assert_eq!(sustained_run(&ring, &[false; 4]), 1);
        assert_eq!(classify(10, &cfg), Stability::Unstable);
        assert_eq!(classify(5, &cfg), Stability::Suspect);
        assert_eq!(classify(4, &cfg), Stability::Stable);
    }

    #[test]
    fn out_of_order_sample_is_contract_error() {
        let cfg = ClassifierConfig::default();
        let mut t = new_track();
        accumulate_and_classify(&mut t, sample(5, 0.0), &[], &cfg).unwrap();
        assert!(matches!(
            accumulate_and_classify(&mut t, sample(5, 0.0), &[], &cfg),
            Err(Error::Contract(_))
        ));
    }

    proptest! {
        #[test]
        fn median_residual_is_zero(v in prop::collection::vec(-20.0f64..20.0, 1..16)) {
            let c = common_motion(&v).unwrap();
            let rel: Vec<f64> = v.iter().map(|x| relative_motion(*x, c)).collect();
            let m = common_motion(&rel).unwrap();
            if v.len() % 2 == 1 {
                prop_assert_eq!(m, 0.0);
            } else {
                prop_assert!(m.abs() < 1e-12);
            }
        }

        #[test]
        fn median_resists_one_runaway(
            mut v in prop::collection::vec(-5.0f64..5.0, 5..12),
            idx in 0usize..12,
            delta in -1e6f64..1e6,
        ) {
            let idx = idx % v.len();
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let before = common_motion(&v).unwrap();
            v[idx] += delta;
            let after = common_motion(&v).unwrap();
            // a single change moves the median by at most one order-statistic gap
            let n = sorted.len();
            let (lo, hi) = if n % 2 == 1 {
                (sorted[n / 2 - 1], sorted[n / 2 + 1])
            } else {
                ((sorted[n / 2 - 2] + sorted[n / 2 - 1]) / 2.0, (sorted[n / 2] + sorted[n / 2 + 1]) / 2.0)
            };
            prop_assert!(after >= lo - 1e-12 && after <= hi + 1e-12, "{before} -> {after} not in [{lo}, {hi}]");
        }

        #[test]
        fn constant_ring_never_suppressed(v in -3.0f64..3.0, n in 1usize..40) {
            let ring: Vec<_> = (0..n as u64).map(|i| sample(i, v)).collect();
            prop_assert_eq!(iqr_filter(&ring, 1.5).suppressed_count, 0);
        }

        #[test]
        fn larger_residuals_never_shorten_runs(
            base in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..30),
            bump in prop::collection::vec(0.0f64..1.0, 30),
        ) {
            let theta = 0.3;
            let ring: Vec<RingSample> = base.iter().enumerate()
                .map(|(i, (v, _))| RingSample { sample: sample(i as u64, *v), threshold: theta })
                .collect();
            let raised: Vec<RingSample> = ring.iter().zip(&bump)
                .map(|(e, b)| RingSample { sample: sample(e.sample.frame_index, e.sample.v_rel + b), threshold: theta })
                .collect();
            let suppressed: Vec<bool> = base.iter().map(|(_, s)| *s).collect();
            prop_assert!(sustained_run(&raised, &suppressed) >= sustained_run(&ring, &suppressed));
        }
    }
}
