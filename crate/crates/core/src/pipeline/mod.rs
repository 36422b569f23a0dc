//! End-to-end batch runs: frames and masks from disk, or a simulated scenario, go
//! through [`Analyzer`] one frame at a time and the results are written to an
//! output directory.
//!
//! Outputs:
//!
//! | file | content |
//! |---|---|
//! | `residuals.csv` | one row per (frame, measured track): `v_abs`, `v_common`, `v_rel`, threshold, suppression, run length, stability |
//! | `gmc.csv` | one row per frame pair: affine entries, inlier statistics, degraded flag, residual flow level |
//! | `tracks.csv` | one row per (frame, live track): status, box, assigned mask |
//! | `alerts.jsonl` | one record per transition into `unstable` |
//! | `summary.json` | counts and wall time |
//! | `frames_annotated/` | optional PNG per frame |

mod analyzer;
mod annotate;
mod config;
mod output;

pub use analyzer::{
    frame_seed, Alert, Analyzer, AnalyzerConfig, FrameReport, GmcSummary, ResidualRow, TrackRow,
};
pub use annotate::{annotate_frame, write_png, HIGHLIGHT, PLAIN};
pub use config::RunConfig;
pub use output::{
    ReportWriter, ALERTS_JSONL, ANNOTATED_DIR, GMC_CSV, RESIDUALS_CSV, SUMMARY_JSON, TRACKS_CSV,
};

use crate::imgcore::io::{list_frames, read_pgm, read_raw_y8, MaskReader, MaskRecord};
use crate::imgcore::{GrayFrame, InstanceMask};
use crate::simulator::{Renderer, Scenario};
use crate::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Process exit codes used by the CLI.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const IO: i32 = 4;
}

/// Exit code for an error.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) => exit_code::CONFIG,
        Error::Data { .. } | Error::Image { .. } | Error::EmptyMask => exit_code::DATA,
        Error::Io { .. } => exit_code::IO,
        _ => exit_code::INTERNAL,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Files { frames: PathBuf, masks: PathBuf },
    Scenario(PathBuf),
}

/// A fully resolved run.
#[derive(Clone, Debug)]
pub struct RunRequest {
    pub config: RunConfig,
    pub input: Input,
    pub out_dir: PathBuf,
    pub annotate: bool,
}

impl RunRequest {
    /// Combine a config with command-line overrides. Command-line values win.
    pub fn resolve(
        config: RunConfig,
        frames: Option<PathBuf>,
        masks: Option<PathBuf>,
        scenario: Option<PathBuf>,
        out: Option<PathBuf>,
        annotate: bool,
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut config = config;
        if let Some(s) = seed {
            config.seed = s;
        }
        let cli_input = frames.is_some() || masks.is_some() || scenario.is_some();
        let (frames, masks, scenario) = if cli_input {
            (frames, masks, scenario)
        } else {
            (
                config.frames.clone(),
                config.masks.clone(),
                config.scenario.clone(),
            )
        };
        let input = match (frames, masks, scenario) {
            (Some(f), Some(m), None) => Input::Files {
                frames: f,
                masks: m,
            },
            (None, None, Some(s)) => Input::Scenario(s),
            (None, None, None) => {
                return Err(Error::Config(
                    "no input: give frames and masks, or a scenario".into(),
                ))
            }
            (_, _, Some(_)) => {
                return Err(Error::Config(
                    "scenario input cannot be combined with frames/masks".into(),
                ))
            }
            _ => {
                return Err(Error::Config(
                    "frames and masks must be given together".into(),
                ))
            }
        };
        let out_dir = out
            .or_else(|| config.out.clone())
            .ok_or_else(|| Error::Config("no output directory given".into()))?;
        let annotate = annotate || config.annotate;
        Ok(Self {
            config,
            input,
            out_dir,
            annotate,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub version: String,
    pub frames: u64,
    pub tracks_created: u64,
    pub confirmed_tracks: usize,
    pub alerts: u64,
    pub alert_track_ids: Vec<u64>,
    pub degraded_frames: u64,
    pub seed: u64,
    pub wall_time_s: f64,
}

type FrameItem = Result<(u64, GrayFrame, Vec<InstanceMask>)>;

/// Frames on disk paired with their mask records by frame index.
struct FileSource {
    frames: std::vec::IntoIter<(u64, PathBuf)>,
    masks: std::iter::Peekable<MaskReader<std::io::BufReader<std::fs::File>>>,
    raw_size: Option<[usize; 2]>,
}

fn frame_index_of(path: &Path) -> u64 {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .expect("listed frames have numeric stems")
}

impl FileSource {
    fn open(frames_dir: &Path, masks: &Path, raw_size: Option<[usize; 2]>) -> Result<Self> {
        if !frames_dir.is_dir() {
            return Err(Error::Config(format!(
                "frames directory {} does not exist",
                frames_dir.display()
            )));
        }
        if !masks.is_file() {
            return Err(Error::Config(format!(
                "mask file {} does not exist",
                masks.display()
            )));
        }
        let exts: &[&str] = if raw_size.is_some() {
            &["pgm", "y8"]
        } else {
            &["pgm"]
        };
        let files = list_frames(frames_dir, exts)?;
        if files.is_empty() {
            return Err(Error::Config(format!(
                "no frames found in {}",
                frames_dir.display()
            )));
        }
        let frames: Vec<(u64, PathBuf)> =
            files.into_iter().map(|p| (frame_index_of(&p), p)).collect();
        for w in frames.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(format!(
                    "duplicate frame index {} ({} and {})",
                    w[0].0,
                    w[0].1.display(),
                    w[1].1.display()
                )));
            }
        }
        Ok(Self {
            frames: frames.into_iter(),
            masks: MaskReader::open(masks)?.peekable(),
            raw_size,
        })
    }

    fn read_frame(&self, index: u64, path: &Path) -> Result<GrayFrame> {
        let is_raw = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("y8"));
        let r = match (is_raw, self.raw_size) {
            (true, Some([w, h])) => read_raw_y8(path, w, h),
            _ => read_pgm(path),
        };
        r.map_err(|e| match e {
            Error::Image { path, message } => {
                Error::data(index, format!("{}: {message}", path.display()))
            }
            Error::Io { path, source } => {
                Error::data(index, format!("{}: {source}", path.display()))
            }
            other => other,
        })
    }

    fn masks_for(&mut self, index: u64, w: usize, h: usize) -> Result<Vec<InstanceMask>> {
        match self.masks.peek() {
            None => Ok(Vec::new()),
            Some(Err(_)) => Err(self
                .masks
                .next()
                .expect("peeked")
                .expect_err("peeked error")),
            Some(Ok(rec)) if rec.frame_index < index => {
                let rec: MaskRecord = self.masks.next().expect("peeked")?;
                Err(Error::data(
                    rec.frame_index,
                    "mask record has no matching frame file",
                ))
            }
            Some(Ok(rec)) if rec.frame_index == index => {
                self.masks.next().expect("peeked")?.decode(w, h)
            }
            // a missing record means no detections in this frame
            Some(Ok(_)) => Ok(Vec::new()),
        }
    }
}

impl Iterator for FileSource {
    type Item = FrameItem;

    fn next(&mut self) -> Option<FrameItem> {
        let (index, path) = self.frames.next()?;
        Some((|| {
            let frame = self.read_frame(index, &path)?;
            let masks = self.masks_for(index, frame.width(), frame.height())?;
            Ok((index, frame, masks))
        })())
    }
}

/// Load and validate a scenario file; problems are configuration errors.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
    Scenario::from_json(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => Error::Config(format!("{}: {other}", path.display())),
    })
}

/// Observer of each frame as it is processed (used by tests and the C API).
pub trait FrameObserver {
    fn frame(&mut self, report: &FrameReport);
}

impl FrameObserver for () {
    fn frame(&mut self, _: &FrameReport) {}
}

impl<F: FnMut(&FrameReport)> FrameObserver for F {
    fn frame(&mut self, report: &FrameReport) {
        self(report)
    }
}

pub fn run(req: &RunRequest) -> Result<RunSummary> {
    run_observed(req, &mut ())
}

/// Run the whole pipeline. All inputs are checked before the output directory is
/// touched, so configuration errors leave no partial outputs.
pub fn run_observed(req: &RunRequest, observer: &mut dyn FrameObserver) -> Result<RunSummary> {
    let started = Instant::now();
    req.config.validate()?;
    match &req.input {
        Input::Files { frames, masks } => {
            let source = FileSource::open(frames, masks, req.config.raw_size)?;
            let fps = req.config.fps.unwrap_or(10.0);
            drive(req, fps, source, observer, started)
        }
        Input::Scenario(path) => {
            let scenario = load_scenario(path)?;
            let fps = req.config.fps.unwrap_or(scenario.fps);
            run_scenario_observed(req, &scenario, fps, observer, started)
        }
    }
}

/// Run on an in-memory scenario (no scenario file).
pub fn run_scenario(
    req: &RunRequest,
    scenario: &Scenario,
    observer: &mut dyn FrameObserver,
) -> Result<RunSummary> {
    req.config.validate()?;
    scenario.validate()?;
    let fps = req.config.fps.unwrap_or(scenario.fps);
    run_scenario_observed(req, scenario, fps, observer, Instant::now())
}

fn run_scenario_observed(
    req: &RunRequest,
    scenario: &Scenario,
    fps: f64,
    observer: &mut dyn FrameObserver,
    started: Instant,
) -> Result<RunSummary> {
    let renderer = Renderer::new(scenario)?;
    let source = (0..scenario.duration).map(|t| {
        let r = renderer.render(t)?;
        Ok((t as u64, r.frame, r.masks))
    });
    drive(req, fps, source, observer, started)
}

fn drive(
    req: &RunRequest,
    fps: f64,
    source: impl Iterator<Item = FrameItem>,
    observer: &mut dyn FrameObserver,
    started: Instant,
) -> Result<RunSummary> {
    let mut analyzer = Analyzer::new(AnalyzerConfig::from_run_config(&req.config, fps))?;
    let out = &req.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let annotated = out.join(ANNOTATED_DIR);
    if req.annotate {
        std::fs::create_dir_all(&annotated).map_err(|e| Error::io(&annotated, e))?;
    }
    let mut writer = ReportWriter::create(out)?;
    let mut alert_ids = Vec::new();
    for item in source {
        let (index, frame, masks) = item?;
        // the analyzer keeps the frame as its next reference; copy only for drawing
        let copy = req.annotate.then(|| frame.clone());
        let report = analyzer.push_frame(index, frame, masks)?;
        writer.write(&report)?;
        alert_ids.extend(report.alerts.iter().map(|a| a.track_id));
        if let Some(f) = &copy {
            write_png(
                &annotate_frame(f, &report),
                &annotated.join(format!("{index:06}.png")),
            )?;
        }
        observer.frame(&report);
    }
    writer.finish()?;
    let summary = RunSummary {
        version: crate::VERSION.to_string(),
        frames: analyzer.frames_processed(),
        tracks_created: analyzer.tracker().tracks_created(),
        confirmed_tracks: analyzer
            .tracker()
            .tracks()
            .iter()
            .filter(|t| t.is_confirmed())
            .count(),
        alerts: analyzer.alert_count(),
        alert_track_ids: alert_ids,
        degraded_frames: analyzer.degraded_frames(),
        seed: req.config.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let path = out.join(SUMMARY_JSON);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
