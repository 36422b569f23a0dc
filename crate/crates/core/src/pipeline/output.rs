use super::analyzer::FrameReport;
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const RESIDUALS_CSV: &str = "residuals.csv";
pub const GMC_CSV: &str = "gmc.csv";
pub const TRACKS_CSV: &str = "tracks.csv";
pub const ALERTS_JSONL: &str = "alerts.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const ANNOTATED_DIR: &str = "frames_annotated";

const RESIDUALS_HEADER: &str =
    "frame,track_id,mask_label,v_abs,v_common,v_rel,theta,suppressed,degraded,sustained_frames,accumulated,n_containers,stability";
const GMC_HEADER: &str =
    "frame,a00,a01,a10,a11,bx,by,correspondences,inliers,inlier_ratio,reprojection_error,degraded,validity_margin,interior_mean_abs_u";
const TRACKS_HEADER: &str = "frame,track_id,status,x,y,w,h,mask_label,stability";

struct Sink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Sink {
    fn create(path: PathBuf) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path,
        })
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}").map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes the per-frame CSV tables and the alert stream.
pub struct ReportWriter {
    residuals: Sink,
    gmc: Sink,
    tracks: Sink,
    alerts: Sink,
}

impl ReportWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        let mut w = Self {
            residuals: Sink::create(dir.join(RESIDUALS_CSV))?,
            gmc: Sink::create(dir.join(GMC_CSV))?,
            tracks: Sink::create(dir.join(TRACKS_CSV))?,
            alerts: Sink::create(dir.join(ALERTS_JSONL))?,
        };
        w.residuals.line(RESIDUALS_HEADER)?;
        w.gmc.line(GMC_HEADER)?;
        w.tracks.line(TRACKS_HEADER)?;
        Ok(w)
    }

    pub fn write(&mut self, r: &FrameReport) -> Result<()> {
        let t = r.frame_index;
        if let Some(g) = &r.gmc {
            let m = &g.transform;
            self.gmc.line(&format!(
                "{t},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                f(m.a00),
                f(m.a01),
                f(m.a10),
                f(m.a11),
                f(m.bx),
                f(m.by),
                g.correspondences,
                g.inlier_count,
                f(g.inlier_ratio),
                f(g.mean_reprojection_error),
                g.degraded as u8,
                g.validity_margin,
                f(g.interior_mean_abs_u),
            ))?;
        }
        for row in &r.residuals {
            let (s, v) = (&row.sample, &row.verdict);
            self.residuals.line(&format!(
                "{t},{},{},{},{},{},{},{},{},{},{},{},{}",
                row.track_id,
                row.mask_label,
                f(s.v_abs),
                f(s.v_common),
                f(s.v_rel),
                f(v.threshold_used),
                v.suppressed as u8,
                s.degraded as u8,
                v.sustained_frames,
                f(v.accumulated),
                r.n_containers,
                v.stability.as_str(),
            ))?;
        }
        for tr in &r.tracks {
            let b = tr.bbox;
            self.tracks.line(&format!(
                "{t},{},{},{},{},{},{},{},{}",
                tr.track_id,
                tr.status.as_str(),
                b.x,
                b.y,
                b.w,
                b.h,
                tr.mask_label.map_or_else(String::new, |l| l.to_string()),
                tr.stability.as_str(),
            ))?;
        }
        for a in &r.alerts {
            let text = serde_json::to_string(a).expect("alert serializes");
            self.alerts.line(&text)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        self.residuals.finish()?;
        self.gmc.finish()?;
        self.tracks.finish()?;
        self.alerts.finish()
    }
}
