use crate::gmc::GmcConfig;
use crate::motion::ClassifierConfig;
use crate::optflow::FlowParams;
use crate::tracker::TrackerConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Run configuration as read from JSON. Every field is optional; paths given here
/// are resolved against the config file's directory and may be overridden on the
/// command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Frame rate used for alert timestamps; defaults to the scenario's rate, else 10.
    pub fps: Option<f64>,
    pub seed: u64,
    pub annotate: bool,
    pub frames: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// `[width, height]` of headerless `.y8` frames; only needed for raw input.
    pub raw_size: Option<[usize; 2]>,
    pub flow: FlowParams,
    pub gmc: GmcConfig,
    pub tracker: TrackerConfig,
    pub classifier: ClassifierConfig,
}

impl RunConfig {
    /// Parse and validate. Errors name `origin` and the line of the offending entry.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
        if let Err((key, message)) = cfg.check() {
            let at = locate_key(text, key).map_or_else(String::new, |l| format!("{l}:"));
            return Err(Error::Config(format!("{origin}:{at} {key}: {message}")));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.frames,
            &mut cfg.masks,
            &mut cfg.scenario,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(key, message)| Error::Config(format!("{key}: {message}")))
    }

    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if let Some(fps) = self.fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(("fps", "must be a positive number".into()));
            }
        }
        if let Some([w, h]) = self.raw_size {
            if w < crate::imgcore::MIN_FRAME_SIDE || h < crate::imgcore::MIN_FRAME_SIDE {
                return Err(("raw_size", "frame sides must be at least 8".into()));
            }
        }
        let strip = |e: Error| match e {
            Error::Config(m) => m,
            other => other.to_string(),
        };
        self.flow.validate().map_err(|e| ("flow", strip(e)))?;
        self.gmc.validate().map_err(|e| ("gmc", strip(e)))?;
        self.tracker.validate().map_err(|e| ("tracker", strip(e)))?;
        self.classifier
            .validate()
            .map_err(|e| ("classifier", strip(e)))?;
        Ok(())
    }
}

/// 1-based line of the first `"key":` in `text`.
fn locate_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().enumerate().find_map(|(i, line)| {
        let pos = line.find(&needle)?;
        line[pos + needle.len()..]
            .trim_start()
            .starts_with(':')
            .then_some(i + 1)
    })
}
