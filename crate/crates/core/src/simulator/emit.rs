use super::{Renderer, Scenario};
use crate::imgcore::io::{write_mask_record, write_pgm, MaskRecord};
use crate::imgcore::AffineTransform;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const GROUND_TRUTH_SCHEMA_VERSION: u32 = 1;

/// Files written by [`emit`], relative to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario_hash: String,
    pub frames: Vec<PathBuf>,
    pub masks: PathBuf,
    pub ground_truth: PathBuf,
}

#[derive(Serialize)]
struct GroundTruthFile<'a> {
    schema_version: u32,
    scenario_hash: &'a str,
    fps: f64,
    frames: Vec<GroundTruthFrame>,
}

#[derive(Serialize)]
struct GroundTruthFrame {
    frame_index: usize,
    camera_pose: AffineTransform,
    camera_motion: AffineTransform,
    containers: Vec<GroundTruthContainer>,
}

#[derive(Serialize)]
struct GroundTruthContainer {
    label: u32,
    u: f64,
    offset_x: f64,
    drifting: bool,
    occluded: bool,
}

/// Hex SHA-256 of the scenario's canonical JSON serialization.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let json = serde_json::to_vec(scenario).expect("scenario serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Render every frame of `scenario` into `out_dir`: `frames/NNNNNN.pgm`,
/// `masks.jsonl`, `ground_truth.json` and `manifest.json`.
pub fn emit(scenario: &Scenario, out_dir: &Path) -> Result<Manifest> {
    let renderer = Renderer::new(scenario)?;
    let frames_dir = out_dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let hash = scenario_hash(scenario);

    let masks_rel = PathBuf::from("masks.jsonl");
    let masks_path = out_dir.join(&masks_rel);
    let mut masks_out = Vec::new();
    let mut frames = Vec::with_capacity(scenario.duration);
    let mut gt_frames = Vec::with_capacity(scenario.duration);
    for t in 0..scenario.duration {
        let r = renderer.render(t)?;
        let rel = PathBuf::from("frames").join(format!("{t:06}.pgm"));
        write_pgm(&out_dir.join(&rel), &r.frame)?;
        frames.push(rel);
        write_mask_record(&mut masks_out, &MaskRecord::from_masks(t as u64, &r.masks))
            .map_err(|e| Error::io(&masks_path, e))?;
        gt_frames.push(GroundTruthFrame {
            frame_index: t,
            camera_pose: r.truth.camera_pose,
            camera_motion: r.truth.camera_motion,
            containers: scenario
                .containers
                .iter()
                .map(|c| GroundTruthContainer {
                    label: c.label,
                    u: r.truth.per_container_u[&c.label],
                    offset_x: c.offset_at(t),
                    drifting: c.is_drifting(t),
                    occluded: c.is_occluded(t),
                })
                .collect(),
        });
    }
    std::fs::write(&masks_path, masks_out).map_err(|e| Error::io(&masks_path, e))?;

    let gt_rel = PathBuf::from("ground_truth.json");
    let gt_path = out_dir.join(&gt_rel);
    let gt = GroundTruthFile {
        schema_version: GROUND_TRUTH_SCHEMA_VERSION,
        scenario_hash: &hash,
        fps: scenario.fps,
        frames: gt_frames,
    };
    write_json(&gt_path, &gt)?;

    let manifest = Manifest {
        scenario_hash: hash,
        frames,
        masks: masks_rel,
        ground_truth: gt_rel,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value).expect("ground truth serializes");
    buf.write_all(b"\n").expect("in-memory write");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
