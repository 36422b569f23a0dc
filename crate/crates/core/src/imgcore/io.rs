//! Frame and mask file formats.
//!
//! Frames are 8-bit binary PGM (`P5`) files or raw Y8 buffers whose dimensions come
//! from the run configuration. Files are ordered by the numeric value of their stem
//! (`000012.pgm` < `000103.pgm`).
//!
//! Masks arrive as JSON lines, one record per frame:
//!
//! ```json
//! {"frame_index": 4, "instances": [{"label": 2, "bbox": [10, 12, 30, 20], "rle": [372, 30, 290, 30]}]}
//! ```
//!
//! `rle` is uncompressed run-length counts over the row-major pixel order, starting
//! with a run of zeros.

use super::{BitGrid, BoundingBox, GrayFrame, InstanceMask};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

pub fn read_pgm(path: &Path) -> Result<GrayFrame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|message| Error::Image {
        path: path.to_path_buf(),
        message,
    })
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayFrame, String> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)
        .map_err(|e| e.to_string())?;
    let luma = img.to_luma8();
    let (w, h) = luma.dimensions();
    GrayFrame::new(w as usize, h as usize, luma.into_raw()).map_err(|e| e.to_string())
}

pub fn write_pgm(path: &Path, frame: &GrayFrame) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_raw_y8(path: &Path, width: usize, height: usize) -> Result<GrayFrame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    GrayFrame::new(width, height, bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Frame files in `dir` with one of `extensions`, sorted by numeric stem.
pub fn list_frames(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if !ext_ok {
            continue;
        }
        let Some(index) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        frames.push((index, path));
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskInstanceRecord {
    pub label: u32,
    pub bbox: [u32; 4],
    pub rle: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub frame_index: u64,
    pub instances: Vec<MaskInstanceRecord>,
}

impl MaskRecord {
    pub fn from_masks(frame_index: u64, masks: &[InstanceMask]) -> Self {
        Self {
            frame_index,
            instances: masks
                .iter()
                .map(|m| {
                    let b = m.bbox();
                    MaskInstanceRecord {
                        label: m.label(),
                        bbox: [b.x, b.y, b.w, b.h],
                        rle: m.bits().to_rle(),
                    }
                })
                .collect(),
        }
    }

    /// Decode every instance against a `width × height` frame.
    pub fn decode(&self, width: usize, height: usize) -> Result<Vec<InstanceMask>> {
        let frame = self.frame_index;
        let mut out = Vec::with_capacity(self.instances.len());
        for inst in &self.instances {
            let bits = BitGrid::from_rle(width, height, &inst.rle)
                .map_err(|e| Error::data(frame, format!("label {}: {e}", inst.label)))?;
            let mask = InstanceMask::new(inst.label, bits)
                .map_err(|e| Error::data(frame, format!("label {}: {e}", inst.label)))?;
            let [x, y, w, h] = inst.bbox;
            if mask.bbox() != BoundingBox::new(x, y, w, h) {
                return Err(Error::data(
                    frame,
                    format!(
                        "label {}: bbox {:?} does not match rle extent {:?}",
                        inst.label,
                        inst.bbox,
                        mask.bbox()
                    ),
                ));
            }
            if out.iter().any(|m: &InstanceMask| m.label() == inst.label) {
                return Err(Error::data(
                    frame,
                    format!("duplicate label {}", inst.label),
                ));
            }
            out.push(mask);
        }
        Ok(out)
    }
}

/// Streaming reader over a JSON-lines mask file.
pub struct MaskReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    path: PathBuf,
    last_index: Option<u64>,
}

impl MaskReader<std::io::BufReader<std::fs::File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(std::io::BufReader::new(file), path))
    }
}

impl<R: BufRead> MaskReader<R> {
    pub fn new(reader: R, path: &Path) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            path: path.to_path_buf(),
            last_index: None,
        }
    }
}

impl<R: BufRead> Iterator for MaskReader<R> {
    type Item = Result<MaskRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: MaskRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    // frame index unknown for unparsable lines; report the line instead
                    return Some(Err(Error::Data {
                        frame: self.last_index.map_or(0, |i| i + 1),
                        message: format!(
                            "{}:{}:{}: {e}",
                            self.path.display(),
                            self.line_no,
                            e.column()
                        ),
                    }));
                }
            };
            if let Some(last) = self.last_index {
                if record.frame_index <= last {
                    return Some(Err(Error::data(
                        record.frame_index,
                        format!(
                            "{}:{}: frame_index {} is not after {last}",
                            self.path.display(),
                            self.line_no,
                            record.frame_index
                        ),
                    )));
                }
            }
            self.last_index = Some(record.frame_index);
            return Some(Ok(record));
        }
    }
}

pub fn write_mask_record<W: Write>(out: &mut W, record: &MaskRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = GrayFrame::from_fn(17, 9, |x, y| (x * 11 + y) as u8).unwrap();
        let p = dir.path().join("000001.pgm");
        write_pgm(&p, &f).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), f);
    }

    #[test]
    fn frames_sorted_numerically() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["10.pgm", "9.pgm", "0011.pgm", "notes.txt", "x.pgm"] {
            std::fs::write(dir.path().join(name), b"").unwrap();
        }
        let names: Vec<_> = list_frames(dir.path(), &["pgm"])
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, ["9.pgm", "10.pgm", "0011.pgm"]);
    }

    #[test]
    fn mask_record_round_trip() {
        let m = InstanceMask::from_rect(4, 20, 10, BoundingBox::new(3, 2, 5, 4)).unwrap();
        let rec = MaskRecord::from_masks(7, std::slice::from_ref(&m));
        let mut buf = Vec::new();
        write_mask_record(&mut buf, &rec).unwrap();
        let parsed: Vec<_> = MaskReader::new(buf.as_slice(), Path::new("m.jsonl"))
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(parsed, vec![rec.clone()]);
        assert_eq!(rec.decode(20, 10).unwrap(), vec![m]);
    }

    #[test]
    fn malformed_records_report_frame() {
        let bad = MaskRecord {
            frame_index: 5,
            instances: vec![MaskInstanceRecord {
                label: 1,
                bbox: [0, 0, 1, 1],
                rle: vec![3, 2],
            }],
        };
        match bad.decode(4, 4) {
            Err(Error::Data { frame, .. }) => assert_eq!(frame, 5),
            other => panic!("expected data error, got {other:?}"),
        }

        let text =
            "{\"frame_index\": 0, \"instances\": []}\n{\"frame_index\": 1, \"instances\": [}\n";
        let results: Vec<_> = MaskReader::new(text.as_bytes(), Path::new("m.jsonl")).collect();
        assert!(results[0].is_ok());
        let err = results[1].as_ref().unwrap_err().to_string();
        assert!(err.contains("m.jsonl:2:"), "{err}");
    }
}
