use super::analyzer::FrameReport;
use crate::imgcore::{BoundingBox, GrayFrame};
use crate::motion::Stability;
use crate::tracker::TrackStatus;
use crate::{Error, Result};
use image::{Rgb, RgbImage};
use std::path::Path;

pub const PLAIN: Rgb<u8> = Rgb([0, 220, 0]);
pub const HIGHLIGHT: Rgb<u8> = Rgb([255, 0, 0]);

const GLYPH_W: u32 = 3;
const GLYPH_H: u32 = 5;
const SCALE: u32 = 2;

/// 3×5 bitmap rows, most significant of the low three bits on the left.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '+' => [0b000, 0b010, 0b111, 0b010, 0b000],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        _ => return None,
    })
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, c: Rgb<u8>) {
    let mut cx = x;
    for ch in text.chars() {
        if let Some(rows) = glyph(ch) {
            for (ry, bits) in rows.iter().enumerate() {
                for rx in 0..GLYPH_W {
                    if bits >> (GLYPH_W - 1 - rx) & 1 == 1 {
                        for sy in 0..SCALE {
                            for sx in 0..SCALE {
                                put(
                                    img,
                                    cx + (rx * SCALE + sx) as i64,
                                    y + (ry as u32 * SCALE + sy) as i64,
                                    c,
                                );
                            }
                        }
                    }
                }
            }
        }
        cx += ((GLYPH_W + 1) * SCALE) as i64;
    }
}

fn draw_box(img: &mut RgbImage, b: BoundingBox, thickness: u32, c: Rgb<u8>) {
    let (x0, y0) = (b.x as i64, b.y as i64);
    let (x1, y1) = (x0 + b.w as i64 - 1, y0 + b.h as i64 - 1);
    for k in 0..thickness as i64 {
        for x in x0..=x1 {
            put(img, x, y0 + k, c);
            put(img, x, y1 - k, c);
        }
        for y in y0..=y1 {
            put(img, x0 + k, y, c);
            put(img, x1 - k, y, c);
        }
    }
}

/// Frame as RGB with a box and label per confirmed track. Unstable tracks get a
/// thick red box; others a thin green one. Labels read `id` or `id v_rel`.
pub fn annotate_frame(frame: &GrayFrame, report: &FrameReport) -> RgbImage {
    let mut img = RgbImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let v = frame.get(x as usize, y as usize);
        Rgb([v, v, v])
    });
    for t in report
        .tracks
        .iter()
        .filter(|t| t.status == TrackStatus::Confirmed)
    {
        let unstable = t.stability == Stability::Unstable;
        let (color, thickness) = if unstable { (HIGHLIGHT, 2) } else { (PLAIN, 1) };
        draw_box(&mut img, t.bbox, thickness, color);
        let label = match t.v_rel {
            Some(v) => format!("{} {v:+.2}", t.track_id),
            None => t.track_id.to_string(),
        };
        let text_h = (GLYPH_H * SCALE + 2) as i64;
        let y = if t.bbox.y as i64 >= text_h {
            t.bbox.y as i64 - text_h
        } else {
            t.bbox.y as i64 + thickness as i64 + 1
        };
        draw_text(&mut img, t.bbox.x as i64 + 1, y, &label, color);
    }
    img
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}
