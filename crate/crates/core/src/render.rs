//! Detection overlays drawn straight into RGB buffers with a 5x7 bitmap font.

use image::{Rgb, RgbImage};

use crate::alert::WarningEvent;
use crate::detection::Category;
use crate::fusion::FusedDetection;

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
const SCALE: u32 = 2;

fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        _ => [0; 7],
    }
}

fn palette(category: Category) -> Rgb<u8> {
    match category {
        Category::ManholeCover => Rgb([0, 170, 255]),
        Category::NonDirectionalCrack => Rgb([255, 170, 0]),
        Category::PineCone => Rgb([120, 220, 60]),
        Category::Pothole => Rgb([255, 60, 200]),
        Category::TreeBranch => Rgb([160, 110, 60]),
        Category::TruncatedDome => Rgb([250, 230, 40]),
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

pub(crate) fn fill_rect(img: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, color: Rgb<u8>) {
    for yy in y.max(0)..(y + h).min(i64::from(img.height())) {
        for xx in x.max(0)..(x + w).min(i64::from(img.width())) {
            img.put_pixel(xx as u32, yy as u32, color);
        }
    }
}

pub(crate) fn stroke_rect(img: &mut RgbImage, x1: i64, y1: i64, x2: i64, y2: i64, thickness: i64, color: Rgb<u8>) {
    for t in 0..thickness {
        for x in x1..=x2 {
            put(img, x, y1 + t, color);
            put(img, x, y2 - t, color);
        }
        for y in y1..=y2 {
            put(img, x1 + t, y, color);
            put(img, x2 - t, y, color);
        }
    }
}

pub(crate) fn text_width(text: &str) -> i64 {
    i64::from((GLYPH_W + 1) * SCALE) * text.chars().count() as i64
}

pub(crate) fn text_height() -> i64 {
    i64::from(GLYPH_H * SCALE)
}

pub(crate) fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    let s = i64::from(SCALE);
    for (i, c) in text.chars().enumerate() {
        let ox = x + i as i64 * i64::from(GLYPH_W + 1) * s;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                    fill_rect(img, ox + i64::from(col) * s, y + row as i64 * s, s, s, color);
                }
            }
        }
    }
}

fn label(f: &FusedDetection) -> String {
    let distance = match f.distance_m {
        Some(d) => format!("{d:.1}M"),
        None => "N/A".to_string(),
    };
    format!("{} {:.2} {}", f.detection.category.name(), f.detection.confidence, distance)
}

/// Boxes with labels for every fused detection, and a red banner listing the
/// warnings when there are any.
pub(crate) fn draw_overlay(img: &mut RgbImage, fused: &[FusedDetection], events: &[WarningEvent]) {
    let black = Rgb([0, 0, 0]);
    let pad = 3;
    for f in fused {
        let b = &f.detection.bbox;
        let color = palette(f.detection.category);
        let (x1, y1, x2, y2) = (b.x1.floor() as i64, b.y1.floor() as i64, b.x2.ceil() as i64 - 1, b.y2.ceil() as i64 - 1);
        stroke_rect(img, x1, y1, x2, y2, 2, color);
        let text = label(f);
        let th = text_height() + 2 * pad;
        let ty = if y1 - th >= 0 { y1 - th } else { y1 };
        fill_rect(img, x1, ty, text_width(&text) + 2 * pad, th, color);
        draw_text(img, x1 + pad, ty + pad, &text, black);
    }
    if !events.is_empty() {
        let line_h = text_height() + 2 * pad;
        fill_rect(img, 0, 0, i64::from(img.width()), line_h * events.len() as i64, Rgb([210, 20, 20]));
        for (i, e) in events.iter().enumerate() {
            draw_text(img, pad, pad + i as i64 * line_h, &e.message, Rgb([255, 255, 255]));
        }
    }
}
