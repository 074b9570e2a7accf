//! Deterministic PNG renderings of instances and tours.
//!
//! Rendering is split into a [`Scene`] (pure geometry: marker centres,
//! label boxes, edges) and a software rasteriser with an embedded 5x7
//! bitmap font for the digit labels. No anti-aliasing and no system fonts
//! are involved, so identical inputs always produce identical bytes.
//!
//! Coordinates are mapped onto the canvas with a 5% margin on every side,
//! preserving aspect ratio, with the y axis flipped so that larger `y` is
//! drawn higher up.

use std::collections::HashSet;
use std::io::Cursor;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::instances::Instance;
use crate::solver::Route;

pub const PNG_MIME: &str = "image/png";

const MARGIN_FRACTION: f64 = 0.05;
const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
const LABEL_GAP_PX: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("invalid render style: {0}")]
    Style(String),
    #[error("route does not match instance {instance_id}: {reason}")]
    Route { instance_id: String, reason: String },
    #[error("png encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RenderStyle {
    pub canvas_px: u32,
    pub marker_radius_px: u32,
    pub label_font_px: u32,
    pub route_stroke_px: u32,
    pub background: [u8; 3],
    pub point_color: [u8; 3],
    pub label_color: [u8; 3],
    pub route_color: [u8; 3],
    pub highlight_color: [u8; 3],
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            canvas_px: 768,
            marker_radius_px: 6,
            label_font_px: 14,
            route_stroke_px: 2,
            background: [255, 255, 255],
            point_color: [31, 119, 180],
            label_color: [0, 0, 0],
            route_color: [90, 90, 90],
            highlight_color: [214, 39, 40],
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.canvas_px < 256 {
            return Err(RenderError::Style(format!(
                "canvas_px must be at least 256, got {}",
                self.canvas_px
            )));
        }
        if self.marker_radius_px == 0 || self.label_font_px == 0 || self.route_stroke_px == 0 {
            return Err(RenderError::Style("pixel sizes must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the style's canonical JSON, logged in run manifests.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("style serialises");
        hex::encode(Sha256::digest(json))
    }

    fn glyph_scale(&self) -> u32 {
        (self.label_font_px / GLYPH_H).max(1)
    }
}

/// An encoded raster image.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    pub bytes: Vec<u8>,
    pub mime: String,
    pub sha256: String,
}

impl Image {
    pub fn from_png(bytes: Vec<u8>) -> Self {
        let sha256 = hex::encode(Sha256::digest(&bytes));
        Self {
            bytes,
            mime: PNG_MIME.to_string(),
            sha256,
        }
    }

    pub fn digest_matches(&self) -> bool {
        hex::encode(Sha256::digest(&self.bytes)) == self.sha256
    }
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("mime", &self.mime)
            .field("len", &self.bytes.len())
            .field("sha256", &self.sha256)
            .finish()
    }
}

/// Where a label sits relative to its marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelOffset {
    UpRight,
    UpLeft,
    DownRight,
    DownLeft,
}

impl LabelOffset {
    /// Fallback order tried when a label would overlap an earlier one.
    pub const LADDER: [LabelOffset; 4] = [
        LabelOffset::UpRight,
        LabelOffset::UpLeft,
        LabelOffset::DownRight,
        LabelOffset::DownLeft,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPx {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxPx {
    fn overlaps(&self, other: &BoxPx) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub id: u32,
    pub cx: f64,
    pub cy: f64,
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub id: u32,
    pub text: String,
    pub offset: LabelOffset,
    pub bounds: BoxPx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
    pub start: (f64, f64),
    pub end: (f64, f64),
}

/// Everything drawn on a canvas, in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub canvas_px: u32,
    pub edges: Vec<Edge>,
    pub markers: Vec<Marker>,
    pub labels: Vec<Label>,
}

/// Lays out the points (and optionally a tour) of an instance.
/// `highlight` marks nodes drawn in the highlight colour.
pub fn layout(
    instance: &Instance,
    route: Option<&Route>,
    highlight: &[u32],
    style: &RenderStyle,
) -> Result<Scene, RenderError> {
    style.validate()?;
    if let Some(route) = route {
        if route.len() != instance.n {
            return Err(RenderError::Route {
                instance_id: instance.instance_id.clone(),
                reason: format!("route has {} nodes, instance has {}", route.len(), instance.n),
            });
        }
    }
    let canvas = style.canvas_px as f64;
    let margin = canvas * MARGIN_FRACTION;
    let drawable = canvas - 2.0 * margin;
    let (min_x, max_x) = bounds(instance.points.iter().map(|p| p.x));
    let (min_y, max_y) = bounds(instance.points.iter().map(|p| p.y));
    let span = (max_x - min_x).max(max_y - min_y);
    let span = if span > 0.0 { span } else { 1.0 };
    // Centre the shorter axis.
    let pad_x = (span - (max_x - min_x)) / 2.0;
    let pad_y = (span - (max_y - min_y)) / 2.0;
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let px = margin + (x - min_x + pad_x) / span * drawable;
        let py = canvas - margin - (y - min_y + pad_y) / span * drawable;
        (px, py)
    };

    let highlight: HashSet<u32> = highlight.iter().copied().collect();
    let markers: Vec<Marker> = instance
        .points
        .iter()
        .map(|p| {
            let (cx, cy) = to_px(p.x, p.y);
            Marker {
                id: p.id,
                cx,
                cy,
                highlighted: highlight.contains(&p.id),
            }
        })
        .collect();

    let edges = route
        .map(|route| {
            route
                .edges()
                .into_iter()
                .map(|(a, b)| {
                    let ma = &markers[a as usize - 1];
                    let mb = &markers[b as usize - 1];
                    Edge {
                        from: a,
                        to: b,
                        start: (ma.cx, ma.cy),
                        end: (mb.cx, mb.cy),
                    }
                })
                .collect()
        })
        .unwrap_or_default();

    let scale = style.glyph_scale() as f64;
    let reach = style.marker_radius_px as f64 + LABEL_GAP_PX;
    let mut labels: Vec<Label> = Vec::with_capacity(markers.len());
    for marker in &markers {
        let text = marker.id.to_string();
        let w = text_width_px(&text, style) as f64;
        let h = GLYPH_H as f64 * scale;
        let place = |offset: LabelOffset| -> BoxPx {
            let (x, y) = match offset {
                LabelOffset::UpRight => (marker.cx + reach, marker.cy - reach - h),
                LabelOffset::UpLeft => (marker.cx - reach - w, marker.cy - reach - h),
                LabelOffset::DownRight => (marker.cx + reach, marker.cy + reach),
                LabelOffset::DownLeft => (marker.cx - reach - w, marker.cy + reach),
            };
            BoxPx { x, y, w, h }
        };
        let chosen = LabelOffset::LADDER
            .iter()
            .copied()
            .find(|&off| {
                let candidate = place(off);
                labels.iter().all(|l| !l.bounds.overlaps(&candidate))
            })
            .unwrap_or(LabelOffset::UpRight);
        labels.push(Label {
            id: marker.id,
            text,
            offset: chosen,
            bounds: place(chosen),
        });
    }

    Ok(Scene {
        canvas_px: style.canvas_px,
        edges,
        markers,
        labels,
    })
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn text_width_px(text: &str, style: &RenderStyle) -> u32 {
    let scale = style.glyph_scale();
    let chars = text.chars().count() as u32;
    chars * (GLYPH_W + 1) * scale - scale
}

/// Points only, each with its ID label.
pub fn render_points(instance: &Instance, style: &RenderStyle) -> Result<Image, RenderError> {
    let scene = layout(instance, None, &[], style)?;
    encode(&rasterize(&scene, style))
}

/// Points plus the closed tour. Rotations and reversals of the same tour
/// render identically since edges are drawn from the sorted undirected set.
pub fn render_route(
    instance: &Instance,
    route: &Route,
    style: &RenderStyle,
) -> Result<Image, RenderError> {
    let scene = layout(instance, Some(route), &[], style)?;
    encode(&rasterize(&scene, style))
}

/// Like [`render_route`] / [`render_points`] with some nodes highlighted.
pub fn render_highlighted(
    instance: &Instance,
    route: Option<&Route>,
    highlight: &[u32],
    style: &RenderStyle,
) -> Result<Image, RenderError> {
    let scene = layout(instance, route, highlight, style)?;
    encode(&rasterize(&scene, style))
}

pub fn rasterize(scene: &Scene, style: &RenderStyle) -> RgbImage {
    let size = scene.canvas_px;
    let mut img = RgbImage::from_pixel(size, size, Rgb(style.background));
    let half_stroke = style.route_stroke_px as f64 / 2.0;
    for edge in &scene.edges {
        draw_segment(&mut img, edge.start, edge.end, half_stroke, Rgb(style.route_color));
    }
    let radius = style.marker_radius_px as f64;
    for m in &scene.markers {
        let color = if m.highlighted {
            style.highlight_color
        } else {
            style.point_color
        };
        draw_disk(&mut img, m.cx, m.cy, radius, Rgb(color));
    }
    let scale = style.glyph_scale();
    for label in &scene.labels {
        draw_text(
            &mut img,
            &label.text,
            label.bounds.x.round() as i64,
            label.bounds.y.round() as i64,
            scale,
            Rgb(style.label_color),
        );
    }
    img
}

pub fn encode(img: &RgbImage) -> Result<Image, RenderError> {
    let mut bytes = Vec::new();
    PngEncoder::new_with_quality(Cursor::new(&mut bytes), CompressionType::Default, FilterType::Adaptive)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| RenderError::Encode(e.to_string()))?;
    Ok(Image::from_png(bytes))
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_disk(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
    let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
    let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r * r {
                put(img, x, y, color);
            }
        }
    }
}

fn draw_segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), half: f64, color: Rgb<u8>) {
    let x0 = (a.0.min(b.0) - half).floor() as i64;
    let x1 = (a.0.max(b.0) + half).ceil() as i64;
    let y0 = (a.1.min(b.1) - half).floor() as i64;
    let y1 = (a.1.max(b.1) + half).ceil() as i64;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let t = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let ex = px - (a.0 + t * dx);
            let ey = py - (a.1 + t * dy);
            if ex * ex + ey * ey <= half * half {
                put(img, x, y, color);
            }
        }
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, scale: u32, color: Rgb<u8>) {
    let scale = scale as i64;
    let mut pen = x;
    for ch in text.chars() {
        if let Some(rows) = glyph(ch) {
            for (row, bits) in rows.iter().enumerate() {
                for col in 0..GLYPH_W as i64 {
                    if bits & (1 << (GLYPH_W as i64 - 1 - col)) != 0 {
                        for sy in 0..scale {
                            for sx in 0..scale {
                                put(img, pen + col * scale + sx, y + row as i64 * scale + sy, color);
                            }
                        }
                    }
                }
            }
        }
        pen += (GLYPH_W as i64 + 1) * scale;
    }
}

/// 5x7 bitmaps, one byte per row, most significant of the low 5 bits first.
fn glyph(ch: char) -> Option<[u8; 7]> {
    Some(match ch {
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
        _ => return None,
    })
}
