use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::raster::{resize_bilinear, to_u8, ImageRGB};
use crate::synth::blend_paste;

pub const DEFAULT_BLEND: f32 = 0.4;

/// A class activation map upsampled to image resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub width: usize,
    pub height: usize,
    /// The CAM at feature-map resolution, `raw_width × raw_height`.
    pub raw: Vec<f32>,
    pub raw_width: usize,
    pub raw_height: usize,
    /// Upsampled and min–max normalized to [0, 1]; all zeros when
    /// degenerate.
    pub normalized: Vec<f32>,
    /// Range of the upsampled map that the normalization divided out.
    pub min: f32,
    pub max: f32,
    /// The map was constant (typically all zero after the ReLU), so it
    /// carries no localization.
    pub degenerate: bool,
}

impl HeatMap {
    /// The normalized map as 8-bit gray.
    pub fn to_gray(&self) -> Vec<u8> {
        self.normalized.iter().map(|&v| to_u8(v * 255.0)).collect()
    }
}

/// Bilinear upsampling of a `rw×rh` map to `w×h` (the same resampler used for
/// dataset resizing), then min–max normalization.
pub fn upsample_and_normalize(raw: &[f32], rw: usize, rh: usize, w: usize, h: usize) -> Result<HeatMap> {
    if rw == 0 || rh == 0 || w == 0 || h == 0 || raw.len() != rw * rh {
        return Err(shape_err("upsample_and_normalize", format!("{rw}×{rh} nonempty map"), format!("{} values", raw.len())));
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite CAM value at {i}")));
    }
    let up = resize_bilinear(raw, rw, rh, w, h);
    let min = up.iter().copied().fold(f32::INFINITY, f32::min);
    let max = up.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let degenerate = max - min <= f32::EPSILON * max.abs().max(1.0);
    let normalized = if degenerate {
        vec![0.0; w * h]
    } else {
        up.iter().map(|&v| ((v - min) / (max - min)).clamp(0.0, 1.0)).collect()
    };
    Ok(HeatMap {
        width: w,
        height: h,
        raw: raw.to_vec(),
        raw_width: rw,
        raw_height: rh,
        normalized,
        min,
        max,
        degenerate,
    })
}

const JET_ANCHORS: [[f32; 3]; 5] = [[0.0, 0.0, 255.0], [0.0, 255.0, 255.0], [0.0, 255.0, 0.0], [255.0, 255.0, 0.0], [255.0, 0.0, 0.0]];

/// 256-entry jet-style table: blue → cyan → green → yellow → red, linear
/// between anchors at 0, ¼, ½, ¾ and 1.
pub fn colormap_lut() -> [[u8; 3]; 256] {
    let mut lut = [[0u8; 3]; 256];
    for (i, e) in lut.iter_mut().enumerate() {
        let t = i as f32 / 255.0 * 4.0;
        let k = (t.floor() as usize).min(3);
        let f = t - k as f32;
        for c in 0..3 {
            e[c] = to_u8(JET_ANCHORS[k][c] + f * (JET_ANCHORS[k + 1][c] - JET_ANCHORS[k][c]));
        }
    }
    lut
}

/// Colorizes the normalized heatmap and composites it over the image with
/// constant opacity `blend`, using the same rule as forgery pasting.
pub fn render_overlay(image: &ImageRGB, heatmap: &HeatMap, blend: f32) -> Result<ImageRGB> {
    let (w, h) = image.dims();
    if (heatmap.width, heatmap.height) != (w, h) {
        return Err(shape_err("render_overlay", format!("{w}×{h} heatmap"), format!("{}×{}", heatmap.width, heatmap.height)));
    }
    if !(0.0..=1.0).contains(&blend) {
        return Err(Error::InvalidArgument(format!("blend {blend} outside [0, 1]")));
    }
    let lut = colormap_lut();
    let mut colored = Vec::with_capacity(w * h * 3);
    for &v in &heatmap.normalized {
        colored.extend_from_slice(&lut[to_u8(v * 255.0) as usize]);
    }
    blend_paste(image, &ImageRGB::from_raw(w, h, colored)?, &vec![blend; w * h])
}

/// The colorized heatmap alone.
pub fn render_colormap(heatmap: &HeatMap) -> Result<ImageRGB> {
    let lut = colormap_lut();
    let px = heatmap.normalized.iter().flat_map(|&v| lut[to_u8(v * 255.0) as usize]).collect();
    ImageRGB::from_raw(heatmap.width, heatmap.height, px)
}
