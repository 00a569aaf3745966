use serde::{Deserialize, Serialize};

use super::render::HeatMap;
use crate::error::{shape_err, Error, Result};
use crate::raster::BinaryMask;

pub const DEFAULT_TOP_FRACTION: f64 = 0.1;

/// How much of a heatmap's top mass falls on the ground-truth region,
/// relative to what a map unrelated to the mask would put there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScore {
    /// Share of the selected heat mass that lies inside the mask.
    pub mass_in_mask_fraction: f64,
    pub mask_area_fraction: f64,
    /// `mass_in_mask_fraction / mask_area_fraction`; 1 is chance level.
    pub concentration_ratio: f64,
    pub threshold: f64,
    /// The map carried no mass to score; the ratio is reported as 0.
    pub degenerate: bool,
}

/// Keeps the pixels at or above the `(1 − top_fraction)` quantile of the
/// normalized map (ties included) and measures the share of their mass
/// inside the mask.
pub fn localization_score(heatmap: &HeatMap, mask: &BinaryMask, top_fraction: f64) -> Result<LocalizationScore> {
    let n = heatmap.width * heatmap.height;
    if mask.dims() != (heatmap.width, heatmap.height) {
        return Err(shape_err(
            "localization_score",
            format!("{}×{} mask", heatmap.width, heatmap.height),
            format!("{}×{}", mask.width(), mask.height()),
        ));
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("top fraction {top_fraction} outside (0, 1]")));
    }
    if mask.is_empty() {
        return Err(Error::InvalidArgument("empty ground-truth mask".into()));
    }
    let mask_area_fraction = mask.area_fraction();
    let values = &heatmap.normalized;
    let mut sorted: Vec<f32> = values.clone();
    sorted.sort_by(f32::total_cmp);
    let k = (((1.0 - top_fraction) * n as f64).floor() as usize).min(n - 1);
    let threshold = sorted[k];
    let (mut inside, mut total) = (0.0f64, 0.0f64);
    for (&v, &m) in values.iter().zip(mask.bits()) {
        if v >= threshold {
            total += v as f64;
            if m {
                inside += v as f64;
            }
        }
    }
    if heatmap.degenerate || total <= 0.0 {
        return Ok(LocalizationScore {
            mass_in_mask_fraction: 0.0,
            mask_area_fraction,
            concentration_ratio: 0.0,
            threshold: threshold as f64,
            degenerate: true,
        });
    }
    let mass_in_mask_fraction = inside / total;
    Ok(LocalizationScore {
        mass_in_mask_fraction,
        mask_area_fraction,
        concentration_ratio: mass_in_mask_fraction / mask_area_fraction,
        threshold: threshold as f64,
        degenerate: false,
    })
}
