use serde::{Deserialize, Serialize};

use crate::image::{luma, ImageBuffer};

/// D65 reference white in XYZ.
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorFeatures {
    pub mean_rgb: [f64; 3],
    /// Mean HSV saturation.
    pub mean_saturation: f64,
    /// Mean HSV value.
    pub mean_brightness: f64,
    /// Population standard deviation of the BT.601 gray image.
    pub contrast: f64,
    pub mean_lab: [f64; 3],
}

impl ColorFeatures {
    /// Flattened as `[r, g, b, saturation, brightness, contrast, L, a, b]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(9);
        v.extend_from_slice(&self.mean_rgb);
        v.extend_from_slice(&[self.mean_saturation, self.mean_brightness, self.contrast]);
        v.extend_from_slice(&self.mean_lab);
        v
    }
}

fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB in `[0, 1]` to CIELAB under D65.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_decode);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let fx = lab_f(x / WHITE_D65[0]);
    let fy = lab_f(y / WHITE_D65[1]);
    let fz = lab_f(z / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn color_features(img: &ImageBuffer) -> ColorFeatures {
    let n = img.len() as f64;
    let mut rgb = [0.0; 3];
    let mut sat = 0.0;
    let mut val = 0.0;
    let mut lab = [0.0; 3];
    let mut gray_sum = 0.0;
    for p in img.pixels() {
        for c in 0..3 {
            rgb[c] += p[c];
        }
        let max = p[0].max(p[1]).max(p[2]);
        let min = p[0].min(p[1]).min(p[2]);
        val += max;
        if max > 0.0 {
            sat += (max - min) / max;
        }
        let l = srgb_to_lab(*p);
        for c in 0..3 {
            lab[c] += l[c];
        }
        gray_sum += luma(p[0], p[1], p[2]);
    }
    let gray_mean = gray_sum / n;
    let var = img
        .pixels()
        .iter()
        .map(|p| (luma(p[0], p[1], p[2]) - gray_mean).powi(2))
        .sum::<f64>()
        / n;
    ColorFeatures {
        mean_rgb: rgb.map(|s| s / n),
        mean_saturation: sat / n,
        mean_brightness: val / n,
        contrast: var.sqrt(),
        mean_lab: lab.map(|s| s / n),
    }
}
