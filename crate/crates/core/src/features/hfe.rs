//! High-frequency energy: fraction of non-DC spectral power beyond a radial cutoff.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub const DEFAULT_HFE_CUTOFF: f64 = 0.5;

/// Below this gray variance the image is treated as constant.
const FLAT_VARIANCE: f64 = 1e-20;

/// Signed frequency of DFT bin `k` in cycles per sample, in `[-0.5, 0.5]`.
fn signed_freq(k: usize, n: usize) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / n as f64
}

/// Power spectrum `|F|^2` of a real plane, row-major, unshifted.
pub(crate) fn power_spectrum(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();

    let row_fft = planner.plan_fft_forward(width);
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(height);
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// HFE of the BT.601 gray image. `cutoff` is a fraction of the Nyquist radius (0.5 cycles/sample).
///
/// Returns 0 for constant images.
pub fn hfe(img: &ImageBuffer, cutoff: f64) -> Result<f64> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::invalid(format!(
            "HFE cutoff must lie in (0, 1), got {cutoff}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut gray = img.gray();
    let n = gray.len() as f64;
    let mean = gray.iter().sum::<f64>() / n;
    let var = gray.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    if var <= FLAT_VARIANCE {
        return Ok(0.0);
    }
    for g in &mut gray {
        *g -= mean;
    }
    let power = power_spectrum(&gray, w, h);
    let radius = cutoff * 0.5;
    let (mut high, mut total) = (0.0, 0.0);
    for ky in 0..h {
        let fy = signed_freq(ky, h);
        for kx in 0..w {
            if kx == 0 && ky == 0 {
                continue;
            }
            let fx = signed_freq(kx, w);
            let e = power[ky * w + kx];
            total += e;
            if (fx * fx + fy * fy).sqrt() > radius {
                high += e;
            }
        }
    }
    Ok(if total > 0.0 { (high / total).clamp(0.0, 1.0) } else { 0.0 })
}
