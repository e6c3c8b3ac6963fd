//! Gray-level co-occurrence matrices and their Haralick statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Statistic order within each offset's block of the texture vector.
pub const HARALICK_STATS: [&str; 4] = ["contrast", "correlation", "energy", "homogeneity"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlcmParams {
    pub levels: usize,
    /// `(dy, dx)` displacements.
    pub offsets: Vec<(isize, isize)>,
}

impl Default for GlcmParams {
    fn default() -> Self {
        Self {
            levels: 32,
            offsets: vec![(0, 1), (1, 0), (1, 1), (1, -1)],
        }
    }
}

impl GlcmParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::invalid(format!(
                "GLCM needs at least 2 levels, got {}",
                self.levels
            )));
        }
        if self.offsets.is_empty() {
            return Err(Error::invalid("GLCM needs at least one offset"));
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        4 * self.offsets.len()
    }
}

/// Uniform bins on `[0, 1]`; 1.0 falls in the top bin.
pub fn quantize(gray: &[f64], levels: usize) -> Vec<usize> {
    gray.iter()
        .map(|&g| ((g * levels as f64).floor().max(0.0) as usize).min(levels - 1))
        .collect()
}

/// Symmetric, normalized co-occurrence matrix (`levels * levels`, row-major).
pub fn cooccurrence(
    q: &[usize],
    width: usize,
    height: usize,
    levels: usize,
    (dy, dx): (isize, isize),
) -> Result<Vec<f64>> {
    if dy.unsigned_abs() >= height || dx.unsigned_abs() >= width {
        return Err(Error::invalid(format!(
            "GLCM offset ({dy}, {dx}) does not fit a {width}x{height} image"
        )));
    }
    let mut counts = vec![0u64; levels * levels];
    let y_range = (0.max(-dy) as usize)..((height as isize - dy.max(0)) as usize);
    let x_range = (0.max(-dx) as usize)..((width as isize - dx.max(0)) as usize);
    let mut pairs = 0u64;
    for y in y_range {
        let y2 = (y as isize + dy) as usize;
        for x in x_range.clone() {
            let x2 = (x as isize + dx) as usize;
            let a = q[y * width + x];
            let b = q[y2 * width + x2];
            counts[a * levels + b] += 1;
            counts[b * levels + a] += 1;
            pairs += 2;
        }
    }
    let total = pairs as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// `[contrast, correlation, energy, homogeneity]` of a normalized matrix.
///
/// Energy is the angular second moment. Correlation is 1 when either
/// marginal has zero variance.
pub fn haralick(p: &[f64], levels: usize) -> [f64; 4] {
    let mut mu_i = 0.0;
    let mut mu_j = 0.0;
    for i in 0..levels {
        for j in 0..levels {
            let v = p[i * levels + j];
            mu_i += i as f64 * v;
            mu_j += j as f64 * v;
        }
    }
    let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
    let (mut contrast, mut energy, mut homogeneity) = (0.0, 0.0, 0.0);
    for i in 0..levels {
        for j in 0..levels {
            let v = p[i * levels + j];
            if v == 0.0 {
                continue;
            }
            let di = i as f64 - mu_i;
            let dj = j as f64 - mu_j;
            let d = i as f64 - j as f64;
            var_i += di * di * v;
            var_j += dj * dj * v;
            cov += di * dj * v;
            contrast += d * d * v;
            energy += v * v;
            homogeneity += v / (1.0 + d * d);
        }
    }
    let denom = (var_i * var_j).sqrt();
    let correlation = if denom <= 1e-12 { 1.0 } else { cov / denom };
    [contrast, correlation, energy, homogeneity]
}

/// Haralick statistics for each offset, concatenated in offset order.
pub fn glcm_features(img: &ImageBuffer, params: &GlcmParams) -> Result<Vec<f64>> {
    params.validate()?;
    let q = quantize(&img.gray(), params.levels);
    let mut out = Vec::with_capacity(params.feature_len());
    for &offset in &params.offsets {
        let p = cooccurrence(&q, img.width(), img.height(), params.levels, offset)?;
        out.extend_from_slice(&haralick(&p, params.levels));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(n: usize) -> ImageBuffer {
        let v: Vec<f64> = (0..n * n).map(|i| ((i / n + i % n) % 2) as f64).collect();
        ImageBuffer::from_gray(n, n, &v).unwrap()
    }

    #[test]
    fn constant_image() {
        let img = ImageBuffer::from_gray(8, 8, &[0.3; 64]).unwrap();
        let f = glcm_features(&img, &GlcmParams::default()).unwrap();
        for block in f.chunks(4) {
            assert_eq!(block, &[0.0, 1.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn checkerboard_horizontal() {
        let params = GlcmParams {
            levels: 2,
            offsets: vec![(0, 1), (1, 1)],
        };
        let f = glcm_features(&checkerboard(8), &params).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[2], 0.5);
        assert!((f[1] + 1.0).abs() < 1e-12);
        // diagonal neighbours share a color; 25 of the 49 pairs are dark
        assert_eq!(&f[4..6], &[0.0, 1.0]);
        assert!((f[6] - (25.0f64.powi(2) + 24.0f64.powi(2)) / 49.0f64.powi(2)).abs() < 1e-15);
        assert_eq!(f[7], 1.0);
    }

    #[test]
    fn quantization_edges() {
        assert_eq!(quantize(&[0.0, 0.49, 0.5, 1.0], 2), vec![0, 0, 1, 1]);
        assert_eq!(quantize(&[0.999, 1.0], 32), vec![31, 31]);
    }

    #[test]
    fn matrices_are_normalized_and_symmetric() {
        let q: Vec<usize> = (0..35).map(|i| (i * 7 + i / 3) % 5).collect();
        for off in [(0, 1), (1, 0), (2, -1), (-1, 2), (0, 0)] {
            let p = cooccurrence(&q, 7, 5, 5, off).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..5 {
                for j in 0..5 {
                    assert_eq!(p[i * 5 + j], p[j * 5 + i]);
                }
            }
        }
    }

    #[test]
    fn offset_must_fit() {
        let img = ImageBuffer::from_gray(4, 2, &[0.1; 8]).unwrap();
        let bad = GlcmParams {
            levels: 4,
            offsets: vec![(2, 0)],
        };
        assert!(glcm_features(&img, &bad).is_err());
        let bad = GlcmParams {
            levels: 4,
            offsets: vec![(0, -4)],
        };
        assert!(glcm_features(&img, &bad).is_err());
        let ok = GlcmParams {
            levels: 4,
            offsets: vec![(1, -3)],
        };
        assert!(glcm_features(&img, &ok).is_ok());
    }
}
