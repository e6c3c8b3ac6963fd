//! Hu's seven moment invariants of the grayscale intensity distribution.

use crate::image::ImageBuffer;

const LOG_EPS: f64 = 1e-30;

/// Raw (unmapped) Hu invariants. An all-zero image yields all zeros.
pub fn hu_invariants(gray: &[f64], width: usize) -> [f64; 7] {
    let mut m00 = 0.0;
    let mut m10 = 0.0;
    let mut m01 = 0.0;
    for (i, &v) in gray.iter().enumerate() {
        let (x, y) = ((i % width) as f64, (i / width) as f64);
        m00 += v;
        m10 += x * v;
        m01 += y * v;
    }
    if m00 <= 0.0 {
        return [0.0; 7];
    }
    let cx = m10 / m00;
    let cy = m01 / m00;

    // central moments mu_pq for 2 <= p + q <= 3
    let (mut u20, mut u02, mut u11) = (0.0, 0.0, 0.0);
    let (mut u30, mut u03, mut u21, mut u12) = (0.0, 0.0, 0.0, 0.0);
    for (i, &v) in gray.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let dx = (i % width) as f64 - cx;
        let dy = (i / width) as f64 - cy;
        let (dx2, dy2) = (dx * dx, dy * dy);
        u20 += dx2 * v;
        u02 += dy2 * v;
        u11 += dx * dy * v;
        u30 += dx2 * dx * v;
        u03 += dy2 * dy * v;
        u21 += dx2 * dy * v;
        u12 += dx * dy2 * v;
    }

    let s2 = m00 * m00;
    let s3 = m00.powf(2.5);
    let (n20, n02, n11) = (u20 / s2, u02 / s2, u11 / s2);
    let (n30, n03, n21, n12) = (u30 / s3, u03 / s3, u21 / s3, u12 / s3);

    let a = n30 + n12;
    let b = n21 + n03;
    let c = n30 - 3.0 * n12;
    let d = 3.0 * n21 - n03;
    [
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11 * n11,
        c * c + d * d,
        a * a + b * b,
        c * a * (a * a - 3.0 * b * b) + d * b * (3.0 * a * a - b * b),
        (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b,
        d * a * (a * a - 3.0 * b * b) - c * b * (3.0 * a * a - b * b),
    ]
}

/// `h -> -sign(h) * log10(|h| + 1e-30)`, with `sign(0) = 0`.
pub fn log_map(h: f64) -> f64 {
    if h == 0.0 {
        0.0
    } else {
        -h.signum() * (h.abs() + LOG_EPS).log10()
    }
}

/// Log-mapped Hu invariants of the BT.601 gray image.
pub fn hu_moments(img: &ImageBuffer) -> [f64; 7] {
    hu_invariants(&img.gray(), img.width()).map(log_map)
}
