//! Image fixtures and brute-force feature oracles.

use noisebank::image::ImageBuffer;

/// An asymmetric 10x8 patch pasted into a zero canvas at `(ox, oy)`.
pub fn blob(w: usize, h: usize, ox: usize, oy: usize) -> Vec<f64> {
    let mut g = vec![0.0; w * h];
    for py in 0..8 {
        for px in 0..10 {
            let v = ((px * 7 + py * 13 + px * py) % 11) as f64 / 10.0;
            g[(oy + py) * w + ox + px] = v;
        }
    }
    g
}

/// Raw moments first, then central moments by binomial expansion.
pub fn oracle_hu(gray: &[f64], w: usize) -> [f64; 7] {
    let m = |p: i32, q: i32| -> f64 {
        gray.iter()
            .enumerate()
            .map(|(i, &v)| ((i % w) as f64).powi(p) * ((i / w) as f64).powi(q) * v)
            .sum()
    };
    let m00 = m(0, 0);
    let (xb, yb) = (m(1, 0) / m00, m(0, 1) / m00);
    let mu20 = m(2, 0) - xb * m(1, 0);
    let mu02 = m(0, 2) - yb * m(0, 1);
    let mu11 = m(1, 1) - xb * m(0, 1);
    let mu30 = m(3, 0) - 3.0 * xb * m(2, 0) + 2.0 * xb * xb * m(1, 0);
    let mu03 = m(0, 3) - 3.0 * yb * m(0, 2) + 2.0 * yb * yb * m(0, 1);
    let mu21 = m(2, 1) - 2.0 * xb * m(1, 1) - yb * m(2, 0) + 2.0 * xb * xb * m(0, 1);
    let mu12 = m(1, 2) - 2.0 * yb * m(1, 1) - xb * m(0, 2) + 2.0 * yb * yb * m(1, 0);
    let eta = |mu: f64, p: i32, q: i32| mu / m00.powf(1.0 + (p + q) as f64 / 2.0);
    let (n20, n02, n11) = (eta(mu20, 2, 0), eta(mu02, 0, 2), eta(mu11, 1, 1));
    let (n30, n03, n21, n12) = (eta(mu30, 3, 0), eta(mu03, 0, 3), eta(mu21, 2, 1), eta(mu12, 1, 2));
    [
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11.powi(2),
        (n30 - 3.0 * n12).powi(2) + (3.0 * n21 - n03).powi(2),
        (n30 + n12).powi(2) + (n21 + n03).powi(2),
        (n30 - 3.0 * n12) * (n30 + n12) * ((n30 + n12).powi(2) - 3.0 * (n21 + n03).powi(2))
            + (3.0 * n21 - n03) * (n21 + n03) * (3.0 * (n30 + n12).powi(2) - (n21 + n03).powi(2)),
        (n20 - n02) * ((n30 + n12).powi(2) - (n21 + n03).powi(2))
            + 4.0 * n11 * (n30 + n12) * (n21 + n03),
        (3.0 * n21 - n03) * (n30 + n12) * ((n30 + n12).powi(2) - 3.0 * (n21 + n03).powi(2))
            - (n30 - 3.0 * n12) * (n21 + n03) * (3.0 * (n30 + n12).powi(2) - (n21 + n03).powi(2)),
    ]
}

/// Counts every ordered pair `(p, p + offset)` and its mirror.
pub fn oracle_glcm(q: &[usize], w: usize, h: usize, levels: usize, (dy, dx): (isize, isize)) -> Vec<f64> {
    let mut counts = vec![0.0; levels * levels];
    let mut total = 0.0;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (y2, x2) = (y + dy, x + dx);
            if y2 < 0 || x2 < 0 || y2 >= h as isize || x2 >= w as isize {
                continue;
            }
            let a = q[(y * w as isize + x) as usize];
            let b = q[(y2 * w as isize + x2) as usize];
            counts[a * levels + b] += 1.0;
            counts[b * levels + a] += 1.0;
            total += 2.0;
        }
    }
    counts.iter().map(|c| c / total).collect()
}

pub fn checkerboard(n: usize) -> ImageBuffer {
    let v: Vec<f64> = (0..n * n).map(|i| ((i % n + i / n) % 2) as f64).collect();
    ImageBuffer::from_gray(n, n, &v).unwrap()
}

/// `(2r + 1)`-square box filter with wrapped borders.
pub fn box_blur(img: &ImageBuffer, r: isize) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let g = img.gray();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let yy = (y as isize + dy).rem_euclid(h as isize) as usize;
                    let xx = (x as isize + dx).rem_euclid(w as isize) as usize;
                    s += g[yy * w + xx];
                }
            }
            out[y * w + x] = s / ((2 * r + 1) * (2 * r + 1)) as f64;
        }
    }
    ImageBuffer::from_gray(w, h, &out).unwrap()
}
