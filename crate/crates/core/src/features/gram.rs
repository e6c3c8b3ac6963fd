use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Pixel-averaged Gram matrix of `maps`, upper triangle in row-major order.
pub fn gram_matrix<M: AsRef<[f64]>>(maps: &[M]) -> Result<Vec<f64>> {
    let first = maps
        .first()
        .ok_or_else(|| Error::invalid("Gram matrix needs at least one map"))?
        .as_ref()
        .len();
    if let Some(bad) = maps.iter().find(|m| m.as_ref().len() != first) {
        return Err(Error::ShapeMismatch {
            expected: format!("{first} values per map"),
            got: format!("{} values", bad.as_ref().len()),
        });
    }
    let n = first as f64;
    let k = maps.len();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        let a = maps[i].as_ref();
        for map_j in &maps[i..] {
            let b = map_j.as_ref();
            out.push(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n);
        }
    }
    Ok(out)
}

/// Expands a packed upper triangle back into a full symmetric `k * k` matrix.
pub fn unpack_upper(upper: &[f64]) -> Option<(usize, Vec<f64>)> {
    let k = ((((8 * upper.len() + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if k * (k + 1) / 2 != upper.len() {
        return None;
    }
    let mut full = vec![0.0; k * k];
    let mut idx = 0;
    for i in 0..k {
        for j in i..k {
            full[i * k + j] = upper[idx];
            full[j * k + i] = upper[idx];
            idx += 1;
        }
    }
    Some((k, full))
}

/// `[R, G, B, luma, |d/dx luma|, |d/dy luma|]` with central differences and clamped borders.
pub fn proxy_style_maps(img: &ImageBuffer) -> Vec<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    let gray = img.gray();
    let at = |x: usize, y: usize| gray[y * w + x];
    let mut gx = Vec::with_capacity(gray.len());
    let mut gy = Vec::with_capacity(gray.len());
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gx.push(((at(xr, y) - at(xl, y)) / 2.0).abs());
            gy.push(((at(x, yd) - at(x, yu)) / 2.0).abs());
        }
    }
    vec![img.channel(0), img.channel(1), img.channel(2), gray, gx, gy]
}
