//! A deterministic stand-in for the diffusion model.
//!
//! [`synth_posterior`] turns a noise tensor into an RGB "posterior" whose
//! channel means are a strictly increasing function of the noise channel
//! means, so retrieval results have an analytic ground truth.
//! [`ToyDenoiser`] is a linear epsilon predictor whose clean-sample estimate
//! is a smoothed copy of its input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ddim::Denoiser;
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, Provenance};
use crate::schedule::Schedule;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub blur_sigma: f64,
    pub color_gain: f64,
    /// `(height, width)`; `None` keeps the noise's spatial size.
    #[serde(default)]
    pub output_size: Option<(usize, usize)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 4.0,
            color_gain: 0.5,
            output_size: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "blur_sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if let Some((h, w)) = self.output_size {
            if h == 0 || w == 0 {
                return Err(Error::invalid("output_size must be at least 1x1"));
            }
        }
        Ok(())
    }
}

/// Normalized Gaussian taps truncated at `ceil(3 sigma)`.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable convolution with periodic boundaries.
///
/// Wrapping keeps the operator doubly stochastic, so the plane mean is preserved.
fn convolve_separable(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * row[wrap(x as isize + k as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[wrap(y as isize + k as isize - radius, height) * width + x])
                .sum();
        }
    }
    out
}

pub fn gaussian_blur(plane: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    convolve_separable(plane, width, height, &gaussian_kernel(sigma))
}

/// Bilinear resampling with pixel-center alignment and clamped borders.
fn resample(plane: &[f64], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    if (out_w, out_h) == (width, height) {
        return plane.to_vec();
    }
    let src = |x: usize, y: usize| plane[y * width + x];
    let coord = |o: usize, n_out: usize, n_in: usize| {
        let c = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = c.floor() as usize;
        (i0, (i0 + 1).min(n_in - 1), c - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let (y0, y1, fy) = coord(oy, out_h, height);
        for ox in 0..out_w {
            let (x0, x1, fx) = coord(ox, out_w, width);
            let top = src(x0, y0) * (1.0 - fx) + src(x1, y0) * fx;
            let bottom = src(x0, y1) * (1.0 - fx) + src(x1, y1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// `clamp(0.5 + gain * mean(eps_c) + 0.25 * blur(eps_c), 0, 1)` for `c` in R, G, B.
pub fn synth_posterior(eps: &Tensor, cfg: &SynthConfig) -> Result<ImageBuffer> {
    cfg.validate()?;
    let shape = eps.shape();
    if shape.channels < 3 {
        return Err(Error::ShapeMismatch {
            expected: "at least 3 channels".into(),
            got: shape.to_string(),
        });
    }
    let (w, h) = (shape.width, shape.height);
    let (out_h, out_w) = cfg.output_size.unwrap_or((h, w));
    let kernel = gaussian_kernel(cfg.blur_sigma);
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let offset = 0.5 + cfg.color_gain * eps.plane_mean(c);
            let blurred = convolve_separable(eps.plane(c), w, h, &kernel);
            resample(&blurred, w, h, out_w, out_h)
                .into_iter()
                .map(|b| offset + 0.25 * b)
                .collect()
        })
        .collect();
    ImageBuffer::from_planes(out_w, out_h, &planes[0], &planes[1], &planes[2], Provenance::Synthetic)
}

/// Linear smoothing operator `P` of the toy denoiser.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {
    Identity,
    Box3,
    Gauss(f64),
}

impl Smoothing {
    pub fn apply(&self, x: &Tensor) -> Tensor {
        let shape = x.shape();
        let kernel = match *self {
            Smoothing::Identity => return x.clone(),
            Smoothing::Box3 => vec![1.0 / 3.0; 3],
            Smoothing::Gauss(sigma) => gaussian_kernel(sigma),
        };
        let mut out = Tensor::zeros(shape);
        for c in 0..shape.channels {
            let smoothed = convolve_separable(x.plane(c), shape.width, shape.height, &kernel);
            out.plane_mut(c).copy_from_slice(&smoothed);
        }
        out
    }
}

impl FromStr for Smoothing {
    type Err = Error;

    /// `identity`, `box3`, or `gauss(<sigma>)`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Smoothing::Identity),
            "box3" => Ok(Smoothing::Box3),
            _ => {
                let sigma = s
                    .strip_prefix("gauss(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown smoothing operator `{s}`")))?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid(format!("gauss sigma must be positive, got {sigma}")));
                }
                Ok(Smoothing::Gauss(sigma))
            }
        }
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothing::Identity => f.write_str("identity"),
            Smoothing::Box3 => f.write_str("box3"),
            Smoothing::Gauss(s) => write!(f, "gauss({s})"),
        }
    }
}

/// `eps_hat(x, t) = (x - sqrt(a_t) * P(x)) / sqrt(1 - a_t)`; its clean estimate is exactly `P(x)`.
#[derive(Clone, Debug)]
pub struct ToyDenoiser {
    coefficients: Vec<(f64, f64)>,
    smoothing: Smoothing,
}

impl ToyDenoiser {
    pub fn new(schedule: &Schedule, smoothing: Smoothing) -> Result<Self> {
        let coefficients = schedule
            .alphas_cumprod()
            .iter()
            .map(|&a| {
                if a >= 1.0 {
                    Err(Error::invalid("toy denoiser needs alpha_bar < 1 at every step"))
                } else {
                    Ok((a.sqrt(), 1.0 / (1.0 - a).sqrt()))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            coefficients,
            smoothing,
        })
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }
}

impl Denoiser for ToyDenoiser {
    fn predict(&self, x: &Tensor, t: usize) -> Tensor {
        let (signal, inv_noise) = self.coefficients[t];
        let smoothed = self.smoothing.apply(x);
        x.lincomb(inv_noise, &smoothed, -signal * inv_noise)
    }
}
