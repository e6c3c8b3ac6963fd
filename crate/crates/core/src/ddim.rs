//! Deterministic DDIM sampling, its inversion, and the noise-offset procedure.
//!
//! A sampling step maps `x_t` to `x_prev` through the clean-sample estimate
//! `x0_hat = (x_t - sqrt(1 - a_t) * eps_hat) / sqrt(a_t)`:
//!
//! ```text
//! x_prev = sqrt(a_prev) * x0_hat + sqrt(1 - a_prev) * eps_hat
//! ```
//!
//! where `eps_hat = denoiser(x_t, t)` and `a_prev = 1` after the last step.
//! Inversion walks the same timesteps in ascending order. Because `eps_hat`
//! is evaluated at the unknown noisier point, each inverse step is an implicit
//! equation; it is seeded with the usual explicit DDIM-inversion step and then
//! refined by fixed-point iteration until the step is reproduced.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::luma;
use crate::schedule::Schedule;
use crate::tensor::Tensor;

/// An epsilon predictor. Must be a deterministic function of `(x, t)`.
pub trait Denoiser: Sync {
    fn predict(&self, x: &Tensor, t: usize) -> Tensor;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, x: &Tensor, t: usize) -> Tensor {
        (**self).predict(x, t)
    }
}

/// Moves `x` from cumulative level `a_from` to `a_to` holding `eps` fixed.
fn transfer(x: &Tensor, eps: &Tensor, a_from: f64, a_to: f64) -> Tensor {
    let inv_from = 1.0 / a_from.sqrt();
    let noise_from = (1.0 - a_from).sqrt();
    let signal_to = a_to.sqrt();
    let noise_to = (1.0 - a_to).sqrt();
    let data = x
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&xv, &ev)| signal_to * ((xv - noise_from * ev) * inv_from) + noise_to * ev)
        .collect();
    Tensor::from_vec(x.shape(), data).expect("shapes agree")
}

fn check_prediction(x: &Tensor, eps: &Tensor) {
    assert_eq!(
        x.shape(),
        eps.shape(),
        "denoiser returned a prediction of the wrong shape"
    );
}

/// Runs `num_steps` deterministic DDIM steps from `x_t` at `t = T - 1` down to a clean sample.
pub fn ddim_sample<D: Denoiser + ?Sized>(
    x_t: &Tensor,
    schedule: &Schedule,
    denoiser: &D,
    num_steps: usize,
) -> Result<Tensor> {
    let timesteps = schedule.sampling_timesteps(num_steps)?;
    let mut x = x_t.clone();
    for (i, &t) in timesteps.iter().enumerate() {
        let prev = timesteps.get(i + 1).copied();
        let eps = denoiser.predict(&x, t);
        check_prediction(&x, &eps);
        x = transfer(
            &x,
            &eps,
            schedule.alpha_bar_or_one(Some(t)),
            schedule.alpha_bar_or_one(prev),
        );
    }
    Ok(x)
}

/// Controls the fixed-point refinement of each inverse step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionOptions {
    /// Refinement iterations per step after the explicit seed; 0 gives plain DDIM inversion.
    pub max_iters: usize,
    /// Stop once the max-abs update falls below `tolerance * (1 + max|x|)`.
    pub tolerance: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-14,
        }
    }
}

/// Maps a clean sample back to the initial noise that `ddim_sample` would turn into it.
pub fn ddim_invert<D: Denoiser + ?Sized>(
    x0: &Tensor,
    schedule: &Schedule,
    denoiser: &D,
    num_steps: usize,
) -> Result<Tensor> {
    ddim_invert_with(x0, schedule, denoiser, num_steps, InversionOptions::default())
}

pub fn ddim_invert_with<D: Denoiser + ?Sized>(
    x0: &Tensor,
    schedule: &Schedule,
    denoiser: &D,
    num_steps: usize,
    opts: InversionOptions,
) -> Result<Tensor> {
    let timesteps = schedule.sampling_timesteps(num_steps)?;
    let mut x = x0.clone();
    for i in (0..timesteps.len()).rev() {
        let t = timesteps[i];
        let a_t = schedule.alpha_bar_or_one(Some(t));
        let a_prev = schedule.alpha_bar_or_one(timesteps.get(i + 1).copied());

        let eps = denoiser.predict(&x, t);
        check_prediction(&x, &eps);
        let mut y = transfer(&x, &eps, a_prev, a_t);
        let mut best = (f64::INFINITY, y.clone());
        for _ in 0..opts.max_iters {
            let eps = denoiser.predict(&y, t);
            let next = transfer(&x, &eps, a_prev, a_t);
            let update = next.max_abs_diff(&y);
            let scale = 1.0 + next.data().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            y = next;
            if !update.is_finite() {
                break;
            }
            if update < best.0 {
                best = (update, y.clone());
            }
            if update <= opts.tolerance * scale {
                break;
            }
        }
        x = if opts.max_iters == 0 { y } else { best.1 };
    }
    Ok(x)
}

/// Color adjustment applied to the RGB view (channels 0..3) of a posterior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "adjust", content = "delta", rename_all = "kebab-case")]
pub enum Adjustment {
    /// Adds `delta` to every RGB value.
    Brightness(f64),
    /// Scales chroma around BT.601 luma by `1 + delta`; gray pixels are fixed points.
    Saturation(f64),
}

impl Adjustment {
    pub fn new(id: &str, delta: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&delta) {
            return Err(Error::invalid(format!("delta must lie in [-1, 1], got {delta}")));
        }
        match id.parse::<AdjustmentKind>()? {
            AdjustmentKind::Brightness => Ok(Adjustment::Brightness(delta)),
            AdjustmentKind::Saturation => Ok(Adjustment::Saturation(delta)),
        }
    }

    pub fn delta(&self) -> f64 {
        match *self {
            Adjustment::Brightness(d) | Adjustment::Saturation(d) => d,
        }
    }

    pub fn apply(&self, posterior: &mut Tensor) -> Result<()> {
        let shape = posterior.shape();
        if shape.channels < 3 {
            return Err(Error::ShapeMismatch {
                expected: "at least 3 channels".into(),
                got: shape.to_string(),
            });
        }
        let n = shape.plane_len();
        let data = posterior.data_mut();
        match *self {
            Adjustment::Brightness(delta) => {
                for v in &mut data[..3 * n] {
                    *v += delta;
                }
            }
            Adjustment::Saturation(delta) => {
                let gain = 1.0 + delta;
                let (r, rest) = data.split_at_mut(n);
                let (g, rest) = rest.split_at_mut(n);
                let b = &mut rest[..n];
                for i in 0..n {
                    let y = luma(r[i], g[i], b[i]);
                    r[i] = y + gain * (r[i] - y);
                    g[i] = y + gain * (g[i] - y);
                    b[i] = y + gain * (b[i] - y);
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjustmentKind {
    Brightness,
    Saturation,
}

impl FromStr for AdjustmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brightness" => Ok(AdjustmentKind::Brightness),
            "saturation" => Ok(AdjustmentKind::Saturation),
            other => Err(Error::UnknownAdjustment(other.to_string())),
        }
    }
}

impl fmt::Display for AdjustmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjustmentKind::Brightness => "brightness",
            AdjustmentKind::Saturation => "saturation",
        })
    }
}

/// Samples the unconditional posterior of `eps`, adjusts it, and inverts it back to noise.
pub fn noise_offset<D: Denoiser + ?Sized>(
    eps: &Tensor,
    adjustment: Adjustment,
    schedule: &Schedule,
    denoiser: &D,
    num_steps: usize,
) -> Result<Tensor> {
    let mut posterior = ddim_sample(eps, schedule, denoiser, num_steps)?;
    adjustment.apply(&mut posterior)?;
    ddim_invert(&posterior, schedule, denoiser, num_steps)
}
