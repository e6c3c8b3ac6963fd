//! Finite-step variance schedules and the closed-form forward process.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset `s` of the squared-cosine cumulative curve.
const COSINE_OFFSET: f64 = 0.008;
/// Upper clip on per-step betas of the cosine schedule.
const COSINE_MAX_BETA: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Linear,
    ScaledLinear,
    Cosine,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::ScaledLinear => "scaled-linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "scaled-linear" | "scaled_linear" => Ok(ScheduleKind::ScaledLinear),
            "cosine" | "squaredcos" => Ok(ScheduleKind::Cosine),
            other => Err(Error::invalid(format!("unknown schedule kind `{other}`"))),
        }
    }
}

/// Betas and cumulative alpha products of a `T`-step diffusion process.
///
/// All arithmetic is `f64`: the product of a thousand factors close to one
/// loses most of its digits in single precision.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alphas_cumprod: Vec<f64>,
}

impl Schedule {
    /// Builds a schedule. The cosine kind ignores `beta_start` and `beta_end`.
    pub fn new(kind: ScheduleKind, steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        let betas = match kind {
            ScheduleKind::Linear => {
                check_beta_bounds(beta_start, beta_end)?;
                linspace(beta_start, beta_end, steps)
            }
            ScheduleKind::ScaledLinear => {
                check_beta_bounds(beta_start, beta_end)?;
                linspace(beta_start.sqrt(), beta_end.sqrt(), steps)
                    .into_iter()
                    .map(|b| b * b)
                    .collect()
            }
            ScheduleKind::Cosine => cosine_betas(steps),
        };
        Ok(Self::from_betas(kind, betas))
    }

    /// The latent-diffusion default: scaled-linear, 1000 steps, 0.00085 to 0.012.
    pub fn stable_diffusion() -> Self {
        Self::new(ScheduleKind::ScaledLinear, 1000, 0.00085, 0.012)
            .expect("default schedule parameters are valid")
    }

    fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Self {
        let alphas_cumprod = betas
            .iter()
            .scan(1.0_f64, |prod, beta| {
                *prod *= 1.0 - beta;
                Some(*prod)
            })
            .collect();
        Self {
            kind,
            betas,
            alphas_cumprod,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas_cumprod(&self) -> &[f64] {
        &self.alphas_cumprod
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alphas_cumprod
            .get(t)
            .copied()
            .ok_or(Error::TimestepOutOfRange {
                t,
                steps: self.steps(),
            })
    }

    /// Cumulative product at `t`, where `None` is the virtual step before 0.
    pub(crate) fn alpha_bar_or_one(&self, t: Option<usize>) -> f64 {
        t.map_or(1.0, |t| self.alphas_cumprod[t])
    }

    /// Coefficients `(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))` of the closed-form forward process.
    pub fn coefficients(&self, t: usize) -> Result<(f64, f64)> {
        let a = self.alpha_bar(t)?;
        Ok((a.sqrt(), (1.0 - a).sqrt()))
    }

    /// Residual signal left at the final timestep.
    pub fn residual_signal(&self) -> ResidualSignal {
        let a = *self.alphas_cumprod.last().expect("schedule has >= 1 step");
        ResidualSignal {
            signal: a.sqrt(),
            noise: (1.0 - a).sqrt(),
        }
    }

    /// Evenly strided descending timesteps `T-1, T-1-s, ...` with `s = T / num_steps`.
    pub fn sampling_timesteps(&self, num_steps: usize) -> Result<Vec<usize>> {
        let steps = self.steps();
        if num_steps == 0 || num_steps > steps {
            return Err(Error::invalid(format!(
                "num_steps must be in 1..={steps}, got {num_steps}"
            )));
        }
        let stride = steps / num_steps;
        Ok((0..num_steps).map(|i| steps - 1 - i * stride).collect())
    }
}

/// Weights of `x0` and `eps` in `x_T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualSignal {
    pub signal: f64,
    pub noise: f64,
}

fn check_beta_bounds(beta_start: f64, beta_end: f64) -> Result<()> {
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(format!(
            "betas must satisfy 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    Ok(())
}

fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    let span = end - start;
    let denom = (n - 1) as f64;
    (0..n).map(|i| start + span * (i as f64) / denom).collect()
}

fn cosine_alpha_bar(t: f64) -> f64 {
    let angle = (t + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2;
    angle.cos().powi(2)
}

fn cosine_betas(steps: usize) -> Vec<f64> {
    let n = steps as f64;
    (0..steps)
        .map(|i| {
            let t1 = i as f64 / n;
            let t2 = (i + 1) as f64 / n;
            (1.0 - cosine_alpha_bar(t2) / cosine_alpha_bar(t1)).min(COSINE_MAX_BETA)
        })
        .collect()
}

/// `sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps`, elementwise.
pub fn forward_diffuse(x0: &[f64], t: usize, eps: &[f64], schedule: &Schedule) -> Result<Vec<f64>> {
    if x0.len() != eps.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", x0.len()),
            got: format!("{} values", eps.len()),
        });
    }
    let (signal, noise) = schedule.coefficients(t)?;
    Ok(x0
        .iter()
        .zip(eps)
        .map(|(x, e)| signal * x + noise * e)
        .collect())
}
