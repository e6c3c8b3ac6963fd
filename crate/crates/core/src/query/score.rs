use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::goal::{MatchFunction, Target};
use crate::error::{Error, Result};

/// One retrieval result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub noise_id: u64,
    pub score: f64,
}

/// Descending score, then ascending noise id.
pub fn rank_order(a: &Ranked, b: &Ranked) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.noise_id.cmp(&b.noise_id))
}

/// The `k` best entries of `items` in rank order.
pub(crate) fn take_top(mut items: Vec<Ranked>, k: usize) -> Vec<Ranked> {
    if k == 0 {
        return Vec::new();
    }
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, rank_order);
        items.truncate(k);
    }
    items.sort_unstable_by(rank_order);
    items
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores one feature vector against a target; higher is better.
///
/// Distances are negated. Cosine is 0 when either vector has zero norm.
/// `Maximize` and `Minimize` score a scalar feature directly.
pub fn match_score(feature: &[f64], target: &Target, matcher: MatchFunction) -> Result<f64> {
    let score = match target {
        Target::Maximize | Target::Minimize => {
            if feature.len() != 1 {
                return Err(Error::ArityMismatch {
                    feature: format!("{} directive", if *target == Target::Maximize { "maximize" } else { "minimize" }),
                    expected: 1,
                    got: feature.len(),
                });
            }
            if *target == Target::Maximize {
                feature[0]
            } else {
                -feature[0]
            }
        }
        Target::Values(t) => {
            if feature.len() != t.len() {
                return Err(Error::ArityMismatch {
                    feature: format!("{matcher} target"),
                    expected: t.len(),
                    got: feature.len(),
                });
            }
            if t.is_empty() {
                return Err(Error::invalid("cannot score empty vectors"));
            }
            let diffs = feature.iter().zip(t).map(|(a, b)| a - b);
            match matcher {
                MatchFunction::Cosine => {
                    let na = dot(feature, feature).sqrt();
                    let nb = dot(t, t).sqrt();
                    if na == 0.0 || nb == 0.0 {
                        0.0
                    } else {
                        dot(feature, t) / (na * nb)
                    }
                }
                MatchFunction::Mse => -diffs.map(|d| d * d).sum::<f64>() / t.len() as f64,
                MatchFunction::Absdiff => -diffs.map(f64::abs).sum::<f64>(),
                MatchFunction::Euclidean => -diffs.map(|d| d * d).sum::<f64>().sqrt(),
            }
        }
    };
    // folds -0.0 into 0.0 so equal scores tie under total ordering
    Ok(score + 0.0)
}
