use std::borrow::Cow;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureRecord};
use crate::library::LibraryHeader;

/// Scoring rule of a stage, oriented so that higher is better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchFunction {
    Cosine,
    Mse,
    Absdiff,
    Euclidean,
}

impl MatchFunction {
    pub const ALL: [MatchFunction; 4] = [
        MatchFunction::Cosine,
        MatchFunction::Mse,
        MatchFunction::Absdiff,
        MatchFunction::Euclidean,
    ];

    /// The conventional match function for each feature kind.
    pub fn default_for(kind: FeatureKind) -> Self {
        match kind {
            FeatureKind::Semantic => MatchFunction::Cosine,
            FeatureKind::Style => MatchFunction::Mse,
            FeatureKind::Color | FeatureKind::Sharpness => MatchFunction::Absdiff,
            FeatureKind::Texture | FeatureKind::Shape => MatchFunction::Euclidean,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MatchFunction::Cosine => "cosine",
            MatchFunction::Mse => "mse",
            MatchFunction::Absdiff => "absdiff",
            MatchFunction::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for MatchFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MatchFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MatchFunction::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMatchFunction(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColorField {
    MeanRgb,
    MeanSaturation,
    MeanBrightness,
    Contrast,
    MeanLab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Selector {
    Whole,
    Color(ColorField),
    /// One element of a vector feature, or of a color sub-vector.
    Element(Option<ColorField>, usize),
}

/// A feature or a dotted path into one, e.g. `shape`, `texture.3`, `color.mean_rgb.0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeaturePath {
    kind: FeatureKind,
    selector: Selector,
    text: String,
}

impl FeaturePath {
    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn whole(kind: FeatureKind) -> Self {
        Self {
            kind,
            selector: Selector::Whole,
            text: kind.name().to_string(),
        }
    }

    /// Number of values the path selects, when the library header fixes it.
    pub fn arity(&self, header: &LibraryHeader) -> Option<usize> {
        match self.selector {
            Selector::Element(..) => Some(1),
            Selector::Color(ColorField::MeanRgb | ColorField::MeanLab) => Some(3),
            Selector::Color(_) => Some(1),
            Selector::Whole => header.feature_len(self.kind),
        }
    }

    /// The selected values of `rec`, or `None` when the feature is absent or
    /// an element index is out of bounds.
    pub fn extract<'a>(&self, rec: &'a FeatureRecord) -> Option<Cow<'a, [f64]>> {
        use std::slice::from_ref;
        let whole: Cow<'a, [f64]> = match self.kind {
            FeatureKind::Semantic => Cow::Borrowed(rec.semantic.as_deref()?),
            FeatureKind::Style => Cow::Borrowed(rec.style_gram.as_deref()?),
            FeatureKind::Texture => Cow::Borrowed(rec.texture.as_deref()?),
            FeatureKind::Shape => Cow::Borrowed(rec.shape.as_ref()?.as_slice()),
            FeatureKind::Sharpness => Cow::Borrowed(from_ref(rec.sharpness.as_ref()?)),
            FeatureKind::Color => {
                let c = rec.color.as_ref()?;
                let field = match self.selector {
                    Selector::Whole | Selector::Element(None, _) => None,
                    Selector::Color(f) | Selector::Element(Some(f), _) => Some(f),
                };
                match field {
                    None => Cow::Owned(c.to_vec()),
                    Some(ColorField::MeanRgb) => Cow::Borrowed(c.mean_rgb.as_slice()),
                    Some(ColorField::MeanLab) => Cow::Borrowed(c.mean_lab.as_slice()),
                    Some(ColorField::MeanSaturation) => Cow::Borrowed(from_ref(&c.mean_saturation)),
                    Some(ColorField::MeanBrightness) => Cow::Borrowed(from_ref(&c.mean_brightness)),
                    Some(ColorField::Contrast) => Cow::Borrowed(from_ref(&c.contrast)),
                }
            }
        };
        match self.selector {
            Selector::Element(_, i) => match whole {
                Cow::Borrowed(s) => s.get(i).map(|v| Cow::Borrowed(from_ref(v))),
                Cow::Owned(v) => v.get(i).map(|&x| Cow::Owned(vec![x])),
            },
            _ => Some(whole),
        }
    }
}

impl fmt::Display for FeaturePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for FeaturePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownFeature(s.to_string());
        let mut parts = s.split('.');
        let head = parts.next().ok_or_else(unknown)?;
        let kind = match head {
            "style_gram" => FeatureKind::Style,
            other => other.parse().map_err(|_| unknown())?,
        };
        let rest: Vec<&str> = parts.collect();
        let index = |p: &str| p.parse::<usize>().map_err(|_| unknown());
        let selector = match (kind, rest.as_slice()) {
            (_, []) => Selector::Whole,
            (FeatureKind::Color, [name, tail @ ..]) => {
                let field = match *name {
                    "mean_rgb" => Some(ColorField::MeanRgb),
                    "mean_saturation" => Some(ColorField::MeanSaturation),
                    "mean_brightness" => Some(ColorField::MeanBrightness),
                    "contrast" => Some(ColorField::Contrast),
                    "mean_lab" => Some(ColorField::MeanLab),
                    _ => None,
                };
                match (field, tail) {
                    (Some(f), []) => Selector::Color(f),
                    (Some(f @ (ColorField::MeanRgb | ColorField::MeanLab)), [i]) => {
                        let i = index(i)?;
                        if i >= 3 {
                            return Err(unknown());
                        }
                        Selector::Element(Some(f), i)
                    }
                    (None, []) => {
                        let i = index(name)?;
                        if i >= 9 {
                            return Err(unknown());
                        }
                        Selector::Element(None, i)
                    }
                    _ => return Err(unknown()),
                }
            }
            (FeatureKind::Shape, [i]) => {
                let i = index(i)?;
                if i >= 7 {
                    return Err(unknown());
                }
                Selector::Element(None, i)
            }
            (FeatureKind::Semantic | FeatureKind::Style | FeatureKind::Texture, [i]) => {
                Selector::Element(None, index(i)?)
            }
            _ => return Err(unknown()),
        };
        Ok(Self {
            kind,
            selector,
            text: s.to_string(),
        })
    }
}

/// The desired feature value of a stage.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Values(Vec<f64>),
    /// Prefer the largest scalar.
    Maximize,
    /// Prefer the smallest scalar.
    Minimize,
}

impl Target {
    pub fn scalar(v: f64) -> Self {
        Target::Values(vec![v])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub feature: FeaturePath,
    pub target: Target,
    pub matcher: MatchFunction,
    pub keep: usize,
}

impl Stage {
    pub fn new(feature: FeaturePath, target: Target, matcher: MatchFunction, keep: usize) -> Self {
        Self {
            feature,
            target,
            matcher,
            keep,
        }
    }

    /// Checks target arity and finiteness against a library header.
    pub fn check(&self, header: &LibraryHeader) -> Result<()> {
        if !header.feature_config.enabled(self.feature.kind()) {
            return Err(Error::invalid(format!(
                "feature `{}` is not enabled in this library",
                self.feature
            )));
        }
        match (&self.target, self.feature.arity(header)) {
            (Target::Values(v), Some(n)) if v.len() != n => Err(Error::ArityMismatch {
                feature: self.feature.to_string(),
                expected: n,
                got: v.len(),
            }),
            (Target::Values(v), _) if v.iter().any(|x| !x.is_finite()) => {
                Err(Error::invalid(format!("target for `{}` is not finite", self.feature)))
            }
            (Target::Maximize | Target::Minimize, Some(n)) if n != 1 => Err(Error::ArityMismatch {
                feature: self.feature.to_string(),
                expected: 1,
                got: n,
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalSpec {
    pub stages: Vec<Stage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    feature: String,
    target: serde_json::Value,
    #[serde(rename = "match", default)]
    matcher: Option<String>,
    #[serde(default)]
    keep: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGoal {
    stages: Vec<RawStage>,
}

/// Keep counts used when a stage omits `keep`: 20, 5, ... shrinking by 4x,
/// with the final stage keeping 1.
pub fn default_keep(stage: usize, stages: usize) -> usize {
    if stage + 1 == stages {
        return 1;
    }
    let shrink = 4usize.saturating_pow(stage as u32);
    (20 / shrink).max(1)
}

fn parse_target(value: &serde_json::Value, base_dir: &Path) -> Result<Target> {
    use serde_json::Value;
    let bad = || Error::invalid(format!("unsupported target {value}"));
    match value {
        Value::Number(n) => Ok(Target::scalar(n.as_f64().ok_or_else(bad)?)),
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_f64().ok_or_else(bad))
            .collect::<Result<Vec<_>>>()
            .map(Target::Values),
        Value::String(s) if s == "maximize" => Ok(Target::Maximize),
        Value::String(s) if s == "minimize" => Ok(Target::Minimize),
        Value::String(s) => match s.strip_prefix('@') {
            Some(name) => Ok(Target::Values(crate::library::read_f32_file(
                &base_dir.join(name),
            )?)),
            None => Err(bad()),
        },
        _ => Err(bad()),
    }
}

impl GoalSpec {
    pub fn single(stage: Stage) -> Self {
        Self {
            stages: vec![stage],
        }
    }

    /// Parses a goal document; `@file` targets resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawGoal = serde_json::from_str(text)?;
        let n = raw.stages.len();
        let stages = raw
            .stages
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let feature: FeaturePath = s.feature.parse()?;
                let matcher = match s.matcher {
                    Some(m) => m.parse()?,
                    None => MatchFunction::default_for(feature.kind()),
                };
                Ok(Stage {
                    target: parse_target(&s.target, base_dir)?,
                    keep: s.keep.unwrap_or_else(|| default_keep(i, n)),
                    feature,
                    matcher,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let goal = Self { stages };
        goal.validate()?;
        Ok(goal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("a goal needs at least one stage"));
        }
        if let Some(i) = self.stages.iter().position(|s| s.keep == 0) {
            return Err(Error::invalid(format!("stage {}: keep must be positive", i + 1)));
        }
        Ok(())
    }
}
