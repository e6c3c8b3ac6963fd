//! Per-posterior feature extraction: the keys of the noise library.

mod color;
mod embedding;
mod glcm;
mod gram;
mod hfe;
mod hu;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub use color::{color_features, srgb_to_lab, ColorFeatures};
pub use embedding::normalize_embedding;
pub use glcm::{cooccurrence, glcm_features, haralick, quantize, GlcmParams, HARALICK_STATS};
pub use gram::{gram_matrix, proxy_style_maps, unpack_upper};
pub use hfe::{hfe, DEFAULT_HFE_CUTOFF};
pub use hu::{hu_invariants, hu_moments, log_map};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Semantic,
    Style,
    Color,
    Texture,
    Shape,
    Sharpness,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Semantic,
        FeatureKind::Style,
        FeatureKind::Color,
        FeatureKind::Texture,
        FeatureKind::Shape,
        FeatureKind::Sharpness,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Semantic => "semantic",
            FeatureKind::Style => "style",
            FeatureKind::Color => "color",
            FeatureKind::Texture => "texture",
            FeatureKind::Shape => "shape",
            FeatureKind::Sharpness => "sharpness",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownFeature(s.to_string()))
    }
}

/// Source of the maps behind the style Gram matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleMaps {
    /// RGB, luma and absolute luma gradients of the posterior itself.
    #[default]
    Proxy,
    /// Gram matrices arrive through record ingestion.
    External,
}

fn default_kinds() -> Vec<FeatureKind> {
    vec![
        FeatureKind::Style,
        FeatureKind::Color,
        FeatureKind::Texture,
        FeatureKind::Shape,
        FeatureKind::Sharpness,
    ]
}

fn default_hfe_cutoff() -> f64 {
    DEFAULT_HFE_CUTOFF
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(default)]
    pub semantic_dim: Option<usize>,
    #[serde(default)]
    pub glcm: GlcmParams,
    #[serde(default = "default_hfe_cutoff")]
    pub hfe_cutoff: f64,
    #[serde(default)]
    pub style_maps: StyleMaps,
    /// Image-derived kinds to extract. Semantic is governed by `semantic_dim`.
    #[serde(default = "default_kinds")]
    pub kinds: Vec<FeatureKind>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            semantic_dim: None,
            glcm: GlcmParams::default(),
            hfe_cutoff: DEFAULT_HFE_CUTOFF,
            style_maps: StyleMaps::Proxy,
            kinds: default_kinds(),
        }
    }
}

impl FeatureConfig {
    pub fn only(kinds: &[FeatureKind]) -> Self {
        Self {
            kinds: kinds.to_vec(),
            ..Self::default()
        }
    }

    pub fn enabled(&self, kind: FeatureKind) -> bool {
        match kind {
            FeatureKind::Semantic => self.semantic_dim.is_some(),
            other => self.kinds.contains(&other),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.semantic_dim == Some(0) {
            return Err(Error::invalid("semantic_dim must be positive"));
        }
        if self.kinds.contains(&FeatureKind::Semantic) && self.semantic_dim.is_none() {
            return Err(Error::invalid("semantic kind requested without semantic_dim"));
        }
        if !(self.hfe_cutoff > 0.0 && self.hfe_cutoff < 1.0) {
            return Err(Error::invalid(format!(
                "hfe_cutoff must lie in (0, 1), got {}",
                self.hfe_cutoff
            )));
        }
        self.glcm.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: FeatureConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything known about one noise sample's posterior.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub noise_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic: Option<Vec<f64>>,
    /// Upper triangle, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_gram: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<ColorFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<[f64; 7]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<f64>,
}

impl FeatureRecord {
    pub fn has(&self, kind: FeatureKind) -> bool {
        match kind {
            FeatureKind::Semantic => self.semantic.is_some(),
            FeatureKind::Style => self.style_gram.is_some(),
            FeatureKind::Color => self.color.is_some(),
            FeatureKind::Texture => self.texture.is_some(),
            FeatureKind::Shape => self.shape.is_some(),
            FeatureKind::Sharpness => self.sharpness.is_some(),
        }
    }

    pub fn present_kinds(&self) -> Vec<FeatureKind> {
        FeatureKind::ALL.into_iter().filter(|k| self.has(*k)).collect()
    }
}

/// Extracts every kind enabled in `config` from `img`.
///
/// `external_semantic` is normalized and becomes the semantic key; it is an
/// error to pass one when the config declares no semantic dimension or when
/// the dimensions disagree.
pub fn extract_all(
    img: &ImageBuffer,
    config: &FeatureConfig,
    external_semantic: Option<&[f64]>,
) -> Result<FeatureRecord> {
    let mut rec = FeatureRecord::default();
    match (external_semantic, config.semantic_dim) {
        (Some(v), Some(dim)) => {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: 0,
                    expected: dim,
                    got: v.len(),
                });
            }
            rec.semantic = Some(normalize_embedding(v)?);
        }
        (Some(_), None) => {
            return Err(Error::invalid(
                "semantic embedding supplied but the feature config declares no semantic_dim",
            ))
        }
        (None, _) => {}
    }
    if config.enabled(FeatureKind::Color) {
        rec.color = Some(color_features(img));
    }
    if config.enabled(FeatureKind::Texture) {
        rec.texture = Some(glcm_features(img, &config.glcm)?);
    }
    if config.enabled(FeatureKind::Shape) {
        rec.shape = Some(hu_moments(img));
    }
    if config.enabled(FeatureKind::Sharpness) {
        rec.sharpness = Some(hfe(img, config.hfe_cutoff)?);
    }
    if config.enabled(FeatureKind::Style) && config.style_maps == StyleMaps::Proxy {
        let maps = proxy_style_maps(img);
        rec.style_gram = Some(gram_matrix(&maps)?);
    }
    Ok(rec)
}
