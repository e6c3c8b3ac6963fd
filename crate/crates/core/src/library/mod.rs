//! The noise library: seeded noise tensors keyed by posterior features.
//!
//! On disk a library is two files sharing a prefix:
//!
//! - `<prefix>.meta.jsonl`: a header line, then one [`FeatureRecord`] per
//!   noise id in ascending order.
//! - `<prefix>.noise.bin`: the tensors, little-endian `f32`, concatenated in id order.

mod build;
mod ingest;
mod noise;
mod store;

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureKind, FeatureRecord, StyleMaps};
use crate::synth::SynthConfig;
use crate::tensor::Shape;

pub use build::{build_library, Posterior};
pub use ingest::ingest_records;
pub(crate) use ingest::read_f32_file;
pub use noise::{sample_noise, NoiseTensor};
pub use store::{blob_path, load_library, meta_path, save_library};

pub const FORMAT_VERSION: u32 = 1;

/// How the posteriors behind the records were produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorSource {
    Synthetic(SynthConfig),
    IngestDir,
    /// Records were supplied directly rather than extracted from posteriors.
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryHeader {
    pub format_version: u32,
    pub master_seed: u64,
    pub count: u64,
    pub shape: Shape,
    pub feature_config: FeatureConfig,
    pub semantic_dim: Option<usize>,
    pub posterior: PosteriorSource,
}

impl LibraryHeader {
    pub fn new(
        master_seed: u64,
        count: u64,
        shape: Shape,
        feature_config: FeatureConfig,
        posterior: PosteriorSource,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            master_seed,
            count,
            shape,
            semantic_dim: feature_config.semantic_dim,
            feature_config,
            posterior,
        }
    }

    /// Expected vector length of a feature kind, if fixed by the config.
    pub fn feature_len(&self, kind: FeatureKind) -> Option<usize> {
        match kind {
            FeatureKind::Semantic => self.semantic_dim,
            FeatureKind::Texture => Some(self.feature_config.glcm.feature_len()),
            FeatureKind::Shape => Some(7),
            FeatureKind::Sharpness => Some(1),
            FeatureKind::Color => Some(9),
            FeatureKind::Style => match self.feature_config.style_maps {
                StyleMaps::Proxy => Some(21),
                StyleMaps::External => None,
            },
        }
    }
}

/// Where noise tensors come from when a caller asks for one.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSource {
    /// Regenerated on demand from the master seed.
    Seeded,
    /// Read from a saved blob.
    Blob(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseLibrary {
    header: LibraryHeader,
    records: Vec<FeatureRecord>,
    noise: NoiseSource,
}

impl NoiseLibrary {
    /// Assembles a library from seeded noise and precomputed records, checking every invariant.
    pub fn from_records(header: LibraryHeader, records: Vec<FeatureRecord>) -> Result<Self> {
        let lib = Self {
            header,
            records,
            noise: NoiseSource::Seeded,
        };
        lib.validate()?;
        Ok(lib)
    }

    pub(crate) fn from_parts(
        header: LibraryHeader,
        records: Vec<FeatureRecord>,
        noise: NoiseSource,
    ) -> Self {
        Self {
            header,
            records,
            noise,
        }
    }

    pub fn header(&self) -> &LibraryHeader {
        &self.header
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub(crate) fn records_mut(&mut self) -> &mut Vec<FeatureRecord> {
        &mut self.records
    }

    pub fn record(&self, noise_id: u64) -> Result<&FeatureRecord> {
        self.records
            .get(noise_id as usize)
            .ok_or(Error::UnknownNoiseId(noise_id))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn noise_source(&self) -> &NoiseSource {
        &self.noise
    }

    /// The noise tensor stored under `noise_id`.
    pub fn noise(&self, noise_id: u64) -> Result<NoiseTensor> {
        if noise_id >= self.header.count {
            return Err(Error::UnknownNoiseId(noise_id));
        }
        let shape = self.header.shape;
        match &self.noise {
            NoiseSource::Seeded => Ok(sample_noise(self.header.master_seed, noise_id, shape)),
            NoiseSource::Blob(path) => {
                let bytes_per = (shape.len() * 4) as u64;
                let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
                file.seek(SeekFrom::Start(noise_id * bytes_per))
                    .map_err(|e| Error::io(path, e))?;
                let mut buf = vec![0u8; bytes_per as usize];
                file.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
                Ok(NoiseTensor::from_le_bytes(noise_id, shape, &buf))
            }
        }
    }

    /// Checks id contiguity and record/config agreement.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: h.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if h.semantic_dim != h.feature_config.semantic_dim {
            return Err(Error::invalid(format!(
                "header semantic_dim {:?} disagrees with feature config {:?}",
                h.semantic_dim, h.feature_config.semantic_dim
            )));
        }
        h.feature_config.validate()?;
        if h.count != self.records.len() as u64 {
            return Err(Error::invalid(format!(
                "header declares {} records, found {}",
                h.count,
                self.records.len()
            )));
        }
        for (i, rec) in self.records.iter().enumerate() {
            if rec.noise_id != i as u64 {
                return Err(Error::invalid(format!(
                    "record at position {i} has noise_id {}",
                    rec.noise_id
                )));
            }
            check_record(h, rec)?;
        }
        Ok(())
    }
}

/// A record may carry only kinds enabled by the config, at the configured lengths.
pub(crate) fn check_record(h: &LibraryHeader, rec: &FeatureRecord) -> Result<()> {
    let id = rec.noise_id;
    for kind in rec.present_kinds() {
        if !h.feature_config.enabled(kind) {
            return Err(Error::invalid(format!(
                "record {id} carries `{kind}`, which the feature config does not enable"
            )));
        }
    }
    let check_len = |kind: FeatureKind, got: usize| -> Result<()> {
        match h.feature_len(kind) {
            Some(expected) if expected != got => {
                if kind == FeatureKind::Semantic {
                    Err(Error::DimensionMismatch { id, expected, got })
                } else {
                    Err(Error::ArityMismatch {
                        feature: format!("{kind} of record {id}"),
                        expected,
                        got,
                    })
                }
            }
            _ => Ok(()),
        }
    };
    let finite = |what: &str, v: &[f64]| -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                id,
                what: what.to_string(),
            })
        }
    };
    if let Some(v) = &rec.semantic {
        check_len(FeatureKind::Semantic, v.len())?;
        finite("semantic", v)?;
    }
    if let Some(v) = &rec.texture {
        check_len(FeatureKind::Texture, v.len())?;
        finite("texture", v)?;
    }
    if let Some(v) = &rec.style_gram {
        if crate::features::unpack_upper(v).is_none() {
            return Err(Error::invalid(format!(
                "record {id}: style_gram length {} is not triangular",
                v.len()
            )));
        }
        check_len(FeatureKind::Style, v.len())?;
        finite("style_gram", v)?;
    }
    if let Some(v) = &rec.shape {
        finite("shape", v)?;
    }
    if let Some(v) = rec.sharpness {
        finite("sharpness", &[v])?;
    }
    if let Some(c) = &rec.color {
        finite("color", &c.to_vec())?;
    }
    Ok(())
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}
