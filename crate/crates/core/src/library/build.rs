use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{sample_noise, LibraryHeader, NoiseLibrary, PosteriorSource};
use crate::error::{Error, Result};
use crate::features::{extract_all, FeatureConfig, FeatureRecord};
use crate::image::ImageBuffer;
use crate::synth::{synth_posterior, SynthConfig};
use crate::tensor::Shape;

/// Producer of the posterior image for each noise id.
#[derive(Clone, Debug, PartialEq)]
pub enum Posterior {
    Synthetic(SynthConfig),
    /// A directory holding `<id>.png` or `<id>.ppm` for every id.
    IngestDir(PathBuf),
}

impl Posterior {
    fn source(&self) -> PosteriorSource {
        match self {
            Posterior::Synthetic(cfg) => PosteriorSource::Synthetic(*cfg),
            Posterior::IngestDir(_) => PosteriorSource::IngestDir,
        }
    }
}

fn image_path(dir: &Path, id: u64) -> Option<PathBuf> {
    ["png", "ppm"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

/// Samples `count` noises, produces their posteriors and extracts one record each.
///
/// Extraction runs on the rayon pool; output order and bytes do not depend on
/// the thread count.
pub fn build_library(
    master_seed: u64,
    count: u64,
    shape: Shape,
    posterior: &Posterior,
    config: &FeatureConfig,
) -> Result<NoiseLibrary> {
    config.validate()?;
    if let Posterior::Synthetic(cfg) = posterior {
        cfg.validate()?;
        if shape.channels < 3 {
            return Err(Error::ShapeMismatch {
                expected: "at least 3 noise channels for the synthetic posterior".into(),
                got: shape.to_string(),
            });
        }
    }
    if let Posterior::IngestDir(dir) = posterior {
        if let Some(missing) = (0..count).find(|&id| image_path(dir, id).is_none()) {
            return Err(Error::MissingImage(missing));
        }
    }

    let records = (0..count)
        .into_par_iter()
        .map(|id| -> Result<FeatureRecord> {
            let img = match posterior {
                Posterior::Synthetic(cfg) => {
                    let eps = sample_noise(master_seed, id, shape).to_tensor();
                    synth_posterior(&eps, cfg)?
                }
                Posterior::IngestDir(dir) => {
                    let path = image_path(dir, id).ok_or(Error::MissingImage(id))?;
                    ImageBuffer::open(path)?
                }
            };
            let mut rec = extract_all(&img, config, None)?;
            rec.noise_id = id;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let header = LibraryHeader::new(master_seed, count, shape, config.clone(), posterior.source());
    NoiseLibrary::from_records(header, records)
}
