//! Merging externally computed features into a library.
//!
//! A records directory holds one JSON object per `*.json` file:
//!
//! ```json
//! {"noise_id": 3, "semantic": "@3.f32le", "sharpness": 0.41}
//! ```
//!
//! Vector fields (`semantic`, `style_gram`, `texture`) take either an inline
//! array or `"@name"`, a raw little-endian `f32` file relative to the directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{check_record, NoiseLibrary};
use crate::error::{Error, Result};
use crate::features::{normalize_embedding, ColorFeatures, FeatureRecord};

#[derive(Deserialize)]
#[serde(untagged)]
enum VectorSource {
    Inline(Vec<f64>),
    File(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestRecord {
    noise_id: u64,
    #[serde(default)]
    semantic: Option<VectorSource>,
    #[serde(default)]
    style_gram: Option<VectorSource>,
    #[serde(default)]
    texture: Option<VectorSource>,
    #[serde(default)]
    color: Option<ColorFeatures>,
    #[serde(default)]
    shape: Option<[f64; 7]>,
    #[serde(default)]
    sharpness: Option<f64>,
}

pub(crate) fn read_f32_file(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("{} bytes is not a whole number of f32 values", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn resolve(dir: &Path, src: VectorSource) -> Result<Vec<f64>> {
    match src {
        VectorSource::Inline(v) => Ok(v),
        VectorSource::File(s) => {
            let name = s.strip_prefix('@').ok_or_else(|| {
                Error::invalid(format!("vector reference `{s}` must start with `@`"))
            })?;
            read_f32_file(&dir.join(name))
        }
    }
}

fn record_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Merges every record file in `dir` into `lib`.
///
/// All files are parsed and checked before anything is applied, so an error
/// leaves no partial merge behind. Embeddings are re-normalized to unit norm.
/// Kinds a file does not mention keep their current values.
pub fn ingest_records(mut lib: NoiseLibrary, dir: impl AsRef<Path>) -> Result<NoiseLibrary> {
    let dir = dir.as_ref();
    let mut updates: BTreeMap<u64, FeatureRecord> = BTreeMap::new();

    for path in record_files(dir)? {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let raw: IngestRecord = serde_json::from_str(&text).map_err(|source| {
            Error::MalformedLine {
                path: path.clone(),
                line: source.line(),
                source,
            }
        })?;
        let id = raw.noise_id;
        if id >= lib.len() as u64 {
            return Err(Error::UnknownNoiseId(id));
        }
        if updates.contains_key(&id) {
            return Err(Error::Format {
                path,
                message: format!("noise id {id} already appears in an earlier record file"),
            });
        }

        let mut merged = lib.records()[id as usize].clone();
        if let Some(src) = raw.semantic {
            let v = resolve(dir, src)?;
            let expected = lib.header().semantic_dim.ok_or_else(|| {
                Error::invalid(format!(
                    "record {id} carries a semantic embedding but the library declares no semantic_dim"
                ))
            })?;
            if v.len() != expected {
                return Err(Error::DimensionMismatch {
                    id,
                    expected,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    id,
                    what: "semantic".into(),
                });
            }
            merged.semantic = Some(normalize_embedding(&v)?);
        }
        if let Some(src) = raw.style_gram {
            merged.style_gram = Some(resolve(dir, src)?);
        }
        if let Some(src) = raw.texture {
            merged.texture = Some(resolve(dir, src)?);
        }
        if raw.color.is_some() {
            merged.color = raw.color;
        }
        if raw.shape.is_some() {
            merged.shape = raw.shape;
        }
        if raw.sharpness.is_some() {
            merged.sharpness = raw.sharpness;
        }
        check_record(lib.header(), &merged)?;
        updates.insert(id, merged);
    }

    let records = lib.records_mut();
    for (id, rec) in updates {
        records[id as usize] = rec;
    }
    Ok(lib)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, FeatureKind};
    use crate::library::{build_library, Posterior};
    use crate::synth::SynthConfig;
    use crate::tensor::Shape;

    fn lib(n: u64, dim: Option<usize>) -> NoiseLibrary {
        let mut cfg = FeatureConfig::only(&[FeatureKind::Color, FeatureKind::Sharpness]);
        cfg.semantic_dim = dim;
        build_library(
            1,
            n,
            Shape::new(3, 4, 4).unwrap(),
            &Posterior::Synthetic(SynthConfig::default()),
            &cfg,
        )
        .unwrap()
    }

    fn write_f32(path: &Path, v: &[f32]) {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        fs::write(path, bytes).unwrap();
    }

    #[test]
    fn empty_dir_is_a_no_op() {
        let dir = tempfile::tempdir().unwrap();
        let before = lib(3, Some(4));
        let after = ingest_records(before.clone(), dir.path()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn embeddings_are_normalized_and_other_kinds_kept() {
        let dir = tempfile::tempdir().unwrap();
        write_f32(&dir.path().join("1.f32le"), &[0.0, 3.0, 0.0, 4.0]);
        fs::write(
            dir.path().join("1.json"),
            r#"{"noise_id": 1, "semantic": "@1.f32le"}"#,
        )
        .unwrap();
        fs::write(
            dir.path().join("2.json"),
            r#"{"noise_id": 2, "semantic": [2.0, 0.0, 0.0, 0.0], "sharpness": 0.75}"#,
        )
        .unwrap();
        let before = lib(3, Some(4));
        let after = ingest_records(before.clone(), dir.path()).unwrap();
        assert_eq!(after.record(1).unwrap().semantic, Some(vec![0.0, 0.6, 0.0, 0.8]));
        assert_eq!(after.record(1).unwrap().color, before.record(1).unwrap().color);
        assert_eq!(after.record(2).unwrap().sharpness, Some(0.75));
        assert_eq!(after.record(0).unwrap(), before.record(0).unwrap());
    }

    #[test]
    fn ingest_twice_equals_once() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("0.json"),
            r#"{"noise_id": 0, "semantic": [0.3, -0.2, 0.9, 0.1]}"#,
        )
        .unwrap();
        let once = ingest_records(lib(2, Some(4)), dir.path()).unwrap();
        let twice = ingest_records(once.clone(), dir.path()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn wrong_dimension_names_the_id() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), r#"{"noise_id": 2, "semantic": [1.0, 2.0]}"#).unwrap();
        let err = ingest_records(lib(3, Some(4)), dir.path()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { id: 2, expected: 4, got: 2 }));
        assert!(err.to_string().contains("noise id 2"));
    }

    #[test]
    fn unknown_id_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), r#"{"noise_id": 9, "sharpness": 0.5}"#).unwrap();
        assert!(matches!(
            ingest_records(lib(3, None), dir.path()),
            Err(Error::UnknownNoiseId(9))
        ));

        let dir = tempfile::tempdir().unwrap();
        write_f32(&dir.path().join("e.bin"), &[1.0, f32::NAN, 0.0, 0.0]);
        fs::write(dir.path().join("a.json"), r#"{"noise_id": 0, "semantic": "@e.bin"}"#).unwrap();
        assert!(matches!(
            ingest_records(lib(3, Some(4)), dir.path()),
            Err(Error::NonFinite { id: 0, .. })
        ));
    }

    #[test]
    fn failure_applies_nothing() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), r#"{"noise_id": 0, "sharpness": 0.5}"#).unwrap();
        fs::write(dir.path().join("b.json"), r#"{"noise_id": 1, "texture": [1.0]}"#).unwrap();
        // texture is not enabled in this library
        assert!(ingest_records(lib(2, None), dir.path()).is_err());
    }

    #[test]
    fn semantic_without_declared_dim() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), r#"{"noise_id": 0, "semantic": [1.0]}"#).unwrap();
        assert!(ingest_records(lib(1, None), dir.path()).is_err());
    }
}
