use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{
    ensure_parent, sample_noise, LibraryHeader, NoiseLibrary, NoiseSource, FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::features::FeatureRecord;

/// Noise tensors generated per write batch when regenerating a seeded blob.
const BLOB_BATCH: u64 = 256;

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

pub fn meta_path(prefix: impl AsRef<Path>) -> PathBuf {
    with_suffix(prefix.as_ref(), ".meta.jsonl")
}

pub fn blob_path(prefix: impl AsRef<Path>) -> PathBuf {
    with_suffix(prefix.as_ref(), ".noise.bin")
}

/// Writes to a sibling temp file and renames it over `path` once complete.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    ensure_parent(path)?;
    let tmp = with_suffix(path, ".tmp");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut out = BufWriter::new(file);
    let result = fill(&mut out).and_then(|()| {
        out.flush().map_err(|e| Error::io(&tmp, e))?;
        out.get_ref().sync_all().map_err(|e| Error::io(&tmp, e))
    });
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    drop(out);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Saves `lib` as `<prefix>.meta.jsonl` and `<prefix>.noise.bin`.
pub fn save_library(lib: &NoiseLibrary, prefix: impl AsRef<Path>) -> Result<()> {
    let prefix = prefix.as_ref();
    let meta = meta_path(prefix);
    let blob = blob_path(prefix);
    let header = lib.header();

    let in_place = match lib.noise_source() {
        NoiseSource::Blob(src) => same_file(src, &blob),
        NoiseSource::Seeded => false,
    };
    if !in_place {
        write_blob(lib, &blob)?;
    }
    write_atomic(&meta, |out| {
        let io = |e| Error::io(&meta, e);
        serde_json::to_writer(&mut *out, header)?;
        out.write_all(b"\n").map_err(io)?;
        for rec in lib.records() {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    })
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn write_blob(lib: &NoiseLibrary, blob: &Path) -> Result<()> {
    let header = lib.header();
    write_atomic(blob, |out| {
        let io = |e| Error::io(blob, e);
        match lib.noise_source() {
            NoiseSource::Seeded => {
                let mut start = 0;
                while start < header.count {
                    let end = (start + BLOB_BATCH).min(header.count);
                    let chunk: Vec<Vec<u8>> = (start..end)
                        .into_par_iter()
                        .map(|id| sample_noise(header.master_seed, id, header.shape).to_le_bytes())
                        .collect();
                    for bytes in chunk {
                        out.write_all(&bytes).map_err(io)?;
                    }
                    start = end;
                }
            }
            NoiseSource::Blob(src) => {
                let mut input = File::open(src).map_err(|e| Error::io(src, e))?;
                std::io::copy(&mut input, out).map_err(io)?;
            }
        }
        Ok(())
    })
}

fn parse_header(path: &Path, line: &str) -> Result<LibraryHeader> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|source| {
        Error::MalformedLine {
            path: path.to_path_buf(),
            line: 1,
            source,
        }
    })?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: "header line lacks an integer format_version".into(),
        })?;
    if found != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: found.min(u32::MAX as u64) as u32,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|source| Error::MalformedLine {
        path: path.to_path_buf(),
        line: 1,
        source,
    })
}

/// Loads and fully validates a library saved by [`save_library`].
///
/// Noise tensors stay on disk and are read on demand.
pub fn load_library(prefix: impl AsRef<Path>) -> Result<NoiseLibrary> {
    let prefix = prefix.as_ref();
    let meta = meta_path(prefix);
    let blob = blob_path(prefix);

    let file = File::open(&meta).map_err(|e| Error::io(&meta, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format {
            path: meta.clone(),
            message: "empty metadata file".into(),
        })?
        .map_err(|e| Error::io(&meta, e))?;
    let header = parse_header(&meta, &first)?;

    let mut records = Vec::with_capacity(header.count.min(1 << 24) as usize);
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(&meta, e))?;
        let rec: FeatureRecord =
            serde_json::from_str(&line).map_err(|source| Error::MalformedLine {
                path: meta.clone(),
                line: idx + 2,
                source,
            })?;
        records.push(rec);
    }

    let expected = header.count * header.shape.len() as u64 * 4;
    let actual = fs::metadata(&blob).map_err(|e| Error::io(&blob, e))?.len();
    if actual < expected {
        return Err(Error::TruncatedBlob {
            path: blob,
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::Format {
            path: blob,
            message: format!("expected {expected} bytes, found {actual}"),
        });
    }

    let lib = NoiseLibrary::from_parts(header, records, NoiseSource::Blob(blob));
    lib.validate()?;
    Ok(lib)
}
