//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

pub mod imaging;

use noisebank::features::{
    normalize_embedding, ColorFeatures, FeatureConfig, FeatureKind, FeatureRecord,
};
use noisebank::image::{ImageBuffer, Provenance};
use noisebank::library::{LibraryHeader, NoiseLibrary, PosteriorSource};
use noisebank::query::{FeaturePath, MatchFunction, Stage, Target};
use noisebank::tensor::Shape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v = normals(rng, n);
        if let Ok(u) = normalize_embedding(&v) {
            return u;
        }
    }
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, Provenance::External, |_, _| {
        [rng.random(), rng.random(), rng.random()]
    })
    .unwrap()
}

fn random_record(rng: &mut impl Rng, id: u64, dim: usize) -> FeatureRecord {
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let semantic = v(dim);
    let style = v(21);
    let texture = v(16);
    let shape = v(7);
    let sharp = v(1)[0].abs();
    let c = v(9);
    FeatureRecord {
        noise_id: id,
        semantic: Some(normalize_embedding(&semantic).unwrap_or_else(|_| {
            let mut e = vec![0.0; dim];
            e[0] = 1.0;
            e
        })),
        style_gram: Some(style),
        color: Some(ColorFeatures {
            mean_rgb: [c[0].abs(), c[1].abs(), c[2].abs()],
            mean_saturation: c[3].abs(),
            mean_brightness: c[4].abs(),
            contrast: c[5].abs(),
            mean_lab: [c[6] * 100.0, c[7] * 50.0, c[8] * 50.0],
        }),
        texture: Some(texture),
        shape: Some(shape.try_into().unwrap()),
        sharpness: Some(sharp),
    }
}

/// A library with every feature kind present and frequent exact duplicates,
/// so ties are common.
pub fn random_library(rng: &mut impl Rng, n: usize, dim: usize) -> NoiseLibrary {
    let protos: Vec<FeatureRecord> = (0..3).map(|_| random_record(rng, 0, dim)).collect();
    let records = (0..n as u64)
        .map(|id| {
            if rng.random_bool(0.3) {
                let mut r = protos[rng.random_range(0..protos.len())].clone();
                r.noise_id = id;
                r
            } else {
                random_record(rng, id, dim)
            }
        })
        .collect();
    let cfg = FeatureConfig {
        semantic_dim: Some(dim),
        ..FeatureConfig::default()
    };
    let header = LibraryHeader::new(
        rng.random(),
        n as u64,
        Shape::new(4, 8, 8).unwrap(),
        cfg,
        PosteriorSource::External,
    );
    NoiseLibrary::from_records(header, records).unwrap()
}

/// Only unit semantic embeddings, nothing else.
pub fn semantic_library(rng: &mut impl Rng, n: usize, dim: usize) -> NoiseLibrary {
    let records = (0..n as u64)
        .map(|id| FeatureRecord {
            noise_id: id,
            semantic: Some(unit(rng, dim)),
            ..FeatureRecord::default()
        })
        .collect();
    let cfg = FeatureConfig {
        semantic_dim: Some(dim),
        kinds: Vec::new(),
        ..FeatureConfig::default()
    };
    let header = LibraryHeader::new(
        0,
        n as u64,
        Shape::new(4, 8, 8).unwrap(),
        cfg,
        PosteriorSource::External,
    );
    NoiseLibrary::from_records(header, records).unwrap()
}

/// Feature paths understood by [`oracle_feature`].
pub const PATHS: [&str; 14] = [
    "semantic",
    "semantic.0",
    "style_gram",
    "style.20",
    "color",
    "color.mean_rgb",
    "color.mean_rgb.1",
    "color.mean_lab",
    "color.4",
    "color.contrast",
    "texture",
    "texture.3",
    "shape",
    "sharpness",
];

/// Reads the selected values straight from the record fields.
pub fn oracle_feature(rec: &FeatureRecord, path: &str) -> Vec<f64> {
    let c = || rec.color.unwrap();
    match path {
        "semantic" => rec.semantic.clone().unwrap(),
        "semantic.0" => vec![rec.semantic.as_ref().unwrap()[0]],
        "style_gram" => rec.style_gram.clone().unwrap(),
        "style.20" => vec![rec.style_gram.as_ref().unwrap()[20]],
        "color" => vec![
            c().mean_rgb[0],
            c().mean_rgb[1],
            c().mean_rgb[2],
            c().mean_saturation,
            c().mean_brightness,
            c().contrast,
            c().mean_lab[0],
            c().mean_lab[1],
            c().mean_lab[2],
        ],
        "color.mean_rgb" => c().mean_rgb.to_vec(),
        "color.mean_rgb.1" => vec![c().mean_rgb[1]],
        "color.mean_lab" => c().mean_lab.to_vec(),
        "color.4" => vec![c().mean_brightness],
        "color.contrast" => vec![c().contrast],
        "texture" => rec.texture.clone().unwrap(),
        "texture.3" => vec![rec.texture.as_ref().unwrap()[3]],
        "shape" => rec.shape.unwrap().to_vec(),
        "sharpness" => vec![rec.sharpness.unwrap()],
        other => panic!("no oracle for {other}"),
    }
}

/// Written out longhand, in the same summation order as a left fold.
pub fn oracle_score(f: &[f64], target: &Target, m: MatchFunction) -> f64 {
    let t = match target {
        Target::Maximize => return f[0],
        Target::Minimize => return -f[0],
        Target::Values(t) => t,
    };
    assert_eq!(f.len(), t.len());
    let mut ss = 0.0;
    let mut sa = 0.0;
    let (mut ff, mut tt, mut ft) = (0.0, 0.0, 0.0);
    for i in 0..f.len() {
        let d = f[i] - t[i];
        ss += d * d;
        sa += d.abs();
        ff += f[i] * f[i];
        tt += t[i] * t[i];
        ft += f[i] * t[i];
    }
    match m {
        MatchFunction::Cosine => {
            if ff == 0.0 || tt == 0.0 {
                0.0
            } else {
                ft / (ff.sqrt() * tt.sqrt())
            }
        }
        MatchFunction::Mse => -(ss / f.len() as f64),
        MatchFunction::Absdiff => -sa,
        MatchFunction::Euclidean => -ss.sqrt(),
    }
}

/// Scores every candidate, sorts the full list, truncates to `k`.
pub fn naive_top_k(
    lib: &NoiseLibrary,
    among: Option<&[u64]>,
    path: &str,
    target: &Target,
    m: MatchFunction,
    k: usize,
) -> Vec<(u64, f64)> {
    let ids: Vec<u64> = match among {
        Some(ids) => ids.to_vec(),
        None => (0..lib.len() as u64).collect(),
    };
    let mut all: Vec<(u64, f64)> = ids
        .into_iter()
        .map(|id| {
            let rec = &lib.records()[id as usize];
            (id, oracle_score(&oracle_feature(rec, path), target, m))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// A random stage on `path` whose target has the right arity.
pub fn random_stage(
    rng: &mut impl Rng,
    lib: &NoiseLibrary,
    path: &str,
    m: MatchFunction,
    keep: usize,
) -> Stage {
    let arity = oracle_feature(&lib.records()[0], path).len();
    let target = if arity == 1 && rng.random_bool(0.2) {
        if rng.random_bool(0.5) {
            Target::Maximize
        } else {
            Target::Minimize
        }
    } else if rng.random_bool(0.2) {
        // an existing record's value, so exact hits occur
        let id = rng.random_range(0..lib.len());
        Target::Values(oracle_feature(&lib.records()[id], path))
    } else {
        Target::Values((0..arity).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    Stage::new(path.parse::<FeaturePath>().unwrap(), target, m, keep)
}

pub fn kind_of(path: &str) -> FeatureKind {
    path.parse::<FeaturePath>().unwrap().kind()
}

/// HSV saturation and value of one pixel.
pub fn oracle_hsv(p: [f64; 3]) -> (f64, f64) {
    let mut sorted = p;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (sorted[0], sorted[2]);
    let s = if hi == 0.0 { 0.0 } else { 1.0 - lo / hi };
    (s, hi)
}

/// sRGB to CIELAB (D65) through linear RGB and XYZ, using the published matrix.
pub fn oracle_lab(p: [f64; 3]) -> [f64; 3] {
    let lin = p.map(|c| {
        if c > 0.04045 {
            ((c + 0.055) / 1.055).powf(2.4)
        } else {
            c / 12.92
        }
    });
    let m = [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ];
    let white = [0.95047, 1.0, 1.08883];
    let mut f = [0.0; 3];
    for i in 0..3 {
        let t = (m[i][0] * lin[0] + m[i][1] * lin[1] + m[i][2] * lin[2]) / white[i];
        let eps = 216.0 / 24389.0;
        let kappa = 24389.0 / 27.0;
        f[i] = if t > eps { t.cbrt() } else { (kappa * t + 16.0) / 116.0 };
    }
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// One random library checked against [`naive_top_k`] for every match
/// function and `k` in `{1, 20, n}`. Returns the number of mismatching queries.
pub fn oracle_round(rng: &mut impl Rng, max_n: usize) -> usize {
    use noisebank::query::{top_k, QueryEngine};
    let n = rng.random_range(1..=max_n);
    let dim = rng.random_range(1..=24);
    let lib = random_library(rng, n, dim);
    let engine = QueryEngine::new(&lib);
    let mut mismatches = 0;
    for m in MatchFunction::ALL {
        let path = PATHS[rng.random_range(0..PATHS.len())];
        // semantic cosine is the indexed path; make sure every round exercises it
        for path in [path, "semantic"] {
            let stage = random_stage(rng, &lib, path, m, 1);
            for k in [1, 20.min(n), n] {
                let want = naive_top_k(&lib, None, path, &stage.target, m, k);
                for got in [engine.top_k(&stage, k).unwrap(), top_k(&lib, &stage, k).unwrap()] {
                    let same = got.len() == want.len()
                        && got
                            .iter()
                            .zip(&want)
                            .all(|(g, w)| g.noise_id == w.0 && g.score == w.1);
                    if !same {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    mismatches
}

/// Runs a random multi-stage goal and checks every stage against its
/// predecessor's survivors. Returns a description of the first violation.
pub fn containment_round(rng: &mut impl Rng, lib: &NoiseLibrary, paths: &[&str]) -> Result<(), String> {
    use noisebank::query::{GoalSpec, QueryEngine};
    use std::collections::HashSet;
    let stages_n = rng.random_range(1..=4);
    let mut avail = lib.len();
    let mut stages = Vec::new();
    for _ in 0..stages_n {
        let keep = rng.random_range(1..=avail);
        let path = paths[rng.random_range(0..paths.len())];
        let m = MatchFunction::ALL[rng.random_range(0..4)];
        stages.push(random_stage(rng, lib, path, m, keep));
        avail = keep;
    }
    let goal = GoalSpec { stages };
    let trace = QueryEngine::new(lib)
        .progressive_trace(&goal)
        .map_err(|e| e.to_string())?;
    let mut prev: Option<Vec<u64>> = None;
    for (i, (stage, ranked)) in goal.stages.iter().zip(&trace).enumerate() {
        if ranked.len() != stage.keep {
            return Err(format!("stage {i} kept {} of {}", ranked.len(), stage.keep));
        }
        let ids: Vec<u64> = ranked.iter().map(|r| r.noise_id).collect();
        if let Some(p) = &prev {
            let set: HashSet<u64> = p.iter().copied().collect();
            if !ids.iter().all(|id| set.contains(id)) {
                return Err(format!("stage {i} escaped its survivors"));
            }
        }
        let path = stage.feature.to_string();
        let want = naive_top_k(lib, prev.as_deref(), &path, &stage.target, stage.matcher, stage.keep);
        if want.iter().map(|w| w.0).collect::<Vec<_>>() != ids {
            return Err(format!("stage {i} differs from enumeration"));
        }
        prev = Some(ids);
    }
    Ok(())
}
