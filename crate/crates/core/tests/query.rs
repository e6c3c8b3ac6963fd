mod common;

use std::fs;

use noisebank::features::{FeatureConfig, FeatureKind, FeatureRecord};
use noisebank::library::{build_library, ingest_records, LibraryHeader, NoiseLibrary, Posterior, PosteriorSource};
use noisebank::query::{
    bench_engine, match_score, progressive_rerank, select_best, top_k, FeaturePath, GoalSpec,
    MatchFunction, QueryEngine, Stage, Target,
};
use noisebank::synth::SynthConfig;
use noisebank::tensor::Shape;
use noisebank::Error;
use proptest::prelude::*;
use rand::Rng;

use common::{
    containment_round, naive_top_k, normals, oracle_round, random_library, rng, semantic_library,
    unit, PATHS,
};

fn stage(path: &str, target: Target, m: MatchFunction, keep: usize) -> Stage {
    Stage::new(path.parse().unwrap(), target, m, keep)
}

#[test]
fn top_k_equals_full_sort() {
    let mut r = rng(41);
    for _ in 0..100 {
        assert_eq!(oracle_round(&mut r, 300), 0);
    }
}

#[test]
fn indexed_scan_matches_naive_at_width_512() {
    let mut r = rng(42);
    let lib = semantic_library(&mut r, 5000, 512);
    let engine = QueryEngine::new(&lib);
    assert!(engine.has_semantic_index());
    for _ in 0..5 {
        // one query near an existing record, one unrelated
        let mut near = lib.records()[r.random_range(0..5000)].semantic.clone().unwrap();
        for (v, e) in near.iter_mut().zip(normals(&mut r, 512)) {
            *v += 0.01 * e;
        }
        for q in [near, unit(&mut r, 512)] {
            let s = stage("semantic", Target::Values(q), MatchFunction::Cosine, 1);
            for k in [1, 20, 500] {
                let want = naive_top_k(&lib, None, "semantic", &s.target, s.matcher, k);
                let got = engine.top_k(&s, k).unwrap();
                let got: Vec<(u64, f64)> = got.iter().map(|g| (g.noise_id, g.score)).collect();
                assert_eq!(got, want);
            }
        }
    }
}

#[test]
fn duplicate_records_tie_to_lowest_id() {
    let dim = 4;
    let rec = |id| FeatureRecord {
        noise_id: id,
        semantic: Some(vec![0.5; 4]),
        sharpness: Some(0.25),
        ..FeatureRecord::default()
    };
    let cfg = FeatureConfig {
        semantic_dim: Some(dim),
        ..FeatureConfig::only(&[FeatureKind::Sharpness])
    };
    let header = LibraryHeader::new(0, 6, Shape::new(4, 8, 8).unwrap(), cfg, PosteriorSource::External);
    let lib = NoiseLibrary::from_records(header, (0..6).map(rec).collect()).unwrap();
    for m in MatchFunction::ALL {
        let s = stage("sharpness", Target::scalar(0.9), m, 1);
        assert_eq!(select_best(&lib, &s).unwrap().noise_id, 0);
        let ids: Vec<u64> = top_k(&lib, &s, 6).unwrap().iter().map(|r| r.noise_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5]);
    }
    let engine = QueryEngine::new(&lib);
    let s = stage("semantic", Target::Values(vec![1.0, 0.0, 0.0, 0.0]), MatchFunction::Cosine, 1);
    let ids: Vec<u64> = engine.top_k(&s, 3).unwrap().iter().map(|r| r.noise_id).collect();
    assert_eq!(ids, vec![0, 1, 2]);
}

#[test]
fn cosine_scores_are_bounded() {
    let mut r = rng(43);
    let lib = random_library(&mut r, 200, 9);
    for path in PATHS {
        let s = common::random_stage(&mut r, &lib, path, MatchFunction::Cosine, 1);
        if !matches!(s.target, Target::Values(_)) {
            continue;
        }
        for hit in top_k(&lib, &s, 200).unwrap() {
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&hit.score));
        }
    }
}

#[test]
fn containment_on_random_goals() {
    let mut r = rng(44);
    for _ in 0..30 {
        let n = r.random_range(1..300);
        let lib = random_library(&mut r, n, 5);
        containment_round(&mut r, &lib, &PATHS).unwrap();
    }
}

#[test]
fn non_filtering_first_stage_equals_single_stage() {
    let mut r = rng(45);
    let lib = random_library(&mut r, 150, 5);
    let second = stage("color.mean_rgb.0", Target::scalar(1.0), MatchFunction::Absdiff, 10);
    let goal = GoalSpec {
        stages: vec![
            stage("shape", Target::Values(vec![0.0; 7]), MatchFunction::Euclidean, 150),
            second.clone(),
        ],
    };
    assert_eq!(progressive_rerank(&lib, &goal).unwrap(), top_k(&lib, &second, 10).unwrap());
}

#[test]
fn rerank_errors() {
    let mut r = rng(46);
    let lib = random_library(&mut r, 30, 3);
    let goal = GoalSpec {
        stages: vec![
            stage("shape", Target::Values(vec![0.0; 7]), MatchFunction::Mse, 5),
            stage("sharpness", Target::Maximize, MatchFunction::Absdiff, 6),
        ],
    };
    assert!(matches!(
        progressive_rerank(&lib, &goal),
        Err(Error::KeepExceedsSurvivors { stage: 2, keep: 6, survivors: 5 })
    ));
    let s = stage("shape", Target::Values(vec![0.0; 7]), MatchFunction::Mse, 1);
    assert!(matches!(top_k(&lib, &s, 31), Err(Error::KOutOfRange { .. })));
    assert!(matches!(top_k(&lib, &s, 0), Err(Error::KOutOfRange { .. })));
    let bad = stage("shape", Target::Values(vec![0.0; 3]), MatchFunction::Mse, 1);
    assert!(matches!(top_k(&lib, &bad, 1), Err(Error::ArityMismatch { .. })));

    let empty = semantic_library(&mut r, 0, 3);
    let s = stage("semantic", Target::Values(vec![1.0, 0.0, 0.0]), MatchFunction::Cosine, 1);
    assert!(matches!(select_best(&empty, &s), Err(Error::EmptyLibrary)));
}

#[test]
fn absent_feature_is_reported() {
    let lib = build_library(
        0,
        3,
        Shape::new(4, 8, 8).unwrap(),
        &Posterior::Synthetic(SynthConfig::default()),
        &FeatureConfig {
            semantic_dim: Some(2),
            ..FeatureConfig::only(&[FeatureKind::Color])
        },
    )
    .unwrap();
    let s = stage("semantic", Target::Values(vec![1.0, 0.0]), MatchFunction::Cosine, 1);
    assert!(matches!(select_best(&lib, &s), Err(Error::FeatureAbsent { noise_id: 0, .. })));
    let s = stage("shape", Target::Values(vec![0.0; 7]), MatchFunction::Mse, 1);
    assert!(select_best(&lib, &s).is_err());
}

#[test]
fn queries_are_deterministic() {
    let mut r = rng(47);
    let lib = random_library(&mut r, 400, 16);
    let engine = QueryEngine::new(&lib);
    for path in PATHS {
        for m in MatchFunction::ALL {
            let s = common::random_stage(&mut r, &lib, path, m, 1);
            let a = engine.top_k(&s, 25).unwrap();
            let b = engine.top_k(&s, 25).unwrap();
            let c = top_k(&lib, &s, 25).unwrap();
            assert_eq!(a, b);
            assert_eq!(a, c);
        }
    }
}

#[test]
fn goal_file_with_embedding_reference() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(48);
    let lib = semantic_library(&mut r, 50, 8);
    let q = lib.records()[17].semantic.clone().unwrap();
    let bytes: Vec<u8> = q.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
    fs::write(dir.path().join("emb.f32le"), bytes).unwrap();
    let goal = GoalSpec::from_json(
        r#"{"stages":[{"feature":"semantic","target":"@emb.f32le","match":"cosine","keep":3}]}"#,
        dir.path(),
    )
    .unwrap();
    let out = QueryEngine::new(&lib).progressive_rerank(&goal).unwrap();
    assert_eq!(out[0].noise_id, 17);
    assert!((out[0].score - 1.0).abs() < 1e-6);
}

#[test]
fn bench_reports_positive_costs() {
    let mut r = rng(49);
    let lib = semantic_library(&mut r, 1000, 32);
    let goal = GoalSpec::single(stage("semantic", Target::Values(unit(&mut r, 32)), MatchFunction::Cosine, 1));
    let report = bench_engine(&QueryEngine::new(&lib), &goal, 5).unwrap();
    assert!(report.match_cost_s > 0.0 && report.select_cost_s > 0.0);
    assert_eq!(report.records, 1000);
    assert!(bench_engine(&QueryEngine::new(&lib), &goal, 0).is_err());
}

#[test]
fn ingest_then_query_synthetic_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FeatureConfig {
        semantic_dim: Some(3),
        ..FeatureConfig::default()
    };
    let lib = build_library(2, 4, Shape::new(4, 8, 8).unwrap(), &Posterior::Synthetic(SynthConfig::default()), &cfg).unwrap();
    for id in 0..4 {
        let v = [id as f64 + 1.0, 1.0, 0.0];
        fs::write(
            dir.path().join(format!("{id}.json")),
            format!("{{\"noise_id\":{id},\"semantic\":{:?}}}", v),
        )
        .unwrap();
    }
    let lib = ingest_records(lib, dir.path()).unwrap();
    let s = stage("semantic", Target::Values(vec![1.0, 0.0, 0.0]), MatchFunction::Cosine, 1);
    assert_eq!(QueryEngine::new(&lib).select_best(&s).unwrap().noise_id, 3);
}

fn affine(s: &Stage, a: f64, b: f64) -> Option<Stage> {
    // maximize/minimize score the raw value, so they commute with positive affine maps
    let path = s.feature.to_string();
    match &s.target {
        Target::Maximize | Target::Minimize => Some(stage(&path, s.target.clone(), s.matcher, s.keep)),
        Target::Values(t) if matches!(s.matcher, MatchFunction::Mse | MatchFunction::Absdiff | MatchFunction::Euclidean) => {
            Some(stage(&path, Target::Values(t.iter().map(|v| a * v + b).collect()), s.matcher, s.keep))
        }
        _ => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn argmax_survives_positive_affine_maps(seed in any::<u64>(), a in 0.25f64..4.0, b in -2.0f64..2.0, pi in 0usize..PATHS.len(), mi in 0usize..4) {
        let mut r = rng(seed);
        let lib = random_library(&mut r, 60, 4);
        let path = PATHS[pi];
        let s = common::random_stage(&mut r, &lib, path, MatchFunction::ALL[mi], 1);
        prop_assume!(affine(&s, a, b).is_some());
        // map the features through the same transform via the oracle
        let mapped: Vec<(u64, f64)> = {
            let t2 = affine(&s, a, b).unwrap().target;
            let mut all: Vec<(u64, f64)> = lib.records().iter().map(|rec| {
                let f: Vec<f64> = common::oracle_feature(rec, path).iter().map(|v| a * v + b).collect();
                (rec.noise_id, common::oracle_score(&f, &t2, s.matcher))
            }).collect();
            all.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            all
        };
        let best = select_best(&lib, &s).unwrap();
        // the winner's score is maximal in the transformed problem up to rounding
        let top = mapped[0].1;
        let winner = mapped.iter().find(|m| m.0 == best.noise_id).unwrap().1;
        prop_assert!((top - winner).abs() <= 1e-9 * (1.0 + top.abs()));
    }

    #[test]
    fn scores_are_finite_and_ordered(seed in any::<u64>(), mi in 0usize..4) {
        let mut r = rng(seed);
        let lib = random_library(&mut r, 40, 3);
        let m = MatchFunction::ALL[mi];
        let s = common::random_stage(&mut r, &lib, "color", m, 1);
        let all = top_k(&lib, &s, 40).unwrap();
        prop_assert!(all.iter().all(|h| h.score.is_finite()));
        prop_assert!(all.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].noise_id < w[1].noise_id)));
        for h in &all {
            let f = FeaturePath::whole(FeatureKind::Color).extract(&lib.records()[h.noise_id as usize]).unwrap();
            prop_assert_eq!(match_score(&f, &s.target, m).unwrap(), h.score);
        }
    }
}
