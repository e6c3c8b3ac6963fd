use std::cell::RefCell;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::goal::{GoalSpec, MatchFunction, Stage, Target};
use super::quant::SemanticIndex;
use super::score::{match_score, take_top, Ranked};
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::library::NoiseLibrary;

thread_local! {
    /// Estimated scores of the last semantic scan, reused across queries.
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// Wall-clock time spent scoring records and selecting among the scores.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub matching: Duration,
    pub selection: Duration,
}

/// Read-only query executor over one library.
pub struct QueryEngine<'a> {
    lib: &'a NoiseLibrary,
    semantic: Option<SemanticIndex>,
}

impl<'a> QueryEngine<'a> {
    /// Builds the quantized semantic column when every record has an embedding.
    pub fn new(lib: &'a NoiseLibrary) -> Self {
        Self {
            lib,
            semantic: SemanticIndex::build(lib.records()),
        }
    }

    /// An engine that always scores records one by one.
    pub fn without_index(lib: &'a NoiseLibrary) -> Self {
        Self {
            lib,
            semantic: None,
        }
    }

    pub fn library(&self) -> &'a NoiseLibrary {
        self.lib
    }

    pub fn has_semantic_index(&self) -> bool {
        self.semantic.is_some()
    }

    fn score_one(&self, stage: &Stage, id: u64) -> Result<f64> {
        let rec = &self.lib.records()[id as usize];
        let feature = stage.feature.extract(rec).ok_or_else(|| Error::FeatureAbsent {
            feature: stage.feature.to_string(),
            noise_id: id,
        })?;
        match_score(&feature, &stage.target, stage.matcher)
    }

    fn run(
        &self,
        stage: &Stage,
        k: usize,
        among: Option<&[u64]>,
        times: &mut PhaseTimes,
    ) -> Result<Vec<Ranked>> {
        stage.check(self.lib.header())?;
        let n = among.map_or(self.lib.len(), <[u64]>::len);
        if k == 0 || k > n {
            return Err(Error::KOutOfRange { k, n });
        }

        if let (None, Some(index), Target::Values(u), MatchFunction::Cosine) =
            (among, &self.semantic, &stage.target, stage.matcher)
        {
            if stage.feature == super::FeaturePath::whole(FeatureKind::Semantic) {
                if let Some(code) = index.encode_query(u) {
                    let mut failure = None;
                    let (out, start, mid, end) = SCRATCH.with_borrow_mut(|approx| {
                        let start = Instant::now();
                        index.approx_scores(&code, approx);
                        let mid = Instant::now();
                        let out = index.select(&code, approx, k, |id| {
                            self.score_one(stage, id).unwrap_or_else(|e| {
                                failure.get_or_insert(e);
                                f64::NAN
                            })
                        });
                        (out, start, mid, Instant::now())
                    });
                    times.matching += mid - start;
                    times.selection += end - mid;
                    return match failure {
                        Some(e) => Err(e),
                        None => Ok(out),
                    };
                }
            }
        }

        let start = Instant::now();
        let scored: Vec<Ranked> = match among {
            None => (0..n as u64)
                .into_par_iter()
                .map(|id| self.score_one(stage, id).map(|score| Ranked { noise_id: id, score }))
                .collect::<Result<_>>()?,
            Some(ids) => ids
                .par_iter()
                .map(|&id| self.score_one(stage, id).map(|score| Ranked { noise_id: id, score }))
                .collect::<Result<_>>()?,
        };
        let mid = Instant::now();
        let out = take_top(scored, k);
        times.matching += mid - start;
        times.selection += mid.elapsed();
        Ok(out)
    }

    /// The `k` best records for a single stage, best first; ties go to the lower id.
    pub fn top_k(&self, stage: &Stage, k: usize) -> Result<Vec<Ranked>> {
        self.run(stage, k, None, &mut PhaseTimes::default())
    }

    pub fn select_best(&self, stage: &Stage) -> Result<Ranked> {
        if self.lib.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        Ok(self.top_k(stage, 1)?[0])
    }

    /// Survivors of every stage in order; the last entry is the final ranking.
    pub fn progressive_trace(&self, goal: &GoalSpec) -> Result<Vec<Vec<Ranked>>> {
        self.progressive_timed(goal, &mut PhaseTimes::default())
    }

    pub(crate) fn progressive_timed(
        &self,
        goal: &GoalSpec,
        times: &mut PhaseTimes,
    ) -> Result<Vec<Vec<Ranked>>> {
        goal.validate()?;
        if self.lib.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let mut trace: Vec<Vec<Ranked>> = Vec::with_capacity(goal.stages.len());
        for (i, stage) in goal.stages.iter().enumerate() {
            let survivors: Option<Vec<u64>> = trace
                .last()
                .map(|prev| prev.iter().map(|r| r.noise_id).collect());
            let available = survivors.as_ref().map_or(self.lib.len(), Vec::len);
            if stage.keep > available {
                return Err(Error::KeepExceedsSurvivors {
                    stage: i + 1,
                    keep: stage.keep,
                    survivors: available,
                });
            }
            trace.push(self.run(stage, stage.keep, survivors.as_deref(), times)?);
        }
        Ok(trace)
    }

    /// Runs each stage on the previous stage's survivors and returns the final ranking.
    pub fn progressive_rerank(&self, goal: &GoalSpec) -> Result<Vec<Ranked>> {
        Ok(self.progressive_trace(goal)?.pop().unwrap_or_default())
    }
}

pub fn select_best(lib: &NoiseLibrary, stage: &Stage) -> Result<Ranked> {
    QueryEngine::without_index(lib).select_best(stage)
}

pub fn top_k(lib: &NoiseLibrary, stage: &Stage, k: usize) -> Result<Vec<Ranked>> {
    QueryEngine::without_index(lib).top_k(stage, k)
}

pub fn progressive_rerank(lib: &NoiseLibrary, goal: &GoalSpec) -> Result<Vec<Ranked>> {
    QueryEngine::without_index(lib).progressive_rerank(goal)
}
