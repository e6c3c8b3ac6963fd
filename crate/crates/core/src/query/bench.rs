use serde::{Deserialize, Serialize};

use super::engine::{PhaseTimes, QueryEngine};
use super::goal::GoalSpec;
use crate::error::{Error, Result};
use crate::library::NoiseLibrary;

/// Mean seconds per query spent scoring records and selecting the winners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub match_cost_s: f64,
    pub select_cost_s: f64,
    pub records: usize,
    pub repetitions: usize,
}

impl BenchReport {
    pub fn total_s(&self) -> f64 {
        self.match_cost_s + self.select_cost_s
    }
}

pub fn bench_retrieval(lib: &NoiseLibrary, goal: &GoalSpec, repetitions: usize) -> Result<BenchReport> {
    bench_engine(&QueryEngine::new(lib), goal, repetitions)
}

/// Times `repetitions` runs of `goal` after one untimed warm-up run.
pub fn bench_engine(engine: &QueryEngine<'_>, goal: &GoalSpec, repetitions: usize) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    engine.progressive_timed(goal, &mut PhaseTimes::default())?;
    let mut times = PhaseTimes::default();
    for _ in 0..repetitions {
        std::hint::black_box(engine.progressive_timed(goal, &mut times)?);
    }
    let reps = repetitions as f64;
    Ok(BenchReport {
        match_cost_s: times.matching.as_secs_f64() / reps,
        select_cost_s: times.selection.as_secs_f64() / reps,
        records: engine.library().len(),
        repetitions,
    })
}
