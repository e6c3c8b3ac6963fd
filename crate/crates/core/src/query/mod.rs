//! Goal-driven selection of library noise.

mod bench;
mod engine;
mod goal;
mod quant;
mod score;

pub use bench::{bench_engine, bench_retrieval, BenchReport};
pub use engine::{progressive_rerank, select_best, top_k, PhaseTimes, QueryEngine};
pub use goal::{default_keep, FeaturePath, GoalSpec, MatchFunction, Stage, Target};
pub use quant::{QueryCode, SemanticIndex};
pub use score::{match_score, rank_order, Ranked};
