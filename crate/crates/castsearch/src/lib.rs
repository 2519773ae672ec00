//! Online multi-modal person search over time-ordered instance streams.
//!
//! Each movie arrives as a cast of face portraits plus a stream of instances,
//! where an instance carries up to three modality vectors (face, body, audio).
//! The engine keeps a per-cast memory bank that starts from the portraits and
//! absorbs confident instances as they stream past, parks ambiguous ones in a
//! cache for a second look after the memory improves, and finalizes everything
//! into per-cast rankings. Gate decisions (absorb, park, release) come from
//! either fixed thresholds or small trained value networks.
//!
//! The crate also ships a synthetic benchmark generator, an evaluation suite
//! (average precision, recall-at-k over time, update-similarity statistics),
//! offline baselines to compare against, and file formats for manifests,
//! checkpoints, and result directories. Everything is deterministic given a
//! seed: reruns reproduce files bit for bit.

pub mod cache;
pub mod controller;
pub mod dataio;
pub mod engine;
pub mod error;
pub mod feature;
pub mod memory;
pub mod metrics;
pub mod qlearn;
pub mod rng;
pub mod synth;

pub use cache::{CacheEntry, CacheResolution, UncertainCache};
pub use controller::{
    cache_gate, encode_state, learned_gate, release_gate, update_gate, Controller, ControllerKind,
    LearnedController, ManualThresholds, StateMode, StateVector, SUMMARY_STATE_LEN,
};
pub use engine::{
    face_match, run_movie, run_movie_with_bank, two_step, CachePoint, CastPortrait, DecisionTrace,
    EngineConfig, Finalization, FinalizeKind, GatePolicy, GateRecord, GroundTruth, MovieResult,
    MovieStream, RankedInstance, StepTrace, StreamInstance,
};
pub use error::{Error, Result};
pub use feature::{
    concat_score, modality_scores, normalize_feature, Modality, MultiModalFeature, ScoreBreakdown,
    MODALITIES,
};
pub use memory::{MemoryBank, MemorySlot, MemorySnapshot, MemoryUpdateEvent, DEFAULT_BLEND_RATE};
pub use metrics::{
    average_precision, build_report, evaluate_movie, macro_map, recall_at_k_curve,
    similarity_stats_from_scores, update_similarity_stats, EvalReport, ModalityStat, MovieEval,
    MovieSummary, QueryEval, RecallPoint, DEFAULT_RECALL_KS,
};
pub use qlearn::{
    n_step_return, reward, train_agents, train_step, GateKind, QNetwork, TrainConfig, TrainLog,
    Transition,
};
pub use rng::stream_rng;
pub use synth::{generate_synthetic, SyntheticParams, BENCHMARK_SEEDS};
