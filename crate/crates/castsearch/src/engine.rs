//! The online search engine. Instances arrive in stream order and each takes
//! one pass through the gate triplet:
//!
//!   1. score the instance against every cast's memory;
//!   2. ask the update gate per cast; if any fire, the best-scoring firing
//!      cast (lowest index on ties) absorbs the instance into memory and the
//!      instance finalizes immediately with its arrival scores;
//!   3. after a memory update, rescore the uncertain cache and let the
//!      release gate finalize entries that have become confident;
//!   4. if nothing fired, the cache gate decides between deferring the
//!      instance to the cache and finalizing it immediately.
//!
//! Whatever is still cached when the stream ends is flushed against the
//! final memory. Two offline-free baselines live here too: portrait-only
//! face matching and a two-pass face-then-body/audio labeler.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cache::UncertainCache;
use crate::controller::{
    cache_gate, encode_state, learned_gate, release_gate, update_gate, Controller, ControllerKind,
};
use crate::error::{Error, Result};
use crate::feature::{modality_scores, Modality, MultiModalFeature, ScoreBreakdown};
use crate::memory::{MemoryBank, MemoryUpdateEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct CastPortrait {
    pub cast_id: String,
    pub portrait: MultiModalFeature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroundTruth {
    Cast(String),
    /// A person outside the cast list (a distractor).
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamInstance {
    pub instance_id: String,
    pub feature: MultiModalFeature,
    /// None means unlabeled; labeled streams are required for training.
    pub truth: Option<GroundTruth>,
}

/// A movie: the cast gallery (portraits) plus the time-ordered instances.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieStream {
    pub movie_id: String,
    pub dim: usize,
    pub cast: Vec<CastPortrait>,
    pub instances: Vec<StreamInstance>,
}

impl MovieStream {
    pub fn validate(&self) -> Result<()> {
        if self.cast.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "movie {} has no cast",
                self.movie_id
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "movie {} has dimension zero",
                self.movie_id
            )));
        }
        let mut cast_ids = HashSet::new();
        for c in &self.cast {
            if !cast_ids.insert(c.cast_id.as_str()) {
                return Err(Error::DuplicateCast(c.cast_id.clone()));
            }
            if c.portrait.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: c.portrait.dim(),
                });
            }
            if !c.portrait.is_present(Modality::Face) {
                return Err(Error::PortraitWithoutFace(c.cast_id.clone()));
            }
        }
        let mut instance_ids = HashSet::new();
        for i in &self.instances {
            if !instance_ids.insert(i.instance_id.as_str()) {
                return Err(Error::DuplicateInstance(i.instance_id.clone()));
            }
            if i.feature.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: i.feature.dim(),
                });
            }
            if let Some(GroundTruth::Cast(id)) = &i.truth {
                if !cast_ids.contains(id.as_str()) {
                    return Err(Error::UnknownCast(id.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn cast_ids(&self) -> Vec<String> {
        self.cast.iter().map(|c| c.cast_id.clone()).collect()
    }

    /// The true cast id at a step, if that step is a labeled cast member.
    pub fn truth_cast(&self, step: usize) -> Option<&str> {
        match &self.instances.get(step)?.truth {
            Some(GroundTruth::Cast(id)) => Some(id),
            _ => None,
        }
    }

    pub fn truth_by_id(&self) -> HashMap<&str, Option<&GroundTruth>> {
        self.instances
            .iter()
            .map(|i| (i.instance_id.as_str(), i.truth.as_ref()))
            .collect()
    }

    /// Copy with instance modalities outside `keep` dropped. Portraits are
    /// left alone; the face gallery is always available.
    pub fn masked(&self, keep: [bool; 3]) -> MovieStream {
        MovieStream {
            movie_id: self.movie_id.clone(),
            dim: self.dim,
            cast: self.cast.clone(),
            instances: self
                .instances
                .iter()
                .map(|i| StreamInstance {
                    instance_id: i.instance_id.clone(),
                    feature: i.feature.masked(keep),
                    truth: i.truth.clone(),
                })
                .collect(),
        }
    }
}

/// Engine knobs independent of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Memory blend rate for gated updates.
    pub blend_rate: f64,
    /// Whether void slots may be claimed by the first gated instance.
    pub first_write: bool,
    /// Whether the uncertain cache participates at all.
    pub use_cache: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            blend_rate: crate::memory::DEFAULT_BLEND_RATE,
            first_write: true,
            use_cache: true,
        }
    }
}

impl EngineConfig {
    /// Frozen memory, no first writes, no cache: with the gates forced shut
    /// this reduces the engine to portrait matching.
    pub fn strict_baseline() -> Self {
        EngineConfig {
            blend_rate: 0.0,
            first_write: false,
            use_cache: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.blend_rate) {
            return Err(Error::InvalidConfig(format!(
                "blend rate must be in [0, 1], got {}",
                self.blend_rate
            )));
        }
        Ok(())
    }
}

/// A gate decision source. The engine asks, the policy answers; implementors
/// may be pure threshold rules or stateful recorders (training rollouts).
pub trait GatePolicy {
    fn kind(&self) -> ControllerKind;

    /// Should this cast absorb the instance? Asked once per cast per step.
    fn decide_update(
        &mut self,
        step: u64,
        bank: &MemoryBank,
        cast: usize,
        f: &MultiModalFeature,
        score: &ScoreBreakdown,
    ) -> Result<bool>;

    /// Should an unclaimed instance wait in the cache? Asked at most once per
    /// step, only when no update gate fired.
    fn decide_cache(
        &mut self,
        step: u64,
        bank: &MemoryBank,
        f: &MultiModalFeature,
        scores: &[ScoreBreakdown],
    ) -> Result<bool>;

    /// Should a cached entry leave, given fresh scores and its age?
    fn decide_release(&mut self, scores: &[ScoreBreakdown], age: u64) -> bool;
}

/// Index of the best combined score, lowest index winning ties.
pub fn argmax_combined(scores: &[ScoreBreakdown]) -> usize {
    let mut best = 0;
    for (j, s) in scores.iter().enumerate().skip(1) {
        if s.combined > scores[best].combined {
            best = j;
        }
    }
    best
}

impl GatePolicy for Controller {
    fn kind(&self) -> ControllerKind {
        Controller::kind(self)
    }

    fn decide_update(
        &mut self,
        _step: u64,
        bank: &MemoryBank,
        cast: usize,
        f: &MultiModalFeature,
        score: &ScoreBreakdown,
    ) -> Result<bool> {
        match self {
            Controller::Manual(t) => Ok(update_gate(score.combined, t.alpha)),
            Controller::Learned(l) => {
                let state = encode_state(bank, cast, f, l.state_mode)?;
                learned_gate(&state, &l.update_net)
            }
        }
    }

    fn decide_cache(
        &mut self,
        _step: u64,
        bank: &MemoryBank,
        f: &MultiModalFeature,
        scores: &[ScoreBreakdown],
    ) -> Result<bool> {
        match self {
            Controller::Manual(t) => {
                let combined: Vec<f64> = scores.iter().map(|s| s.combined).collect();
                Ok(cache_gate(&combined, t.beta))
            }
            Controller::Learned(l) => {
                let top = argmax_combined(scores);
                let state = encode_state(bank, top, f, l.state_mode)?;
                learned_gate(&state, &l.cache_net)
            }
        }
    }

    fn decide_release(&mut self, scores: &[ScoreBreakdown], age: u64) -> bool {
        let (gamma, tau) = self.release_params();
        let combined: Vec<f64> = scores.iter().map(|s| s.combined).collect();
        release_gate(&combined, age, gamma, tau)
    }
}

/// The gate bits taken at one step. `release_gates` lines up with the cache
/// entries in their pre-release order; `cache_gate` is None on steps where
/// the cache gate was never consulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub kind: ControllerKind,
    pub update_gates: Vec<bool>,
    pub cache_gate: Option<bool>,
    pub release_gates: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalizeKind {
    /// Labeled at arrival (update fired or cache declined it).
    Immediate,
    /// Left the cache through the release gate.
    Released,
    /// Still cached at end of stream.
    Flushed,
}

/// The moment an instance's scores stop changing. Rankings are built from
/// exactly these score vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finalization {
    pub instance_id: String,
    pub arrival_step: u64,
    pub finalized_step: u64,
    pub kind: FinalizeKind,
    pub scores: Vec<ScoreBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: u64,
    pub instance_id: String,
    /// Per-cast scores at arrival, before any update this step.
    pub scores: Vec<ScoreBreakdown>,
    /// None for baselines that have no gates.
    pub gates: Option<GateRecord>,
    pub updated_cast: Option<usize>,
    pub pushed: bool,
    /// Instance ids released from the cache this step.
    pub released: Vec<String>,
    /// Finalizations this step: the arriving instance first (if it finalized
    /// here), then released cache entries in cache order.
    pub finalized: Vec<Finalization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DecisionTrace {
    pub steps: Vec<StepTrace>,
    /// End-of-stream flush, in cache order.
    pub flushed: Vec<Finalization>,
}

impl DecisionTrace {
    /// All finalizations in event order: step by step, then the flush.
    pub fn finalizations(&self) -> impl Iterator<Item = &Finalization> {
        self.steps
            .iter()
            .flat_map(|s| s.finalized.iter())
            .chain(self.flushed.iter())
    }

    /// The score breakdowns that accompanied each memory update, in step
    /// order. These equal the logged update events' scores.
    pub fn update_scores(&self) -> impl Iterator<Item = &ScoreBreakdown> {
        self.steps
            .iter()
            .filter_map(|s| s.updated_cast.map(|j| &s.scores[j]))
    }
}

/// Cache occupancy after each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CachePoint {
    pub step: u64,
    pub total_pushes: u64,
    pub current_size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedInstance {
    pub instance_id: String,
    pub score: f64,
}

/// Everything one method produced on one movie.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieResult {
    pub movie_id: String,
    pub method: String,
    /// True when scores were assigned with hindsight (two-pass baseline).
    pub offline: bool,
    pub cast_ids: Vec<String>,
    /// Per cast (same order as `cast_ids`): every instance, best match first.
    pub rankings: Vec<Vec<RankedInstance>>,
    pub trace: DecisionTrace,
    pub update_log: Vec<MemoryUpdateEvent>,
    pub cache_series: Vec<CachePoint>,
    /// Human-readable remarks (e.g. fallbacks taken), empty normally.
    pub notes: Vec<String>,
}

/// Live engine state across one movie.
pub struct RunState {
    bank: MemoryBank,
    cache: UncertainCache,
    config: EngineConfig,
    next_step: u64,
    seen: HashSet<String>,
    series: Vec<CachePoint>,
}

impl RunState {
    pub fn new(cast: &[CastPortrait], config: &EngineConfig) -> Result<Self> {
        config.validate()?;
        let portraits: Vec<(String, MultiModalFeature)> = cast
            .iter()
            .map(|c| (c.cast_id.clone(), c.portrait.clone()))
            .collect();
        let mut bank = MemoryBank::init(&portraits, config.blend_rate)?;
        bank.set_first_write(config.first_write);
        Ok(RunState {
            bank,
            cache: UncertainCache::new(),
            config: *config,
            next_step: 0,
            seen: HashSet::new(),
            series: Vec::new(),
        })
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn cache(&self) -> &UncertainCache {
        &self.cache
    }

    pub fn cache_series(&self) -> &[CachePoint] {
        &self.series
    }

    fn immediate(instance: &StreamInstance, step: u64, scores: &[ScoreBreakdown]) -> Finalization {
        Finalization {
            instance_id: instance.instance_id.clone(),
            arrival_step: step,
            finalized_step: step,
            kind: FinalizeKind::Immediate,
            scores: scores.to_vec(),
        }
    }

    /// Advances the engine by one instance. See the module docs for the
    /// phase order; at most one cast's memory changes per step.
    pub fn step<P: GatePolicy>(
        &mut self,
        instance: &StreamInstance,
        policy: &mut P,
    ) -> Result<StepTrace> {
        if !self.seen.insert(instance.instance_id.clone()) {
            return Err(Error::DuplicateInstance(instance.instance_id.clone()));
        }
        let t = self.next_step;
        let scores = self.bank.predict(&instance.feature)?;

        let mut update_gates = vec![false; scores.len()];
        for (j, gate) in update_gates.iter_mut().enumerate() {
            *gate = policy.decide_update(t, &self.bank, j, &instance.feature, &scores[j])?;
        }

        let mut gates = GateRecord {
            kind: policy.kind(),
            update_gates,
            cache_gate: None,
            release_gates: Vec::new(),
        };
        let mut updated_cast = None;
        let mut pushed = false;
        let mut released = Vec::new();
        let mut finalized = Vec::new();

        let fired: Vec<usize> = gates
            .update_gates
            .iter()
            .enumerate()
            .filter_map(|(j, g)| g.then_some(j))
            .collect();

        if !fired.is_empty() {
            let mut best = fired[0];
            for &j in &fired[1..] {
                if scores[j].combined > scores[best].combined {
                    best = j;
                }
            }
            self.bank.apply_update(best, &instance.feature, true, t)?;
            updated_cast = Some(best);
            finalized.push(Self::immediate(instance, t, &scores));

            if self.config.use_cache && !self.cache.is_empty() {
                let bank = &self.bank;
                let bits = &mut gates.release_gates;
                let resolutions = self.cache.recall(bank, t, |entry_scores, age| {
                    let g = policy.decide_release(entry_scores, age);
                    bits.push(g);
                    g
                })?;
                for r in resolutions {
                    released.push(r.instance_id.clone());
                    finalized.push(Finalization {
                        instance_id: r.instance_id,
                        arrival_step: r.inserted_at,
                        finalized_step: t,
                        kind: FinalizeKind::Released,
                        scores: r.scores,
                    });
                }
            }
        } else if self.config.use_cache {
            let g2 = policy.decide_cache(t, &self.bank, &instance.feature, &scores)?;
            gates.cache_gate = Some(g2);
            if g2 {
                self.cache.push(
                    instance.instance_id.clone(),
                    instance.feature.clone(),
                    scores.clone(),
                    t,
                )?;
                pushed = true;
            } else {
                finalized.push(Self::immediate(instance, t, &scores));
            }
        } else {
            finalized.push(Self::immediate(instance, t, &scores));
        }

        self.series.push(CachePoint {
            step: t,
            total_pushes: self.cache.push_count(),
            current_size: self.cache.len() as u64,
        });
        self.next_step = t + 1;
        Ok(StepTrace {
            step: t,
            instance_id: instance.instance_id.clone(),
            scores,
            gates: Some(gates),
            updated_cast,
            pushed,
            released,
            finalized,
        })
    }

    /// Finalizes everything still cached against the final bank.
    pub fn flush(&mut self) -> Result<Vec<Finalization>> {
        let t = self.next_step;
        Ok(self
            .cache
            .flush(&self.bank)?
            .into_iter()
            .map(|r| Finalization {
                instance_id: r.instance_id,
                arrival_step: r.inserted_at,
                finalized_step: t,
                kind: FinalizeKind::Flushed,
                scores: r.scores,
            })
            .collect())
    }
}

/// Rankings from finalization scores: per cast, all instances ordered by
/// score (descending), then by earlier finalization, then by id.
fn build_rankings(cast_count: usize, trace: &DecisionTrace) -> Vec<Vec<RankedInstance>> {
    let mut per_cast: Vec<Vec<(f64, u64, &str)>> = vec![Vec::new(); cast_count];
    for f in trace.finalizations() {
        for q in 0..cast_count {
            per_cast[q].push((f.scores[q].combined, f.finalized_step, &f.instance_id));
        }
    }
    per_cast
        .into_iter()
        .map(|mut rows| {
            rows.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| a.1.cmp(&b.1))
                    .then_with(|| a.2.cmp(b.2))
            });
            rows.into_iter()
                .map(|(score, _, id)| RankedInstance {
                    instance_id: id.to_string(),
                    score,
                })
                .collect()
        })
        .collect()
}

/// Runs one movie end to end under a gate policy.
pub fn run_movie<P: GatePolicy>(
    movie: &MovieStream,
    policy: &mut P,
    config: &EngineConfig,
) -> Result<MovieResult> {
    run_movie_with_bank(movie, policy, config).map(|(result, _)| result)
}

/// Like [`run_movie`], but also hands back the final memory bank.
pub fn run_movie_with_bank<P: GatePolicy>(
    movie: &MovieStream,
    policy: &mut P,
    config: &EngineConfig,
) -> Result<(MovieResult, MemoryBank)> {
    movie.validate()?;
    let mut state = RunState::new(&movie.cast, config)?;
    let mut steps = Vec::with_capacity(movie.instances.len());
    for instance in &movie.instances {
        steps.push(state.step(instance, policy)?);
    }
    let flushed = state.flush()?;
    let trace = DecisionTrace { steps, flushed };
    debug_assert_eq!(
        trace.finalizations().count(),
        movie.instances.len(),
        "every instance must finalize exactly once"
    );
    let rankings = build_rankings(movie.cast.len(), &trace);
    let method = match policy.kind() {
        ControllerKind::Manual => "online-manual",
        ControllerKind::Learned => "online-learned",
    };
    let result = MovieResult {
        movie_id: movie.movie_id.clone(),
        method: method.to_string(),
        offline: false,
        cast_ids: movie.cast_ids(),
        rankings,
        trace,
        update_log: state.bank.update_log().to_vec(),
        cache_series: state.series,
        notes: Vec::new(),
    };
    Ok((result, state.bank))
}

fn face_only_portraits(movie: &MovieStream) -> Result<Vec<MultiModalFeature>> {
    movie
        .cast
        .iter()
        .map(|c| crate::feature::normalize_feature(&c.portrait.masked([true, false, false])))
        .collect()
}

fn baseline_trace(movie: &MovieStream, all_scores: Vec<Vec<ScoreBreakdown>>) -> DecisionTrace {
    let steps = movie
        .instances
        .iter()
        .zip(all_scores)
        .enumerate()
        .map(|(t, (instance, scores))| {
            let finalized = vec![Finalization {
                instance_id: instance.instance_id.clone(),
                arrival_step: t as u64,
                finalized_step: t as u64,
                kind: FinalizeKind::Immediate,
                scores: scores.clone(),
            }];
            StepTrace {
                step: t as u64,
                instance_id: instance.instance_id.clone(),
                scores,
                gates: None,
                updated_cast: None,
                pushed: false,
                released: Vec::new(),
                finalized,
            }
        })
        .collect();
    DecisionTrace {
        steps,
        flushed: Vec::new(),
    }
}

/// Static baseline: every instance scored against the portrait faces only,
/// finalized at arrival. No memory, no cache.
pub fn face_match(movie: &MovieStream) -> Result<MovieResult> {
    movie.validate()?;
    let portraits = face_only_portraits(movie)?;
    let all_scores = movie
        .instances
        .iter()
        .map(|i| {
            portraits
                .iter()
                .map(|p| modality_scores(&i.feature, p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let trace = baseline_trace(movie, all_scores);
    let rankings = build_rankings(movie.cast.len(), &trace);
    Ok(MovieResult {
        movie_id: movie.movie_id.clone(),
        method: "face-match".to_string(),
        offline: false,
        cast_ids: movie.cast_ids(),
        rankings,
        trace,
        update_log: Vec::new(),
        cache_series: Vec::new(),
        notes: Vec::new(),
    })
}

/// Offline two-pass baseline. Pass one labels instances whose best face score
/// reaches `theta1`. Pass two builds per-cast mean body (and optionally
/// audio) templates from the labeled instances and scores the unlabeled ones
/// as `w_body * cos_body + w_audio * cos_audio`. Labeled instances keep their
/// face scores. Casts that never got a labeled instance fall back to face
/// scores for everybody (noted in the result).
pub fn two_step(
    movie: &MovieStream,
    use_audio: bool,
    theta1: f64,
    w_body: f64,
    w_audio: f64,
) -> Result<MovieResult> {
    movie.validate()?;
    if !theta1.is_finite() {
        return Err(Error::InvalidConfig("theta1 must be finite".into()));
    }
    for (name, w) in [("w_body", w_body), ("w_audio", w_audio)] {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidConfig(format!("{name} must be non-negative")));
        }
    }
    let cast_count = movie.cast.len();
    let portraits = face_only_portraits(movie)?;
    let face_scores: Vec<Vec<ScoreBreakdown>> = movie
        .instances
        .iter()
        .map(|i| {
            portraits
                .iter()
                .map(|p| modality_scores(&i.feature, p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let labels: Vec<Option<usize>> = face_scores
        .iter()
        .map(|scores| {
            let best = argmax_combined(scores);
            (scores[best].shared_modalities > 0 && scores[best].combined >= theta1).then_some(best)
        })
        .collect();

    // Mean body/audio direction per cast over its labeled instances.
    let mut templates: Vec<[Option<Vec<f64>>; 2]> = vec![[None, None]; cast_count];
    let mut has_labeled = vec![false; cast_count];
    let wanted: &[Modality] = if use_audio {
        &[Modality::Body, Modality::Audio]
    } else {
        &[Modality::Body]
    };
    for j in 0..cast_count {
        let members: Vec<&StreamInstance> = movie
            .instances
            .iter()
            .zip(&labels)
            .filter_map(|(i, l)| (*l == Some(j)).then_some(i))
            .collect();
        has_labeled[j] = !members.is_empty();
        for (slot, m) in wanted.iter().enumerate() {
            let mut acc = vec![0.0; movie.dim];
            let mut n = 0usize;
            for i in &members {
                if let Some(v) = i.feature.get(*m) {
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x;
                    }
                    n += 1;
                }
            }
            if n > 0 {
                let norm_sq: f64 = acc.iter().map(|x| x * x).sum();
                if norm_sq > 0.0 {
                    let norm = norm_sq.sqrt();
                    for a in &mut acc {
                        *a /= norm;
                    }
                    templates[j][slot] = Some(acc);
                }
            }
        }
    }

    let mut notes = Vec::new();
    for (j, ok) in has_labeled.iter().enumerate() {
        if !ok {
            notes.push(format!(
                "cast {} had no labeled instances; kept face scores for it",
                movie.cast[j].cast_id
            ));
        }
    }

    let all_scores: Vec<Vec<ScoreBreakdown>> = movie
        .instances
        .iter()
        .enumerate()
        .map(|(t, instance)| {
            if labels[t].is_some() {
                return face_scores[t].clone();
            }
            (0..cast_count)
                .map(|j| {
                    if !has_labeled[j] {
                        return face_scores[t][j].clone();
                    }
                    let mut per = [None; 3];
                    if let (Some(tmpl), Some(v)) =
                        (&templates[j][0], instance.feature.get(Modality::Body))
                    {
                        per[Modality::Body.index()] = Some(crate::feature::dot(tmpl, v));
                    }
                    if use_audio {
                        if let (Some(tmpl), Some(v)) =
                            (&templates[j][1], instance.feature.get(Modality::Audio))
                        {
                            per[Modality::Audio.index()] = Some(crate::feature::dot(tmpl, v));
                        }
                    }
                    let combined = w_body * per[Modality::Body.index()].unwrap_or(0.0)
                        + w_audio * per[Modality::Audio.index()].unwrap_or(0.0);
                    let shared = per.iter().flatten().count();
                    ScoreBreakdown {
                        per_modality: per,
                        combined,
                        shared_modalities: shared,
                    }
                })
                .collect()
        })
        .collect();

    let trace = baseline_trace(movie, all_scores);
    let rankings = build_rankings(cast_count, &trace);
    Ok(MovieResult {
        movie_id: movie.movie_id.clone(),
        method: "two-step".to_string(),
        offline: true,
        cast_ids: movie.cast_ids(),
        rankings,
        trace,
        update_log: Vec::new(),
        cache_series: Vec::new(),
        notes,
    })
}
