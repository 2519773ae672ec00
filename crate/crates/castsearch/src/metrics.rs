//! Retrieval metrics over movie results: average precision per cast query,
//! cumulative recall curves over finalization events, cache occupancy
//! summaries, and the similarity statistics of memory updates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{DecisionTrace, GroundTruth, MovieResult, MovieStream};
use crate::error::{Error, Result};
use crate::feature::{ScoreBreakdown, MODALITIES};
use crate::memory::MemoryUpdateEvent;

/// Average precision of a ranked relevance list: the mean, over relevant
/// positions, of precision at that position. None when nothing is relevant.
pub fn average_precision(relevance: &[bool]) -> Option<f64> {
    let total = relevance.iter().filter(|r| **r).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, rel) in relevance.iter().enumerate() {
        if *rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub cast_id: String,
    /// None when the movie contains no instance of this cast.
    pub average_precision: Option<f64>,
    pub relevant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieEval {
    pub movie_id: String,
    pub method: String,
    pub queries: Vec<QueryEval>,
    /// Mean AP over queries that had relevant instances; None if none did.
    pub mean_average_precision: Option<f64>,
}

/// Scores one movie's rankings against its ground truth. Unlabeled instances
/// count as non-relevant for every query; queries with no relevant instance
/// are reported but excluded from the mean.
pub fn evaluate_movie(result: &MovieResult, movie: &MovieStream) -> Result<MovieEval> {
    if result.movie_id != movie.movie_id {
        return Err(Error::InvalidConfig(format!(
            "result is for movie {}, stream is {}",
            result.movie_id, movie.movie_id
        )));
    }
    let truth = movie.truth_by_id();
    let mut queries = Vec::with_capacity(result.cast_ids.len());
    for (q, cast_id) in result.cast_ids.iter().enumerate() {
        let ranking = result
            .rankings
            .get(q)
            .ok_or_else(|| Error::InvalidConfig(format!("missing ranking for cast {cast_id}")))?;
        let relevance: Vec<bool> = ranking
            .iter()
            .map(|r| {
                matches!(
                    truth.get(r.instance_id.as_str()),
                    Some(Some(GroundTruth::Cast(c))) if *c == *cast_id
                )
            })
            .collect();
        let relevant = relevance.iter().filter(|r| **r).count();
        queries.push(QueryEval {
            cast_id: cast_id.clone(),
            average_precision: average_precision(&relevance),
            relevant,
        });
    }
    let defined: Vec<f64> = queries.iter().filter_map(|q| q.average_precision).collect();
    let map = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(MovieEval {
        movie_id: movie.movie_id.clone(),
        method: result.method.clone(),
        queries,
        mean_average_precision: map,
    })
}

/// Macro mean over movies that produced a defined mean AP.
pub fn macro_map(evals: &[MovieEval]) -> Option<f64> {
    let defined: Vec<f64> = evals
        .iter()
        .filter_map(|e| e.mean_average_precision)
        .collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub event_index: usize,
    pub step: u64,
    pub value: f64,
}

/// Rank of the true cast within one score vector: 1-based, ties broken by
/// lower cast index first (matching argmax behavior elsewhere).
fn true_cast_rank(scores: &[ScoreBreakdown], true_idx: usize) -> usize {
    let own = scores[true_idx].combined;
    let mut rank = 1;
    for (j, s) in scores.iter().enumerate() {
        if j == true_idx {
            continue;
        }
        if s.combined > own || (s.combined == own && j < true_idx) {
            rank += 1;
        }
    }
    rank
}

/// Cumulative recall-at-k over finalization events: after each event, the
/// fraction of labeled finalized instances whose true cast ranked within the
/// top k of their finalization scores. Unlabeled instances and distractors
/// never enter numerator or denominator.
pub fn recall_at_k_curve(
    trace: &DecisionTrace,
    movie: &MovieStream,
    k: usize,
) -> Result<Vec<RecallPoint>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let truth = movie.truth_by_id();
    let cast_ids = movie.cast_ids();
    let mut labeled = 0usize;
    let mut hits = 0usize;
    let mut points = Vec::new();
    for (event_index, f) in trace.finalizations().enumerate() {
        if let Some(Some(GroundTruth::Cast(c))) = truth.get(f.instance_id.as_str()) {
            let true_idx = cast_ids
                .iter()
                .position(|id| id == c)
                .ok_or_else(|| Error::UnknownCast(c.to_string()))?;
            labeled += 1;
            if true_cast_rank(&f.scores, true_idx) <= k {
                hits += 1;
            }
        }
        let value = if labeled == 0 {
            0.0
        } else {
            hits as f64 / labeled as f64
        };
        points.push(RecallPoint {
            event_index,
            step: f.finalized_step,
            value,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityStat {
    pub mean: f64,
    /// Population standard deviation (one sample gives 0).
    pub std: f64,
    pub count: usize,
}

/// Per-modality mean/std of similarity at memory-update time, from whatever
/// score breakdowns accompanied the updates.
pub fn similarity_stats_from_scores<'a, I>(scores: I) -> [Option<ModalityStat>; 3]
where
    I: IntoIterator<Item = &'a ScoreBreakdown>,
{
    let mut values: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for s in scores {
        for m in MODALITIES {
            if let Some(v) = s.per_modality[m.index()] {
                values[m.index()].push(v);
            }
        }
    }
    values.map(|vs| {
        if vs.is_empty() {
            return None;
        }
        let n = vs.len() as f64;
        let mean = vs.iter().sum::<f64>() / n;
        let var = vs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(ModalityStat {
            mean,
            std: var.sqrt(),
            count: vs.len(),
        })
    })
}

/// Same statistics, read from a bank's update log.
pub fn update_similarity_stats(log: &[MemoryUpdateEvent]) -> [Option<ModalityStat>; 3] {
    similarity_stats_from_scores(log.iter().map(|e| &e.scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieSummary {
    pub movie_id: String,
    pub average_precision: Option<f64>,
    pub queries_evaluated: usize,
    /// Final cumulative recall per k.
    pub recall_at: BTreeMap<usize, Option<f64>>,
    pub mean_cache_size: Option<f64>,
    pub total_cache_pushes: u64,
}

/// Aggregated evaluation of one method over a set of movies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub movie_count: usize,
    pub mean_average_precision: Option<f64>,
    /// Mean over movies of the final cumulative recall, per k.
    pub recall_at: BTreeMap<usize, Option<f64>>,
    /// Update-time similarity per modality name.
    pub update_similarity: BTreeMap<String, ModalityStat>,
    pub mean_cache_size: Option<f64>,
    pub total_cache_pushes: u64,
    pub movies: Vec<MovieSummary>,
}

pub const DEFAULT_RECALL_KS: [usize; 3] = [1, 3, 5];

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let vs: Vec<f64> = values.collect();
    if vs.is_empty() {
        None
    } else {
        Some(vs.iter().sum::<f64>() / vs.len() as f64)
    }
}

/// Builds the full report for one method over (result, stream) pairs.
pub fn build_report(runs: &[(&MovieResult, &MovieStream)], ks: &[usize]) -> Result<EvalReport> {
    if runs.is_empty() {
        return Err(Error::InvalidConfig("no runs to evaluate".into()));
    }
    let method = runs[0].0.method.clone();
    for (r, _) in runs {
        if r.method != method {
            return Err(Error::InvalidConfig(format!(
                "mixed methods in one report: {} vs {}",
                method, r.method
            )));
        }
    }
    let mut movies = Vec::with_capacity(runs.len());
    let mut evals = Vec::with_capacity(runs.len());
    let mut update_scores: Vec<&ScoreBreakdown> = Vec::new();
    for (result, stream) in runs {
        let eval = evaluate_movie(result, stream)?;
        let mut recall_at = BTreeMap::new();
        for &k in ks {
            let curve = recall_at_k_curve(&result.trace, stream, k)?;
            recall_at.insert(k, curve.last().map(|p| p.value));
        }
        let mean_cache_size = if result.cache_series.is_empty() {
            None
        } else {
            mean_of(result.cache_series.iter().map(|p| p.current_size as f64))
        };
        let total_cache_pushes = result
            .cache_series
            .last()
            .map(|p| p.total_pushes)
            .unwrap_or(0);
        update_scores.extend(result.trace.update_scores());
        movies.push(MovieSummary {
            movie_id: result.movie_id.clone(),
            average_precision: eval.mean_average_precision,
            queries_evaluated: eval
                .queries
                .iter()
                .filter(|q| q.average_precision.is_some())
                .count(),
            recall_at,
            mean_cache_size,
            total_cache_pushes,
        });
        evals.push(eval);
    }

    let mut recall_at = BTreeMap::new();
    for &k in ks {
        let vals = movies
            .iter()
            .filter_map(|m| m.recall_at.get(&k).copied().flatten());
        recall_at.insert(k, mean_of(vals));
    }
    let stats = similarity_stats_from_scores(update_scores.iter().copied());
    let update_similarity = MODALITIES
        .into_iter()
        .filter_map(|m| stats[m.index()].map(|s| (m.name().to_string(), s)))
        .collect();
    let total_cache_pushes = movies.iter().map(|m| m.total_cache_pushes).sum();
    Ok(EvalReport {
        method,
        movie_count: runs.len(),
        mean_average_precision: macro_map(&evals),
        recall_at,
        update_similarity,
        mean_cache_size: mean_of(movies.iter().filter_map(|m| m.mean_cache_size)),
        total_cache_pushes,
        movies,
    })
}
