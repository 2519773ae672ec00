//! The uncertain-instance cache. Instances too ambiguous to label at arrival
//! wait here; every time the memory bank improves they are rescored, and a
//! release rule decides which ones have become confident enough to finalize.
//! Whatever is left at the end of a movie is flushed against the final bank.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{MultiModalFeature, ScoreBreakdown};
use crate::memory::MemoryBank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub instance_id: String,
    pub feature: MultiModalFeature,
    /// Scores from the most recent rescoring (arrival scores until then).
    pub last_scores: Vec<ScoreBreakdown>,
    pub inserted_at: u64,
}

/// An entry leaving the cache, either released by the gate or flushed at the
/// end of the stream, with the scores it was finalized under.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheResolution {
    pub instance_id: String,
    pub inserted_at: u64,
    pub scores: Vec<ScoreBreakdown>,
}

#[derive(Debug, Clone, Default)]
pub struct UncertainCache {
    entries: Vec<CacheEntry>,
    push_count: u64,
}

impl UncertainCache {
    pub fn new() -> Self {
        UncertainCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of pushes ever; with releases and flushes this must
    /// account for every entry (conservation).
    pub fn push_count(&self) -> u64 {
        self.push_count
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn push(
        &mut self,
        instance_id: String,
        feature: MultiModalFeature,
        scores: Vec<ScoreBreakdown>,
        step: u64,
    ) -> Result<()> {
        if self.entries.iter().any(|e| e.instance_id == instance_id) {
            return Err(Error::AlreadyCached(instance_id));
        }
        self.entries.push(CacheEntry {
            instance_id,
            feature,
            last_scores: scores,
            inserted_at: step,
        });
        self.push_count += 1;
        Ok(())
    }

    /// Rescoring pass, run right after a memory update. Every entry is scored
    /// against the current bank; `release` sees the fresh scores and the
    /// entry's age (now - inserted_at) and decides whether it leaves. Kept
    /// entries keep their insertion order and remember the fresh scores.
    pub fn recall<F>(
        &mut self,
        bank: &MemoryBank,
        now: u64,
        mut release: F,
    ) -> Result<Vec<CacheResolution>>
    where
        F: FnMut(&[ScoreBreakdown], u64) -> bool,
    {
        let mut kept = Vec::with_capacity(self.entries.len());
        let mut released = Vec::new();
        for mut entry in self.entries.drain(..) {
            let scores = bank.predict(&entry.feature)?;
            let age = now.saturating_sub(entry.inserted_at);
            if release(&scores, age) {
                released.push(CacheResolution {
                    instance_id: entry.instance_id,
                    inserted_at: entry.inserted_at,
                    scores,
                });
            } else {
                entry.last_scores = scores;
                kept.push(entry);
            }
        }
        self.entries = kept;
        Ok(released)
    }

    /// End-of-stream flush: every remaining entry is finalized against the
    /// final bank, in insertion order, and the cache empties.
    pub fn flush(&mut self, bank: &MemoryBank) -> Result<Vec<CacheResolution>> {
        let mut out = Vec::with_capacity(self.entries.len());
        for entry in self.entries.drain(..) {
            out.push(CacheResolution {
                instance_id: entry.instance_id,
                inserted_at: entry.inserted_at,
                scores: bank.predict(&entry.feature)?,
            });
        }
        Ok(out)
    }
}
