//! The per-cast memory bank. Each cast holds one slot per modality; face
//! slots start from the cast portraits, body and audio start void and are
//! claimed by the first gated instance that carries them. Gated updates blend
//! each present modality into its slot at a small rate and renormalize.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{
    dot, normalize_in_place, Modality, MultiModalFeature, ScoreBreakdown, MODALITIES,
};

pub const DEFAULT_BLEND_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySlot {
    pub values: Vec<f64>,
    pub filled: bool,
}

/// One gated write to the bank. `scores` is the similarity between the
/// incoming feature and the slots as they stood before the write, so the
/// series directly tracks how far updates drift from stored memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryUpdateEvent {
    pub step: u64,
    pub cast_id: String,
    pub scores: ScoreBreakdown,
    /// Which modalities were actually written (blend or first fill).
    pub written: [bool; 3],
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    cast_ids: Vec<String>,
    slots: Vec<[MemorySlot; 3]>,
    dim: usize,
    blend_rate: f64,
    /// Whether a void slot may be claimed directly by an incoming modality.
    /// Off in the strict single-modality baseline.
    first_write: bool,
    update_log: Vec<MemoryUpdateEvent>,
}

impl MemoryBank {
    /// Builds a bank from per-cast portraits. Every portrait must carry a
    /// face; its normalized face vector seeds that cast's face slot. Body and
    /// audio slots start zero and unfilled.
    pub fn init(portraits: &[(String, MultiModalFeature)], blend_rate: f64) -> Result<Self> {
        if portraits.is_empty() {
            return Err(Error::InvalidConfig(
                "memory bank needs at least one cast".into(),
            ));
        }
        if !(0.0..=1.0).contains(&blend_rate) {
            return Err(Error::InvalidConfig(format!(
                "blend rate must be in [0, 1], got {blend_rate}"
            )));
        }
        let dim = portraits[0].1.dim();
        let mut cast_ids = Vec::with_capacity(portraits.len());
        let mut slots = Vec::with_capacity(portraits.len());
        for (cast_id, portrait) in portraits {
            if cast_ids.contains(cast_id) {
                return Err(Error::DuplicateCast(cast_id.clone()));
            }
            if portrait.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: portrait.dim(),
                });
            }
            let face = portrait
                .get(Modality::Face)
                .ok_or_else(|| Error::PortraitWithoutFace(cast_id.clone()))?;
            let mut face = face.to_vec();
            normalize_in_place(&mut face, Modality::Face.name())?;
            slots.push([
                MemorySlot {
                    values: face,
                    filled: true,
                },
                MemorySlot {
                    values: vec![0.0; dim],
                    filled: false,
                },
                MemorySlot {
                    values: vec![0.0; dim],
                    filled: false,
                },
            ]);
            cast_ids.push(cast_id.clone());
        }
        Ok(MemoryBank {
            cast_ids,
            slots,
            dim,
            blend_rate,
            first_write: true,
            update_log: Vec::new(),
        })
    }

    pub fn set_first_write(&mut self, enabled: bool) {
        self.first_write = enabled;
    }

    pub fn cast_ids(&self) -> &[String] {
        &self.cast_ids
    }

    pub fn cast_count(&self) -> usize {
        self.cast_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blend_rate(&self) -> f64 {
        self.blend_rate
    }

    pub fn cast_index(&self, cast_id: &str) -> Option<usize> {
        self.cast_ids.iter().position(|c| c == cast_id)
    }

    pub fn slot(&self, cast: usize, m: Modality) -> &MemorySlot {
        &self.slots[cast][m.index()]
    }

    pub fn update_log(&self) -> &[MemoryUpdateEvent] {
        &self.update_log
    }

    fn breakdown(&self, cast: usize, f: &MultiModalFeature) -> ScoreBreakdown {
        let mut per = [None; 3];
        for m in MODALITIES {
            let slot = &self.slots[cast][m.index()];
            if f.is_present(m) && slot.filled {
                per[m.index()] = Some(dot(f.vector(m), &slot.values));
            }
        }
        ScoreBreakdown::from_parts(per)
    }

    /// Scores a feature against every cast's slots. A modality counts only
    /// when present on the instance and filled in the slot.
    pub fn predict(&self, f: &MultiModalFeature) -> Result<Vec<ScoreBreakdown>> {
        if f.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: f.dim(),
            });
        }
        Ok((0..self.cast_count())
            .map(|j| self.breakdown(j, f))
            .collect())
    }

    /// Applies a gated update for one cast. With the gate closed this is a
    /// no-op. Open, each modality present on the feature either blends into
    /// its filled slot at `blend_rate` (then renormalizes) or, for a void
    /// slot with first-write enabled, is copied in directly. Exactly one
    /// update event is logged per open-gate call.
    pub fn apply_update(
        &mut self,
        cast: usize,
        f: &MultiModalFeature,
        gate: bool,
        step: u64,
    ) -> Result<()> {
        if cast >= self.cast_count() {
            return Err(Error::UnknownCast(format!("#{cast}")));
        }
        if f.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: f.dim(),
            });
        }
        if !gate {
            return Ok(());
        }
        let scores = self.breakdown(cast, f);
        let mut written = [false; 3];
        for m in MODALITIES {
            if !f.is_present(m) {
                continue;
            }
            let slot = &mut self.slots[cast][m.index()];
            if slot.filled {
                if self.blend_rate > 0.0 {
                    let mu = self.blend_rate;
                    for (s, x) in slot.values.iter_mut().zip(f.vector(m)) {
                        *s = (1.0 - mu) * *s + mu * *x;
                    }
                    normalize_in_place(&mut slot.values, m.name())?;
                    written[m.index()] = true;
                }
            } else if self.first_write {
                slot.values.copy_from_slice(f.vector(m));
                slot.filled = true;
                written[m.index()] = true;
            }
        }
        self.update_log.push(MemoryUpdateEvent {
            step,
            cast_id: self.cast_ids[cast].clone(),
            scores,
            written,
        });
        Ok(())
    }

    /// Serializable view of the current slots, keyed by cast id.
    pub fn snapshot(&self) -> MemorySnapshot {
        let casts = self
            .cast_ids
            .iter()
            .zip(&self.slots)
            .map(|(id, slots)| {
                let per = MODALITIES
                    .into_iter()
                    .map(|m| (m.name().to_string(), slots[m.index()].clone()))
                    .collect();
                (id.clone(), per)
            })
            .collect();
        MemorySnapshot { casts }
    }
}

/// JSON-friendly snapshot of the bank: cast id, then modality name, then the
/// slot vector and its filled flag. BTreeMaps keep the output ordering stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub casts: BTreeMap<String, BTreeMap<String, MemorySlot>>,
}
