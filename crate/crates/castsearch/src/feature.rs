//! Multi-modal feature vectors and the similarity primitives everything else
//! is built on. An instance carries up to three modality embeddings (face,
//! body, audio) of a common dimension; absent modalities hold a zero vector
//! plus a cleared presence flag so they contribute nothing to inner products.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Face,
    Body,
    Audio,
}

pub const MODALITIES: [Modality; 3] = [Modality::Face, Modality::Body, Modality::Audio];

impl Modality {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Face => "face",
            Modality::Body => "body",
            Modality::Audio => "audio",
        }
    }
}

/// One observed instance (or portrait). Vectors for absent modalities are
/// all-zero and flagged absent; vectors for present modalities are expected
/// to be unit-norm once [`normalize_feature`] has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModalFeature {
    dim: usize,
    vectors: [Vec<f64>; 3],
    presence: [bool; 3],
}

impl MultiModalFeature {
    /// Builds a raw (not yet normalized) feature. Present vectors must match
    /// `dim` and be finite; `None` marks the modality absent.
    pub fn new(
        dim: usize,
        face: Option<Vec<f64>>,
        body: Option<Vec<f64>>,
        audio: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mut vectors = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
        let mut presence = [false; 3];
        for (m, v) in MODALITIES.into_iter().zip([face, body, audio]) {
            if let Some(v) = v {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite { modality: m.name() });
                }
                vectors[m.index()] = v;
                presence[m.index()] = true;
            }
        }
        Ok(MultiModalFeature {
            dim,
            vectors,
            presence,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The stored vector, zeros when the modality is absent.
    pub fn vector(&self, m: Modality) -> &[f64] {
        &self.vectors[m.index()]
    }

    pub fn get(&self, m: Modality) -> Option<&[f64]> {
        self.presence[m.index()].then(|| self.vectors[m.index()].as_slice())
    }

    pub fn is_present(&self, m: Modality) -> bool {
        self.presence[m.index()]
    }

    pub fn presence(&self) -> [bool; 3] {
        self.presence
    }

    pub fn present_count(&self) -> usize {
        self.presence.iter().filter(|p| **p).count()
    }

    /// Copy with modalities outside `keep` dropped (vector zeroed, flag
    /// cleared). Used to restrict runs to a modality subset.
    pub fn masked(&self, keep: [bool; 3]) -> MultiModalFeature {
        let mut out = self.clone();
        for m in MODALITIES {
            if !keep[m.index()] && out.presence[m.index()] {
                out.vectors[m.index()] = vec![0.0; out.dim];
                out.presence[m.index()] = false;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rescales `v` to unit norm in place. Vectors already unit within fp noise
/// are left untouched so normalization is bitwise idempotent.
pub(crate) fn normalize_in_place(v: &mut [f64], modality: &'static str) -> Result<()> {
    let norm_sq = dot(v, v);
    if !norm_sq.is_finite() {
        return Err(Error::NonFinite { modality });
    }
    if norm_sq == 0.0 {
        return Err(Error::ZeroNorm { modality });
    }
    if (norm_sq - 1.0).abs() > 1e-12 {
        let norm = norm_sq.sqrt();
        for x in v {
            *x /= norm;
        }
    }
    Ok(())
}

/// L2-normalizes each present modality independently. Absent modalities are
/// untouched. A present all-zero or non-finite vector is an input error that
/// names the offending modality.
pub fn normalize_feature(raw: &MultiModalFeature) -> Result<MultiModalFeature> {
    let mut out = raw.clone();
    for m in MODALITIES {
        if out.presence[m.index()] {
            normalize_in_place(&mut out.vectors[m.index()], m.name())?;
        }
    }
    Ok(out)
}

/// Inner product of the implicit 3d-dim concatenations. Absent modalities are
/// zero-filled, so each one present on only one side contributes nothing.
/// Range [-3, 3] for normalized inputs.
pub fn concat_score(a: &MultiModalFeature, b: &MultiModalFeature) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    Ok(MODALITIES
        .into_iter()
        .map(|m| dot(a.vector(m), b.vector(m)))
        .sum())
}

/// Similarity between two features, reported per modality and combined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    /// Cosine per modality where both sides are present, `None` otherwise.
    pub per_modality: [Option<f64>; 3],
    /// Mean of the defined per-modality cosines; 0.0 when none are shared.
    /// Stays in [-1, 1], which is what the gates threshold against.
    pub combined: f64,
    pub shared_modalities: usize,
}

impl ScoreBreakdown {
    pub fn empty() -> Self {
        ScoreBreakdown {
            per_modality: [None; 3],
            combined: 0.0,
            shared_modalities: 0,
        }
    }

    pub(crate) fn from_parts(per_modality: [Option<f64>; 3]) -> Self {
        let shared = per_modality.iter().flatten().count();
        let combined = if shared == 0 {
            0.0
        } else {
            per_modality.iter().flatten().sum::<f64>() / shared as f64
        };
        ScoreBreakdown {
            per_modality,
            combined,
            shared_modalities: shared,
        }
    }
}

/// Per-modality cosines over the modalities present on both sides, plus their
/// mean as the gate-facing combined score. For normalized inputs,
/// `combined * shared_modalities == concat_score` up to fp noise.
pub fn modality_scores(a: &MultiModalFeature, b: &MultiModalFeature) -> Result<ScoreBreakdown> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    let mut per = [None; 3];
    for m in MODALITIES {
        if a.is_present(m) && b.is_present(m) {
            per[m.index()] = Some(dot(a.vector(m), b.vector(m)));
        }
    }
    Ok(ScoreBreakdown::from_parts(per))
}
