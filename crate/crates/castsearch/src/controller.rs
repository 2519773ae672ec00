//! Gate rules. Three binary gates steer the engine: the update gate admits an
//! instance into a cast's memory, the cache gate sends an ambiguous instance
//! to the uncertain cache, and the release gate lets a cached instance out
//! once time and score have accumulated. Each has a threshold form here; the
//! first two can also be driven by trained value networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{MultiModalFeature, MODALITIES};
use crate::memory::MemoryBank;
use crate::qlearn::QNetwork;

/// How a bank/instance pair is encoded for the learned gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StateMode {
    /// Fixed-length digest: per-modality cosines against the candidate cast,
    /// instance presence flags, slot filled flags, and the best combined
    /// score among the other casts. Length 10 regardless of d.
    #[default]
    Summary,
    /// The candidate cast's three slots followed by the instance's three
    /// vectors, zeros standing in for void slots and absent modalities.
    /// Length 6d.
    Raw,
}

pub const SUMMARY_STATE_LEN: usize = 10;

impl StateMode {
    pub fn state_len(self, dim: usize) -> usize {
        match self {
            StateMode::Summary => SUMMARY_STATE_LEN,
            StateMode::Raw => 6 * dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub mode: StateMode,
    pub values: Vec<f64>,
}

/// Thresholds for the manual controller. Defaults are the tuned operating
/// point; `beta <= alpha` keeps the update and cache gates from both firing
/// on the same score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManualThresholds {
    /// Update gate: fire when a cast's combined score is at least `alpha`.
    pub alpha: f64,
    /// Cache gate: fire when every cast's combined score is at most `beta`.
    pub beta: f64,
    /// Release gate: a cached instance leaves once scaled dwell-score
    /// pressure exceeds `gamma`.
    pub gamma: f64,
    /// Dwell-time scale for the release gate.
    pub tau: f64,
}

impl Default for ManualThresholds {
    fn default() -> Self {
        ManualThresholds {
            alpha: 0.89,
            beta: 0.75,
            gamma: 0.6,
            tau: 0.08,
        }
    }
}

impl ManualThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("tau", self.tau),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if self.beta > self.alpha {
            return Err(Error::InvalidConfig(format!(
                "beta ({}) must not exceed alpha ({})",
                self.beta, self.alpha
            )));
        }
        if self.tau < 0.0 {
            return Err(Error::InvalidConfig("tau must be non-negative".into()));
        }
        Ok(())
    }
}

/// Update gate, threshold form: fires iff `score >= alpha`.
pub fn update_gate(score: f64, alpha: f64) -> bool {
    score >= alpha
}

/// Cache gate, threshold form: fires iff no cast reaches above `beta`, i.e.
/// the instance matched nobody convincingly.
pub fn cache_gate(scores: &[f64], beta: f64) -> bool {
    debug_assert!(!scores.is_empty());
    scores.iter().all(|p| *p <= beta)
}

/// Release gate: fires iff some cast's dwell-scaled score `tau * age * p`
/// (negative scores clamped to zero) has climbed strictly above `gamma`.
pub fn release_gate(scores: &[f64], age: u64, gamma: f64, tau: f64) -> bool {
    scores.iter().any(|p| tau * age as f64 * p.max(0.0) > gamma)
}

/// Encodes (bank, cast, instance) for a value network. See [`StateMode`].
pub fn encode_state(
    bank: &MemoryBank,
    cast: usize,
    f: &MultiModalFeature,
    mode: StateMode,
) -> Result<StateVector> {
    if cast >= bank.cast_count() {
        return Err(Error::UnknownCast(format!("#{cast}")));
    }
    if f.dim() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            got: f.dim(),
        });
    }
    let values = match mode {
        StateMode::Raw => {
            let mut v = Vec::with_capacity(6 * bank.dim());
            for m in MODALITIES {
                v.extend_from_slice(&bank.slot(cast, m).values);
            }
            for m in MODALITIES {
                v.extend_from_slice(f.vector(m));
            }
            v
        }
        StateMode::Summary => {
            let scores = bank.predict(f)?;
            let own = &scores[cast];
            let mut v = Vec::with_capacity(SUMMARY_STATE_LEN);
            for m in MODALITIES {
                v.push(own.per_modality[m.index()].unwrap_or(0.0));
            }
            for m in MODALITIES {
                v.push(if f.is_present(m) { 1.0 } else { 0.0 });
            }
            for m in MODALITIES {
                v.push(if bank.slot(cast, m).filled { 1.0 } else { 0.0 });
            }
            // Best competing cast; 0.0 when there is no other cast.
            let max_other = scores
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != cast)
                .map(|(_, s)| s.combined)
                .fold(f64::NEG_INFINITY, f64::max);
            v.push(if max_other.is_finite() {
                max_other
            } else {
                0.0
            });
            v
        }
    };
    Ok(StateVector { mode, values })
}

/// Greedy action of a value network on a state: true means "act" (update or
/// cache, depending on which gate the network was trained for). Ties go to
/// the passive action.
pub fn learned_gate(state: &StateVector, net: &QNetwork) -> Result<bool> {
    let (q_pass, q_act) = net.forward(&state.values)?;
    Ok(q_act > q_pass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Manual,
    Learned,
}

/// A learned controller carries one trained network per decision gate; the
/// release gate stays threshold-driven.
#[derive(Debug, Clone)]
pub struct LearnedController {
    pub update_net: QNetwork,
    pub cache_net: QNetwork,
    pub state_mode: StateMode,
    pub gamma: f64,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub enum Controller {
    Manual(ManualThresholds),
    Learned(LearnedController),
}

impl Controller {
    pub fn manual(thresholds: ManualThresholds) -> Result<Self> {
        thresholds.validate()?;
        Ok(Controller::Manual(thresholds))
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Manual(_) => ControllerKind::Manual,
            Controller::Learned(_) => ControllerKind::Learned,
        }
    }

    pub fn release_params(&self) -> (f64, f64) {
        match self {
            Controller::Manual(t) => (t.gamma, t.tau),
            Controller::Learned(l) => (l.gamma, l.tau),
        }
    }
}
