//! Brute-force stream simulator used as an oracle. Everything is re-derived
//! here with plain indexed loops and its own state layout; the only things
//! shared with the library are the input data types and the controller
//! weight values, so a disagreement points at a real behavioral bug rather
//! than a shared mistake.

use castsearch::controller::StateMode;
use castsearch::engine::{EngineConfig, MovieStream};
use castsearch::feature::{Modality, MultiModalFeature};

pub struct BruteNet {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl BruteNet {
    fn q(&self, x: &[f64]) -> (f64, f64) {
        assert_eq!(x.len(), self.input_dim);
        let mut h = vec![0.0; self.hidden_dim];
        for k in 0..self.hidden_dim {
            let mut z = self.b1[k];
            for i in 0..self.input_dim {
                z += self.w1[k * self.input_dim + i] * x[i];
            }
            h[k] = if z > 0.0 { z } else { 0.0 };
        }
        let mut q = [0.0; 2];
        for (a, qa) in q.iter_mut().enumerate() {
            let mut acc = self.b2[a];
            for k in 0..self.hidden_dim {
                acc += self.w2[a * self.hidden_dim + k] * h[k];
            }
            *qa = acc;
        }
        (q[0], q[1])
    }
}

pub enum BrutePolicy {
    Manual {
        alpha: f64,
        beta: f64,
        gamma: f64,
        tau: f64,
    },
    Learned {
        update: BruteNet,
        cache: BruteNet,
        mode: StateMode,
        gamma: f64,
        tau: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteScores {
    pub per: [Option<f64>; 3],
    pub combined: f64,
    pub shared: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Copy)]
pub enum BruteKind {
    Immediate,
    Released,
    Flushed,
}

#[derive(Debug, Clone)]
pub struct BruteFinal {
    pub instance_id: String,
    pub arrival_step: u64,
    pub finalized_step: u64,
    pub kind: BruteKind,
    pub scores: Vec<BruteScores>,
}

#[derive(Debug, Clone)]
pub struct BruteStep {
    pub step: u64,
    pub instance_id: String,
    pub scores: Vec<BruteScores>,
    pub update_gates: Vec<bool>,
    pub cache_gate: Option<bool>,
    pub release_gates: Vec<bool>,
    pub updated_cast: Option<usize>,
    pub pushed: bool,
    pub released: Vec<String>,
    pub finalized: Vec<BruteFinal>,
}

pub struct BruteTrace {
    pub steps: Vec<BruteStep>,
    pub flushed: Vec<BruteFinal>,
}

const MODS: [Modality; 3] = [Modality::Face, Modality::Body, Modality::Audio];

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn renorm(v: &mut [f64]) {
    let n2 = dot(v, v);
    if (n2 - 1.0).abs() > 1e-12 {
        let n = n2.sqrt();
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

struct BruteMemory {
    dim: usize,
    slots: Vec<[Vec<f64>; 3]>,
    filled: Vec<[bool; 3]>,
}

impl BruteMemory {
    fn new(movie: &MovieStream) -> Self {
        let mut slots = Vec::new();
        let mut filled = Vec::new();
        for c in &movie.cast {
            let mut face = c.portrait.get(Modality::Face).unwrap().to_vec();
            renorm(&mut face);
            slots.push([face, vec![0.0; movie.dim], vec![0.0; movie.dim]]);
            filled.push([true, false, false]);
        }
        BruteMemory {
            dim: movie.dim,
            slots,
            filled,
        }
    }

    fn score_one(&self, cast: usize, f: &MultiModalFeature) -> BruteScores {
        let mut per = [None; 3];
        let mut sum = 0.0;
        let mut n = 0usize;
        for (mi, m) in MODS.iter().enumerate() {
            if let Some(v) = f.get(*m) {
                if self.filled[cast][mi] {
                    let c = dot(v, &self.slots[cast][mi]);
                    per[mi] = Some(c);
                    sum += c;
                    n += 1;
                }
            }
        }
        BruteScores {
            per,
            combined: if n == 0 { 0.0 } else { sum / n as f64 },
            shared: n,
        }
    }

    fn score_all(&self, f: &MultiModalFeature) -> Vec<BruteScores> {
        (0..self.slots.len())
            .map(|j| self.score_one(j, f))
            .collect()
    }

    fn update(&mut self, cast: usize, f: &MultiModalFeature, mu: f64, first_write: bool) {
        for (mi, m) in MODS.iter().enumerate() {
            let Some(v) = f.get(*m) else { continue };
            if self.filled[cast][mi] {
                if mu > 0.0 {
                    let slot = &mut self.slots[cast][mi];
                    for i in 0..slot.len() {
                        slot[i] = (1.0 - mu) * slot[i] + mu * v[i];
                    }
                    renorm(slot);
                }
            } else if first_write {
                self.slots[cast][mi] = v.to_vec();
                self.filled[cast][mi] = true;
            }
        }
    }

    fn encode(&self, cast: usize, f: &MultiModalFeature, mode: StateMode) -> Vec<f64> {
        match mode {
            StateMode::Raw => {
                let mut v = Vec::with_capacity(6 * self.dim);
                for mi in 0..3 {
                    v.extend_from_slice(&self.slots[cast][mi]);
                }
                for m in MODS {
                    match f.get(m) {
                        Some(x) => v.extend_from_slice(x),
                        None => v.extend(std::iter::repeat(0.0).take(self.dim)),
                    }
                }
                v
            }
            StateMode::Summary => {
                let scores = self.score_all(f);
                let own = &scores[cast];
                let mut v = Vec::with_capacity(10);
                for mi in 0..3 {
                    v.push(own.per[mi].unwrap_or(0.0));
                }
                for m in MODS {
                    v.push(if f.get(m).is_some() { 1.0 } else { 0.0 });
                }
                for mi in 0..3 {
                    v.push(if self.filled[cast][mi] { 1.0 } else { 0.0 });
                }
                let mut max_other = f64::NEG_INFINITY;
                for (j, s) in scores.iter().enumerate() {
                    if j != cast && s.combined > max_other {
                        max_other = s.combined;
                    }
                }
                v.push(if max_other.is_finite() {
                    max_other
                } else {
                    0.0
                });
                v
            }
        }
    }
}

impl BrutePolicy {
    fn update_gate(
        &self,
        mem: &BruteMemory,
        cast: usize,
        f: &MultiModalFeature,
        s: &BruteScores,
    ) -> bool {
        match self {
            BrutePolicy::Manual { alpha, .. } => s.combined >= *alpha,
            BrutePolicy::Learned { update, mode, .. } => {
                let (q_pass, q_act) = update.q(&mem.encode(cast, f, *mode));
                q_act > q_pass
            }
        }
    }

    fn cache_gate(&self, mem: &BruteMemory, f: &MultiModalFeature, scores: &[BruteScores]) -> bool {
        match self {
            BrutePolicy::Manual { beta, .. } => scores.iter().all(|s| s.combined <= *beta),
            BrutePolicy::Learned { cache, mode, .. } => {
                let mut top = 0;
                for j in 1..scores.len() {
                    if scores[j].combined > scores[top].combined {
                        top = j;
                    }
                }
                let (q_pass, q_act) = cache.q(&mem.encode(top, f, *mode));
                q_act > q_pass
            }
        }
    }

    fn release_gate(&self, scores: &[BruteScores], age: u64) -> bool {
        let (gamma, tau) = match self {
            BrutePolicy::Manual { gamma, tau, .. } => (*gamma, *tau),
            BrutePolicy::Learned { gamma, tau, .. } => (*gamma, *tau),
        };
        scores
            .iter()
            .any(|s| tau * age as f64 * s.combined.max(0.0) > gamma)
    }
}

struct CacheSlot {
    instance_id: String,
    feature: MultiModalFeature,
    inserted_at: u64,
}

/// Replays the whole movie with the documented step order and returns the
/// full decision record.
pub fn simulate(movie: &MovieStream, policy: &BrutePolicy, config: &EngineConfig) -> BruteTrace {
    let mut mem = BruteMemory::new(movie);
    let mut cache: Vec<CacheSlot> = Vec::new();
    let mut steps = Vec::new();

    for (t, inst) in movie.instances.iter().enumerate() {
        let t = t as u64;
        let scores = mem.score_all(&inst.feature);

        let update_gates: Vec<bool> = (0..movie.cast.len())
            .map(|j| policy.update_gate(&mem, j, &inst.feature, &scores[j]))
            .collect();

        let mut cache_gate = None;
        let mut release_gates = Vec::new();
        let mut updated_cast = None;
        let mut pushed = false;
        let mut released = Vec::new();
        let mut finalized = Vec::new();

        let fired: Vec<usize> = (0..update_gates.len())
            .filter(|j| update_gates[*j])
            .collect();
        if !fired.is_empty() {
            let mut best = fired[0];
            for &j in &fired[1..] {
                if scores[j].combined > scores[best].combined {
                    best = j;
                }
            }
            mem.update(best, &inst.feature, config.blend_rate, config.first_write);
            updated_cast = Some(best);
            finalized.push(BruteFinal {
                instance_id: inst.instance_id.clone(),
                arrival_step: t,
                finalized_step: t,
                kind: BruteKind::Immediate,
                scores: scores.clone(),
            });
            if config.use_cache && !cache.is_empty() {
                let mut kept = Vec::new();
                for entry in cache.drain(..) {
                    let fresh = mem.score_all(&entry.feature);
                    let age = t.saturating_sub(entry.inserted_at);
                    let go = policy.release_gate(&fresh, age);
                    release_gates.push(go);
                    if go {
                        released.push(entry.instance_id.clone());
                        finalized.push(BruteFinal {
                            instance_id: entry.instance_id,
                            arrival_step: entry.inserted_at,
                            finalized_step: t,
                            kind: BruteKind::Released,
                            scores: fresh,
                        });
                    } else {
                        kept.push(entry);
                    }
                }
                cache = kept;
            }
        } else if config.use_cache {
            let g = policy.cache_gate(&mem, &inst.feature, &scores);
            cache_gate = Some(g);
            if g {
                cache.push(CacheSlot {
                    instance_id: inst.instance_id.clone(),
                    feature: inst.feature.clone(),
                    inserted_at: t,
                });
                pushed = true;
            } else {
                finalized.push(BruteFinal {
                    instance_id: inst.instance_id.clone(),
                    arrival_step: t,
                    finalized_step: t,
                    kind: BruteKind::Immediate,
                    scores: scores.clone(),
                });
            }
        } else {
            finalized.push(BruteFinal {
                instance_id: inst.instance_id.clone(),
                arrival_step: t,
                finalized_step: t,
                kind: BruteKind::Immediate,
                scores: scores.clone(),
            });
        }

        steps.push(BruteStep {
            step: t,
            instance_id: inst.instance_id.clone(),
            scores,
            update_gates,
            cache_gate,
            release_gates,
            updated_cast,
            pushed,
            released,
            finalized,
        });
    }

    let end = movie.instances.len() as u64;
    let flushed = cache
        .drain(..)
        .map(|entry| BruteFinal {
            instance_id: entry.instance_id.clone(),
            arrival_step: entry.inserted_at,
            finalized_step: end,
            kind: BruteKind::Flushed,
            scores: mem.score_all(&entry.feature),
        })
        .collect();

    BruteTrace { steps, flushed }
}
