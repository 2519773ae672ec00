//! Synthetic movie generator. Each cast member gets one unit prototype per
//! modality; instances are noisy draws around the (slowly drifting)
//! prototypes with per-modality dropout. A fraction of instances are
//! distractors: their face resembles a random cast member's current face at a
//! controlled cosine (a lookalike), while their body and audio are fresh
//! draws from the sphere, so face evidence alone misleads and the other
//! modalities disambiguate. Noise and drift are sized by expected vector
//! norm, so they read as fractions of the unit signal regardless of
//! dimension. Generation is a pure function of (params, seed).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{CastPortrait, GroundTruth, MovieStream, StreamInstance};
use crate::error::{Error, Result};
use crate::feature::{normalize_feature, MultiModalFeature};
use crate::rng::stream_rng;

/// Seeds that make up the standard benchmark.
pub const BENCHMARK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub movies: usize,
    pub cast_count: usize,
    pub instances_per_movie: usize,
    pub dim: usize,
    /// Expected norm of the additive noise on each present modality.
    pub noise: f64,
    /// Presence probability per modality (face, body, audio).
    pub presence: [f64; 3],
    /// Expected per-step drift norm of a picked cast's prototypes.
    pub drift: f64,
    /// Fraction of instances drawn from outside the cast.
    pub distractor_rate: f64,
    /// Face cosine between a distractor and the cast member it resembles.
    pub distractor_face_sim: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            movies: 10,
            cast_count: 6,
            instances_per_movie: 400,
            dim: 16,
            noise: 0.35,
            presence: [1.0, 0.9, 0.4],
            drift: 0.01,
            distractor_rate: 0.1,
            distractor_face_sim: 0.98,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig("dimension must be at least 2".into()));
        }
        for (name, v) in [
            ("movies", self.movies),
            ("cast_count", self.cast_count),
            ("instances_per_movie", self.instances_per_movie),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("noise", self.noise), ("drift", self.drift)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        for (i, p) in self.presence.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidConfig(format!(
                    "presence[{i}] must be a probability"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return Err(Error::InvalidConfig(
                "distractor_rate must be a probability".into(),
            ));
        }
        // Below 1 so an exact-prototype instance always outranks a lookalike.
        if !(0.0..1.0).contains(&self.distractor_face_sim) {
            return Err(Error::InvalidConfig(
                "distractor_face_sim must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, coord_sd: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            g * coord_sd
        })
        .collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, dim, 1.0);
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if norm_sq > 1e-12 {
            let norm = norm_sq.sqrt();
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}

fn add_scaled(target: &mut [f64], delta: &[f64]) {
    for (t, d) in target.iter_mut().zip(delta) {
        *t += d;
    }
}

fn renormalize(v: &mut [f64]) {
    let norm_sq: f64 = v.iter().map(|x| x * x).sum();
    if norm_sq > 0.0 {
        let norm = norm_sq.sqrt();
        for x in v {
            *x /= norm;
        }
    }
}

/// Unit vector at exactly `cosine` to the unit vector `anchor`.
fn unit_at_cosine(rng: &mut ChaCha8Rng, anchor: &[f64], cosine: f64) -> Vec<f64> {
    loop {
        let u = random_unit(rng, anchor.len());
        let along: f64 = u.iter().zip(anchor).map(|(a, b)| a * b).sum();
        let mut perp: Vec<f64> = u.iter().zip(anchor).map(|(u, p)| u - along * p).collect();
        let norm_sq: f64 = perp.iter().map(|x| x * x).sum();
        if norm_sq <= 1e-12 {
            continue; // drew (anti)parallel to the anchor, try again
        }
        let scale = (1.0 - cosine * cosine).sqrt() / norm_sq.sqrt();
        for (x, p) in perp.iter_mut().zip(anchor) {
            *x = cosine * p + scale * *x;
        }
        return perp;
    }
}

/// Generates `params.movies` labeled movies. Per movie, the draw order is
/// fixed: prototypes (cast-major, then face/body/audio), then per instance
/// the distractor coin, the cast pick (lookalike target for distractors),
/// drift or distractor prototypes, presence coins, and noise.
pub fn generate_synthetic(params: &SyntheticParams, seed: u64) -> Result<Vec<MovieStream>> {
    params.validate()?;
    let d = params.dim;
    // Coordinate scales that put the expected vector norm at the named value.
    let noise_sd = params.noise / (d as f64).sqrt();
    let drift_sd = params.drift / (d as f64).sqrt();

    let mut movies = Vec::with_capacity(params.movies);
    for mi in 0..params.movies {
        let movie_id = format!("movie_s{seed}_{mi:02}");
        let mut rng = stream_rng(seed, &format!("synth/{mi}"));

        let mut prototypes: Vec<[Vec<f64>; 3]> = (0..params.cast_count)
            .map(|_| {
                [
                    random_unit(&mut rng, d),
                    random_unit(&mut rng, d),
                    random_unit(&mut rng, d),
                ]
            })
            .collect();

        let cast: Vec<CastPortrait> = prototypes
            .iter()
            .enumerate()
            .map(|(j, protos)| {
                Ok(CastPortrait {
                    cast_id: format!("cast{j:02}"),
                    portrait: MultiModalFeature::new(d, Some(protos[0].clone()), None, None)?,
                })
            })
            .collect::<Result<_>>()?;

        let mut instances = Vec::with_capacity(params.instances_per_movie);
        for t in 0..params.instances_per_movie {
            let is_distractor = rng.random::<f64>() < params.distractor_rate;
            let j = rng.random_range(0..params.cast_count);
            let (base, truth): ([Vec<f64>; 3], GroundTruth) = if is_distractor {
                let face = unit_at_cosine(&mut rng, &prototypes[j][0], params.distractor_face_sim);
                (
                    [face, random_unit(&mut rng, d), random_unit(&mut rng, d)],
                    GroundTruth::Other,
                )
            } else {
                if params.drift > 0.0 {
                    for proto in prototypes[j].iter_mut() {
                        let step = gaussian_vec(&mut rng, d, drift_sd);
                        add_scaled(proto, &step);
                        renormalize(proto);
                    }
                }
                (
                    prototypes[j].clone(),
                    GroundTruth::Cast(format!("cast{j:02}")),
                )
            };

            let mut drawn: [Option<Vec<f64>>; 3] = [None, None, None];
            for (m, slot) in drawn.iter_mut().enumerate() {
                if rng.random::<f64>() < params.presence[m] {
                    let mut v = base[m].clone();
                    if params.noise > 0.0 {
                        let noise = gaussian_vec(&mut rng, d, noise_sd);
                        add_scaled(&mut v, &noise);
                    }
                    *slot = Some(v);
                }
            }
            let [face, body, audio] = drawn;
            let feature = normalize_feature(&MultiModalFeature::new(d, face, body, audio)?)?;
            instances.push(StreamInstance {
                instance_id: format!("{movie_id}_i{t:04}"),
                feature,
                truth: Some(truth),
            });
        }

        movies.push(MovieStream {
            movie_id,
            dim: d,
            cast,
            instances,
        });
    }
    Ok(movies)
}
