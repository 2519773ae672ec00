//! Value networks for the learned gates, trained with Monte-Carlo returns.
//! The network is a two-layer fully connected net written out by hand (plain
//! arrays, explicit backprop) so its arithmetic is exactly reproducible and
//! easy to check against finite differences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{encode_state, release_gate, ControllerKind, StateMode, StateVector};
use crate::engine::{argmax_combined, run_movie, EngineConfig, GatePolicy, MovieStream};
use crate::error::{Error, Result};
use crate::feature::{MultiModalFeature, ScoreBreakdown};
use crate::memory::MemoryBank;
use crate::rng::stream_rng;

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Which decision gate an agent is being trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Update,
    Cache,
}

/// Two-layer value network: input -> ReLU hidden -> two action values
/// (index 0 passive, index 1 active). Weights are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    input_dim: usize,
    hidden_dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl QNetwork {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        QNetwork {
            input_dim,
            hidden_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; 2 * hidden_dim],
            b2: vec![0.0; 2],
        }
    }

    /// Uniform init in +-1/sqrt(fan_in), biases zero. Draw order is fixed
    /// (w1 row-major, then w2) so a seed pins the exact network.
    pub fn random(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut net = QNetwork::zeros(input_dim, hidden_dim);
        let bound1 = 1.0 / (input_dim as f64).sqrt();
        for w in &mut net.w1 {
            *w = rng.random_range(-bound1..=bound1);
        }
        let bound2 = 1.0 / (hidden_dim as f64).sqrt();
        for w in &mut net.w2 {
            *w = rng.random_range(-bound2..=bound2);
        }
        net
    }

    /// Rebuilds a network from raw parts, validating shapes. Used when
    /// loading checkpoints.
    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidConfig(
                "network dimensions must be positive".into(),
            ));
        }
        let checks = [
            (w1.len(), hidden_dim * input_dim, "w1"),
            (b1.len(), hidden_dim, "b1"),
            (w2.len(), 2 * hidden_dim, "w2"),
            (b2.len(), 2, "b2"),
        ];
        for (got, want, name) in checks {
            if got != want {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {got} parameters, expected {want}"
                )));
            }
        }
        for v in w1.iter().chain(&b1).chain(&w2).chain(&b2) {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(
                    "network parameters must be finite".into(),
                ));
            }
        }
        Ok(QNetwork {
            input_dim,
            hidden_dim,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn parts(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.w1, &self.b1, &self.w2, &self.b2)
    }

    fn pre_activations(&self, input: &[f64]) -> Vec<f64> {
        let mut z = self.b1.clone();
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.w1[k * self.input_dim..(k + 1) * self.input_dim];
            for (w, x) in row.iter().zip(input) {
                *zk += w * x;
            }
        }
        z
    }

    fn output_from_hidden(&self, h: &[f64]) -> [f64; 2] {
        let mut q = [self.b2[0], self.b2[1]];
        for (a, qa) in q.iter_mut().enumerate() {
            let row = &self.w2[a * self.hidden_dim..(a + 1) * self.hidden_dim];
            for (w, hk) in row.iter().zip(h) {
                *qa += w * hk;
            }
        }
        q
    }

    /// Action values (passive, active) for a state.
    pub fn forward(&self, input: &[f64]) -> Result<(f64, f64)> {
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: input.len(),
            });
        }
        let z = self.pre_activations(input);
        let h: Vec<f64> = z.into_iter().map(relu).collect();
        let q = self.output_from_hidden(&h);
        Ok((q[0], q[1]))
    }
}

/// Per-decision recognition reward: 1 when the action agrees with the truth
/// bit, else 0. `kind` names which truth the caller computed: for the update
/// gate, "this instance really is the candidate cast"; for the cache gate,
/// "the immediate top-1 label would have been wrong".
pub fn reward(action: bool, is_match: bool, kind: GateKind) -> f64 {
    let _ = kind;
    if action == is_match {
        1.0
    } else {
        0.0
    }
}

/// Undiscounted forward window sum: rewards[t] + ... + rewards[min(t + horizon,
/// end)], inclusive, truncated at the end of the series.
pub fn n_step_return(rewards: &[f64], t: usize, horizon: usize) -> Result<f64> {
    if t >= rewards.len() {
        return Err(Error::StepOutOfRange {
            step: t,
            len: rewards.len(),
        });
    }
    let end = t.saturating_add(horizon).min(rewards.len() - 1);
    Ok(rewards[t..=end].iter().sum())
}

/// One recorded gate decision with its Monte-Carlo return.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: bool,
    pub ret: f64,
    pub movie_id: String,
    pub step: u64,
}

/// One minibatch SGD step on the squared error between the taken action's
/// value and its return. Returns the batch loss measured before the step.
pub fn train_step(net: &mut QNetwork, batch: &[Transition], learning_rate: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty training batch".into()));
    }
    let (input_dim, hidden_dim) = (net.input_dim, net.hidden_dim);
    let mut gw1 = vec![0.0; net.w1.len()];
    let mut gb1 = vec![0.0; net.b1.len()];
    let mut gw2 = vec![0.0; net.w2.len()];
    let mut gb2 = vec![0.0; net.b2.len()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for tr in batch {
        let x = &tr.state.values;
        if x.len() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: x.len(),
            });
        }
        let z = net.pre_activations(x);
        let h: Vec<f64> = z.iter().copied().map(relu).collect();
        let q = net.output_from_hidden(&h);
        let a = tr.action as usize;
        let err = q[a] - tr.ret;
        loss += err * err * scale;
        // d(loss)/d(q[a]) for the mean of squared errors over the batch.
        let g = 2.0 * err * scale;
        gb2[a] += g;
        for k in 0..hidden_dim {
            gw2[a * hidden_dim + k] += g * h[k];
            if z[k] > 0.0 {
                let dh = g * net.w2[a * hidden_dim + k];
                gb1[k] += dh;
                let row = &mut gw1[k * input_dim..(k + 1) * input_dim];
                for (gw, xi) in row.iter_mut().zip(x) {
                    *gw += dh * xi;
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    for (w, g) in net.w1.iter_mut().zip(&gw1) {
        *w -= learning_rate * g;
    }
    for (b, g) in net.b1.iter_mut().zip(&gb1) {
        *b -= learning_rate * g;
    }
    for (w, g) in net.w2.iter_mut().zip(&gw2) {
        *w -= learning_rate * g;
    }
    for (b, g) in net.b2.iter_mut().zip(&gb2) {
        *b -= learning_rate * g;
    }
    Ok(loss)
}

/// Training hyperparameters. Defaults are the tuned operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// SGD steps per agent per movie per epoch.
    pub iterations_per_movie: usize,
    /// Forward reward window length (the return sums horizon + 1 terms).
    pub horizon: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub minibatch: usize,
    pub hidden_dim: usize,
    pub state_mode: StateMode,
    pub seed: u64,
    /// Engine settings used for the exploration rollouts.
    pub engine: EngineConfig,
    /// Release-gate thresholds during rollouts (that gate stays manual).
    pub gamma: f64,
    pub tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 100,
            iterations_per_movie: 200,
            horizon: 30,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            minibatch: 32,
            hidden_dim: 64,
            state_mode: StateMode::Summary,
            seed: 0,
            engine: EngineConfig::default(),
            gamma: 0.6,
            tau: 0.08,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [("learning_rate", self.learning_rate), ("gamma", self.gamma)];
        for (name, v) in positives {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::InvalidConfig("tau must be non-negative".into()));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("iterations_per_movie", self.iterations_per_movie),
            ("minibatch", self.minibatch),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Linear exploration schedule from start at epoch 0 to end at the last.
    pub fn epsilon_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.epsilon_start;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac.min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub epsilon: f64,
    pub update_mean_return: f64,
    pub cache_mean_return: f64,
    pub update_mean_loss: f64,
    pub cache_mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub epochs: Vec<EpochLog>,
}

/// Epsilon-greedy policy that records every gate decision during a rollout.
/// The release gate runs its threshold rule; only the update and cache gates
/// explore and learn.
struct RolloutRecorder<'a> {
    update_net: &'a QNetwork,
    cache_net: &'a QNetwork,
    state_mode: StateMode,
    gamma: f64,
    tau: f64,
    epsilon: f64,
    rng: ChaCha8Rng,
    update_decisions: Vec<(u64, usize, StateVector, bool)>,
    cache_decisions: Vec<(u64, usize, StateVector, bool)>,
}

impl RolloutRecorder<'_> {
    fn choose(&mut self, net: &QNetwork, state: &StateVector) -> Result<bool> {
        if self.rng.random::<f64>() < self.epsilon {
            return Ok(self.rng.random::<bool>());
        }
        let (q_pass, q_act) = net.forward(&state.values)?;
        Ok(q_act > q_pass)
    }
}

impl GatePolicy for RolloutRecorder<'_> {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Learned
    }

    fn decide_update(
        &mut self,
        step: u64,
        bank: &MemoryBank,
        cast: usize,
        f: &MultiModalFeature,
        _score: &ScoreBreakdown,
    ) -> Result<bool> {
        let state = encode_state(bank, cast, f, self.state_mode)?;
        let action = self.choose(self.update_net, &state)?;
        self.update_decisions.push((step, cast, state, action));
        Ok(action)
    }

    fn decide_cache(
        &mut self,
        step: u64,
        bank: &MemoryBank,
        f: &MultiModalFeature,
        scores: &[ScoreBreakdown],
    ) -> Result<bool> {
        let top = argmax_combined(scores);
        let state = encode_state(bank, top, f, self.state_mode)?;
        let action = self.choose(self.cache_net, &state)?;
        self.cache_decisions.push((step, top, state, action));
        Ok(action)
    }

    fn decide_release(&mut self, scores: &[ScoreBreakdown], age: u64) -> bool {
        let combined: Vec<f64> = scores.iter().map(|s| s.combined).collect();
        release_gate(&combined, age, self.gamma, self.tau)
    }
}

/// Truth bit for an update decision: the instance really is this cast.
/// Distractors yield no reward signal either way.
fn update_reward(movie: &MovieStream, step: u64, cast: usize, action: bool) -> f64 {
    match movie.truth_cast(step as usize) {
        Some(cast_id) => reward(
            action,
            cast_id == movie.cast[cast].cast_id,
            GateKind::Update,
        ),
        None => 0.0,
    }
}

/// Truth bit for a cache decision: the immediate top-1 label would have been
/// wrong, so deferring was the right call.
fn cache_reward(movie: &MovieStream, step: u64, top: usize, action: bool) -> f64 {
    match movie.truth_cast(step as usize) {
        Some(cast_id) => reward(action, cast_id != movie.cast[top].cast_id, GateKind::Cache),
        None => 0.0,
    }
}

fn transitions_from_rollout(
    recorder: RolloutRecorder<'_>,
    movie: &MovieStream,
    horizon: usize,
) -> Result<(Vec<Transition>, Vec<Transition>)> {
    let n = movie.instances.len();
    let cast_count = movie.cast.len();

    // Per-cast reward series for the update agent: every (step, cast) pair is
    // consulted exactly once, so the series is dense.
    let mut update_rewards = vec![vec![0.0; n]; cast_count];
    for &(step, cast, _, action) in &recorder.update_decisions {
        update_rewards[cast][step as usize] = update_reward(movie, step, cast, action);
    }
    let mut update_out = Vec::with_capacity(recorder.update_decisions.len());
    for (step, cast, state, action) in recorder.update_decisions {
        let ret = n_step_return(&update_rewards[cast], step as usize, horizon)?;
        update_out.push(Transition {
            state,
            action,
            ret,
            movie_id: movie.movie_id.clone(),
            step,
        });
    }

    // The cache agent is only consulted on steps nobody claimed; other steps
    // contribute zero to its forward window.
    let mut cache_rewards = vec![0.0; n];
    for &(step, top, _, action) in &recorder.cache_decisions {
        cache_rewards[step as usize] = cache_reward(movie, step, top, action);
    }
    let mut cache_out = Vec::with_capacity(recorder.cache_decisions.len());
    for (step, _, state, action) in recorder.cache_decisions {
        let ret = n_step_return(&cache_rewards, step as usize, horizon)?;
        cache_out.push(Transition {
            state,
            action,
            ret,
            movie_id: movie.movie_id.clone(),
            step,
        });
    }
    Ok((update_out, cache_out))
}

fn sample_batch(
    transitions: &[Transition],
    size: usize,
    rng: &mut ChaCha8Rng,
    buf: &mut Vec<Transition>,
) {
    buf.clear();
    for _ in 0..size {
        buf.push(transitions[rng.random_range(0..transitions.len())].clone());
    }
}

/// Trains the update-gate and cache-gate agents over labeled movies: per
/// epoch, each movie is rolled out through the real engine under an
/// epsilon-greedy version of the current networks, decisions get forward
/// window returns, and both nets take minibatch SGD steps on that movie's
/// transitions. Fully deterministic for a given config.
pub fn train_agents(
    movies: &[MovieStream],
    config: &TrainConfig,
) -> Result<(QNetwork, QNetwork, TrainLog)> {
    config.validate()?;
    if movies.is_empty() {
        return Err(Error::InvalidConfig("no training movies".into()));
    }
    let dim = movies[0].dim;
    for movie in movies {
        movie.validate()?;
        if movie.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: movie.dim,
            });
        }
        if movie.instances.iter().any(|i| i.truth.is_none()) {
            return Err(Error::MissingGroundTruth(movie.movie_id.clone()));
        }
    }

    let input_dim = config.state_mode.state_len(dim);
    let mut update_net = QNetwork::random(
        input_dim,
        config.hidden_dim,
        &mut stream_rng(config.seed, "qlearn/init/update"),
    );
    let mut cache_net = QNetwork::random(
        input_dim,
        config.hidden_dim,
        &mut stream_rng(config.seed, "qlearn/init/cache"),
    );

    let mut log = TrainLog {
        config: config.clone(),
        epochs: Vec::with_capacity(config.epochs),
    };
    let mut batch = Vec::with_capacity(config.minibatch);
    for epoch in 0..config.epochs {
        let epsilon = config.epsilon_at(epoch);
        let mut returns = [(0.0, 0usize); 2];
        let mut losses = [(0.0, 0usize); 2];
        for (mi, movie) in movies.iter().enumerate() {
            let recorder = RolloutRecorder {
                update_net: &update_net,
                cache_net: &cache_net,
                state_mode: config.state_mode,
                gamma: config.gamma,
                tau: config.tau,
                epsilon,
                rng: stream_rng(config.seed, &format!("qlearn/rollout/{epoch}/{mi}")),
                update_decisions: Vec::new(),
                cache_decisions: Vec::new(),
            };
            let mut recorder = recorder;
            run_movie(movie, &mut recorder, &config.engine)?;
            let (update_ts, cache_ts) = transitions_from_rollout(recorder, movie, config.horizon)?;

            for (slot, ts, net) in [
                (0usize, &update_ts, &mut update_net),
                (1usize, &cache_ts, &mut cache_net),
            ] {
                if ts.is_empty() {
                    continue;
                }
                returns[slot].0 += ts.iter().map(|t| t.ret).sum::<f64>();
                returns[slot].1 += ts.len();
                let label = ["qlearn/sgd/update", "qlearn/sgd/cache"][slot];
                let mut rng = stream_rng(config.seed, &format!("{label}/{epoch}/{mi}"));
                for _ in 0..config.iterations_per_movie {
                    sample_batch(ts, config.minibatch, &mut rng, &mut batch);
                    losses[slot].0 += train_step(net, &batch, config.learning_rate)?;
                    losses[slot].1 += 1;
                }
            }
        }
        let mean = |(sum, n): (f64, usize)| if n == 0 { 0.0 } else { sum / n as f64 };
        log.epochs.push(EpochLog {
            epoch,
            epsilon,
            update_mean_return: mean(returns[0]),
            cache_mean_return: mean(returns[1]),
            update_mean_loss: mean(losses[0]),
            cache_mean_loss: mean(losses[1]),
        });
    }
    Ok((update_net, cache_net, log))
}
