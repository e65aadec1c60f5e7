//! Ranked episodic replay with behavioral cloning.
//!
//! Completed episodes are scored with a weighted sum of three components:
//! the total extrinsic reward, the in-episode state diversity, and the
//! average global novelty of the visited states. The highest-scoring
//! experiences are kept in a capacity-bounded buffer and replayed as
//! supervised (negative log-likelihood) targets for the policy.
//!
//! Scores are frozen at insertion; the global component is not recomputed
//! as counts grow. Ties evict the older experience first.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::agent::{self, Cache, OptimizerState, PolicyParams};
use crate::intrinsic::CountTable;
use crate::ppo::Episode;
use crate::rng::Rng64;
use crate::schedule::{Scheduler, UpdateEvent};
use crate::{Error, Result};

/// Weights of the three score components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RapidWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for RapidWeights {
    fn default() -> Self {
        RapidWeights {
            w0: 1.0,
            w1: 0.1,
            w2: 0.001,
        }
    }
}

/// State granularity of the in-episode diversity score. Positions give the
/// strongest traversal signal (turning in place mints no novelty); `shared`
/// reuses the count-table keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocalKey {
    #[default]
    Position,
    Pose,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RapidConfig {
    /// Buffer capacity in experiences.
    pub capacity: usize,
    pub batch_size: usize,
    pub weights: RapidWeights,
    /// Keying of the local (in-episode) diversity score.
    pub local_key: LocalKey,
    /// Learning rate of the cloning optimizer; defaults to the RL rate.
    pub bc_lr: Option<f64>,
    /// Optional entropy bonus inside the cloning loss (off by default).
    pub bc_entropy_coef: f64,
}

impl Default for RapidConfig {
    fn default() -> Self {
        RapidConfig {
            capacity: 10_000,
            batch_size: 256,
            weights: RapidWeights::default(),
            local_key: LocalKey::Position,
            bc_lr: None,
            bc_entropy_coef: 0.0,
        }
    }
}

/// An episode with its score decomposition.
#[derive(Debug, Clone)]
pub struct ScoredEpisode {
    pub steps: Vec<(Rc<[f64]>, u8)>,
    pub s_ext: f64,
    pub s_local: f64,
    pub s_global: f64,
    pub score: f64,
    pub level_seed: u64,
    pub created_at: u64,
}

/// Score a completed episode against the global count table.
///
/// - `s_ext`: total extrinsic reward of the episode.
/// - `s_local`: distinct states visited / episode length, where state
///   granularity follows `local_key`.
/// - `s_global`: mean over steps of `1 / sqrt(N(s_t))` under the shared
///   count table.
/// - `score = w0 * s_ext + w1 * s_local + w2 * s_global`.
///
/// Counts must already reflect the episode's own visits.
pub fn score_episode(
    episode: &Episode,
    counts: &CountTable,
    weights: &RapidWeights,
    local_key: LocalKey,
) -> Result<ScoredEpisode> {
    if episode.is_empty() {
        return Err(Error::Usage("cannot score an empty episode".into()));
    }
    let len = episode.len() as f64;
    let s_ext = episode.return_ext();
    let mut distinct = std::collections::HashSet::new();
    let mut novelty = 0.0;
    for step in &episode.steps {
        distinct.insert(match local_key {
            LocalKey::Position => (step.pos.0 as u128) << 32 | step.pos.1 as u128,
            LocalKey::Pose => {
                (step.pos.0 as u128) << 40 | (step.pos.1 as u128) << 8 | step.dir as u128
            }
            LocalKey::Shared => step.key_hash,
        });
        let n = counts.count_hash(step.key_hash);
        if n == 0 {
            return Err(Error::Numeric(
                "episode state missing from count table".into(),
            ));
        }
        novelty += 1.0 / (n as f64).sqrt();
    }
    let s_local = distinct.len() as f64 / len;
    let s_global = novelty / len;
    Ok(ScoredEpisode {
        steps: episode
            .steps
            .iter()
            .map(|s| (s.input.clone(), s.action))
            .collect(),
        s_ext,
        s_local,
        s_global,
        score: weights.w0 * s_ext + weights.w1 * s_local + weights.w2 * s_global,
        level_seed: episode.level_seed,
        created_at: episode.start_frame,
    })
}

/// One stored (input, action) experience carrying its episode's score.
#[derive(Debug, Clone)]
pub struct Experience {
    pub input: Rc<[f64]>,
    pub action: u8,
    pub score: f64,
    pub s_ext: f64,
    pub s_local: f64,
    pub s_global: f64,
    pub level_seed: u64,
    pub created_at: u64,
    /// Global insertion sequence number; higher = more recent.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvictionReport {
    pub inserted: usize,
    pub evicted: usize,
    pub min_retained_score: f64,
}

/// Capacity-bounded store of scored experiences, ranked by
/// (score, recency): when full, the lowest score goes first and ties evict
/// the older experience.
#[derive(Debug, Clone, Default)]
pub struct RankedBuffer {
    items: Vec<Experience>,
    capacity: usize,
    next_seq: u64,
}

impl RankedBuffer {
    pub fn new(capacity: usize) -> RankedBuffer {
        RankedBuffer {
            items: Vec::new(),
            capacity,
            next_seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// Insert all experiences of a scored episode, then evict down to
    /// capacity by ascending (score, seq).
    pub fn insert(&mut self, scored: ScoredEpisode) -> EvictionReport {
        let inserted = scored.steps.len();
        self.items.reserve(inserted);
        for (input, action) in scored.steps {
            self.items.push(Experience {
                input,
                action,
                score: scored.score,
                s_ext: scored.s_ext,
                s_local: scored.s_local,
                s_global: scored.s_global,
                level_seed: scored.level_seed,
                created_at: scored.created_at,
                seq: self.next_seq,
            });
            self.next_seq += 1;
        }
        let mut evicted = 0;
        if self.items.len() > self.capacity {
            self.items.sort_unstable_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then(b.seq.cmp(&a.seq))
            });
            evicted = self.items.len() - self.capacity;
            self.items.truncate(self.capacity);
        }
        EvictionReport {
            inserted,
            evicted,
            min_retained_score: self
                .items
                .iter()
                .map(|e| e.score)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Uniform sample with replacement.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut Rng64) -> Vec<&Experience> {
        assert!(!self.is_empty(), "sample_batch on empty buffer");
        (0..batch_size)
            .map(|_| &self.items[rng.below(self.items.len())])
            .collect()
    }

    /// (min, max, mean) of retained scores.
    pub fn score_stats(&self) -> (f64, f64, f64) {
        if self.items.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for e in &self.items {
            min = min.min(e.score);
            max = max.max(e.score);
            sum += e.score;
        }
        (min, max, sum / self.items.len() as f64)
    }

    /// Mean share of each weighted component in the stored scores.
    pub fn component_shares(&self, weights: &RapidWeights) -> (f64, f64, f64) {
        if self.items.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let mut shares = (0.0, 0.0, 0.0);
        let mut counted = 0usize;
        for e in &self.items {
            if e.score <= 0.0 {
                continue;
            }
            shares.0 += weights.w0 * e.s_ext / e.score;
            shares.1 += weights.w1 * e.s_local / e.score;
            shares.2 += weights.w2 * e.s_global / e.score;
            counted += 1;
        }
        if counted == 0 {
            return (0.0, 0.0, 0.0);
        }
        let n = counted as f64;
        (shares.0 / n, shares.1 / n, shares.2 / n)
    }

    /// Histogram of retained experiences per level seed, sorted by seed.
    pub fn seed_histogram(&self) -> Vec<(u64, usize)> {
        let mut map = std::collections::BTreeMap::new();
        for e in &self.items {
            *map.entry(e.level_seed).or_insert(0usize) += 1;
        }
        map.into_iter().collect()
    }

    /// Per-experience snapshot rows for diagnostics CSV.
    pub fn snapshot_csv(&self) -> String {
        let mut out =
            String::from("seq,score,s_ext,s_local,s_global,level_seed,created_at,action\n");
        for e in &self.items {
            out.push_str(&format!(
                "{},{:.9},{:.9},{:.9},{:.9},{},{},{}\n",
                e.seq, e.score, e.s_ext, e.s_local, e.s_global, e.level_seed, e.created_at, e.action
            ));
        }
        out
    }
}

/// Behavioral-cloning loss over a batch, with optional gradients: mean
/// negative log-likelihood of the stored actions, minus an optional
/// entropy bonus.
pub fn bc_minibatch_loss(
    params: &PolicyParams,
    batch: &[(&[f64], u8)],
    entropy_coef: f64,
    cache: &mut Cache,
    mut grads: Option<&mut PolicyParams>,
) -> Result<f64> {
    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut d_logits = vec![0.0; params.n_actions];
    for (input, action) in batch {
        agent::forward(params, input, cache);
        let lp = agent::log_prob(&cache.logits, *action as usize);
        loss += -lp;
        let probs = agent::softmax(&cache.logits);
        let h = agent::entropy(&probs);
        loss -= entropy_coef * h;
        if let Some(g) = grads.as_deref_mut() {
            for (k, dl) in d_logits.iter_mut().enumerate() {
                let onehot = if k == *action as usize { 1.0 } else { 0.0 };
                let d_nll = probs[k] - onehot;
                let d_ent = entropy_coef * probs[k] * (probs[k].ln() + h);
                *dl = (d_nll + d_ent) / b;
            }
            agent::backward(params, input, cache, &d_logits, 0.0, g);
        }
    }
    let loss = loss / b;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite bc loss {loss}")));
    }
    Ok(loss)
}

/// One Adam step of behavioral cloning on a sampled batch; returns the loss.
pub fn bc_update(
    params: &mut PolicyParams,
    opt: &mut OptimizerState,
    buffer: &RankedBuffer,
    cfg: &RapidConfig,
    rng: &mut Rng64,
) -> Result<f64> {
    let sampled = buffer.sample_batch(cfg.batch_size, rng);
    let batch: Vec<(&[f64], u8)> = sampled.iter().map(|e| (&*e.input, e.action)).collect();
    let mut cache = Cache::for_params(params);
    let mut grads = params.zeros_like();
    let loss = bc_minibatch_loss(params, &batch, cfg.bc_entropy_coef, &mut cache, Some(&mut grads))?;
    opt.apply(params, &grads);
    Ok(loss)
}

/// Scoring + buffer + scheduler-gated cloning, as driven by the trainer.
///
/// The cloning loss runs on its own Adam state (same learning rate as the
/// RL loss): interleaving both losses through one optimizer makes each
/// 5-step cloning burst spend itself turning the RL momentum around, and
/// the imitation signal never compounds.
#[derive(Debug)]
pub struct RapidPipeline {
    pub cfg: RapidConfig,
    pub buffer: RankedBuffer,
    bc_opt: OptimizerState,
}

impl RapidPipeline {
    pub fn new(cfg: RapidConfig, rl_lr: f64, params: &PolicyParams) -> RapidPipeline {
        let lr = cfg.bc_lr.unwrap_or(rl_lr);
        RapidPipeline {
            buffer: RankedBuffer::new(cfg.capacity),
            cfg,
            bc_opt: OptimizerState::new(lr, params),
        }
    }

    /// Cloning updates performed so far.
    pub fn updates(&self) -> u64 {
        self.bc_opt.step
    }

    /// Score and insert the finished episode, then run as many cloning
    /// updates as the schedule grants for this event. Returns the number
    /// of updates performed.
    pub fn on_episode_end(
        &mut self,
        episode: &Episode,
        counts: &CountTable,
        scheduler: &mut Scheduler,
        params: &mut PolicyParams,
        rng: &mut Rng64,
    ) -> Result<usize> {
        let scored = score_episode(episode, counts, &self.cfg.weights, self.cfg.local_key)?;
        self.buffer.insert(scored);
        let granted = scheduler.offpolicy_updates(UpdateEvent::EpisodeEnd);
        self.run_updates(granted, params, rng)
    }

    /// Scheduler hook at rollout boundaries (fixed-ratio mode).
    pub fn on_rollout_end(
        &mut self,
        scheduler: &mut Scheduler,
        params: &mut PolicyParams,
        rng: &mut Rng64,
    ) -> Result<usize> {
        let granted = scheduler.offpolicy_updates(UpdateEvent::RolloutEnd);
        self.run_updates(granted, params, rng)
    }

    fn run_updates(
        &mut self,
        granted: u32,
        params: &mut PolicyParams,
        rng: &mut Rng64,
    ) -> Result<usize> {
        if self.buffer.is_empty() {
            return Ok(0);
        }
        for _ in 0..granted {
            bc_update(params, &mut self.bc_opt, &self.buffer, &self.cfg, rng)?;
        }
        Ok(granted as usize)
    }
}
