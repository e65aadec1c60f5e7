//! Self-imitation baseline: advantage-clipped policy/value imitation with
//! proportional prioritized experience replay.
//!
//! Completed episodes are stored as (input, action, Monte-Carlo extrinsic
//! return) tuples in a FIFO ring. Samples are drawn proportionally to
//! priority^alpha through a sum tree, weighted by importance-sampling
//! corrections, and their priorities are refreshed to the clipped
//! advantage (R - V)+ after every update.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::agent::{self, Cache, OptimizerState, PolicyParams};
use crate::ppo::Episode;
use crate::rng::Rng64;
use crate::schedule::{Scheduler, UpdateEvent};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SilConfig {
    pub capacity: usize,
    pub batch_size: usize,
    /// Weight of the imitation policy loss.
    pub loss_weight: f64,
    /// Weight of the imitation value loss.
    pub value_loss_weight: f64,
    /// Prioritization exponent alpha.
    pub per_alpha: f64,
    /// Importance-sampling correction exponent beta.
    pub per_beta: f64,
    /// Priority floor added to clipped advantages.
    pub priority_eps: f64,
}

impl Default for SilConfig {
    fn default() -> Self {
        SilConfig {
            capacity: 10_000,
            batch_size: 256,
            loss_weight: 0.1,
            value_loss_weight: 0.01,
            per_alpha: 0.6,
            per_beta: 0.1,
            priority_eps: 1e-6,
        }
    }
}

/// Flat-array sum tree over `capacity` leaves. Leaf `i` lives at
/// `capacity + i`; every internal node holds the sum of its children.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    tree: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> SumTree {
        SumTree {
            capacity,
            tree: vec![0.0; 2 * capacity],
        }
    }

    pub fn set(&mut self, slot: usize, value: f64) {
        debug_assert!(slot < self.capacity);
        let mut idx = self.capacity + slot;
        let delta = value - self.tree[idx];
        self.tree[idx] = value;
        while idx > 1 {
            idx /= 2;
            self.tree[idx] += delta;
        }
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.tree[self.capacity + slot]
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    /// Slot whose cumulative range contains `u` in `[0, total)`.
    pub fn find(&self, mut u: f64) -> usize {
        let mut idx = 1;
        while idx < self.capacity {
            let left = 2 * idx;
            if u < self.tree[left] {
                idx = left;
            } else {
                u -= self.tree[left];
                idx = left + 1;
            }
        }
        idx - self.capacity
    }

    /// Recomputed leaf sum, for consistency checks.
    pub fn leaf_sum(&self) -> f64 {
        self.tree[self.capacity..].iter().sum()
    }
}

#[derive(Debug, Clone)]
struct SilEntry {
    input: Rc<[f64]>,
    action: u8,
    /// Monte-Carlo discounted extrinsic return from this step.
    ret: f64,
}

/// FIFO ring of imitation tuples with proportional priorities.
#[derive(Debug, Clone)]
pub struct SilBuffer {
    entries: Vec<SilEntry>,
    tree: SumTree,
    capacity: usize,
    write_pos: usize,
    alpha: f64,
    priority_eps: f64,
    /// Running maximum raw priority; new samples start here so everything
    /// is replayed at least once.
    max_priority: f64,
}

impl SilBuffer {
    pub fn new(cfg: &SilConfig) -> SilBuffer {
        SilBuffer {
            entries: Vec::with_capacity(cfg.capacity),
            tree: SumTree::new(cfg.capacity),
            capacity: cfg.capacity,
            write_pos: 0,
            alpha: cfg.per_alpha,
            priority_eps: cfg.priority_eps,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Store per-step Monte-Carlo extrinsic returns of a finished episode.
    pub fn push_episode(&mut self, episode: &Episode, gamma: f64) {
        let mut running = 0.0;
        let mut returns = vec![0.0; episode.len()];
        for (t, step) in episode.steps.iter().enumerate().rev() {
            running = step.r_ext + gamma * running;
            returns[t] = running;
        }
        for (step, ret) in episode.steps.iter().zip(returns) {
            let entry = SilEntry {
                input: step.input.clone(),
                action: step.action,
                ret,
            };
            let priority = self.max_priority.powf(self.alpha);
            if self.entries.len() < self.capacity {
                self.entries.push(entry);
                self.tree.set(self.entries.len() - 1, priority);
            } else {
                self.entries[self.write_pos] = entry;
                self.tree.set(self.write_pos, priority);
            }
            self.write_pos = (self.write_pos + 1) % self.capacity;
        }
    }

    /// Monte-Carlo return stored at `slot` (diagnostics/tests).
    pub fn stored_return(&self, slot: usize) -> f64 {
        self.entries[slot].ret
    }

    fn update_priority(&mut self, slot: usize, raw: f64) {
        let raw = raw + self.priority_eps;
        self.max_priority = self.max_priority.max(raw);
        self.tree.set(slot, raw.powf(self.alpha));
    }
}

/// One imitation sample: stored tuple plus its normalized IS weight.
#[derive(Debug, Clone)]
pub struct SilSample {
    pub input: Rc<[f64]>,
    pub action: u8,
    pub ret: f64,
    pub weight: f64,
}

/// IS-weighted self-imitation loss over a batch, with optional gradients.
///
/// Per sample:
/// `loss_weight * (-log pi(a|s)) * (R - V)+ + value_loss_weight * 0.5 * (R - V)+^2`.
/// The clipped advantage is treated as a constant in the policy term (only
/// the value term backpropagates into the critic). Returns the loss and the
/// per-sample clipped advantages for priority refreshing.
pub fn sil_minibatch_loss(
    params: &PolicyParams,
    samples: &[SilSample],
    cfg: &SilConfig,
    cache: &mut Cache,
    mut grads: Option<&mut PolicyParams>,
) -> Result<(f64, Vec<f64>)> {
    let b = samples.len() as f64;
    let mut loss = 0.0;
    let mut advantages = Vec::with_capacity(samples.len());
    let mut d_logits = vec![0.0; params.n_actions];
    for s in samples {
        agent::forward(params, &s.input, cache);
        let v = cache.value;
        let adv = (s.ret - v).max(0.0);
        let lp = agent::log_prob(&cache.logits, s.action as usize);
        loss += s.weight * (cfg.loss_weight * (-lp) * adv + cfg.value_loss_weight * 0.5 * adv * adv);
        if let Some(g) = grads.as_deref_mut() {
            let probs = agent::softmax(&cache.logits);
            for (k, dl) in d_logits.iter_mut().enumerate() {
                let onehot = if k == s.action as usize { 1.0 } else { 0.0 };
                *dl = s.weight * cfg.loss_weight * adv * (probs[k] - onehot) / b;
            }
            // d/dV of 0.5 * (R - V)+^2 is -(R - V)+.
            let d_value = s.weight * cfg.value_loss_weight * (-adv) / b;
            agent::backward(params, &s.input, cache, &d_logits, d_value, g);
        }
        advantages.push(adv);
    }
    let loss = loss / b;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite sil loss {loss}")));
    }
    Ok((loss, advantages))
}

/// One prioritized self-imitation update; returns the loss.
pub fn sil_update(
    params: &mut PolicyParams,
    opt: &mut OptimizerState,
    buffer: &mut SilBuffer,
    cfg: &SilConfig,
    rng: &mut Rng64,
) -> Result<f64> {
    if buffer.is_empty() {
        return Err(Error::Usage("sil_update on an empty buffer".into()));
    }
    let n = buffer.len() as f64;
    let total = buffer.tree.total();
    if !(total > 0.0) {
        return Err(Error::Numeric("sum tree total must be positive".into()));
    }

    // Proportional sampling plus raw IS weights, normalized by the batch max.
    let mut picks: Vec<(usize, f64)> = Vec::with_capacity(cfg.batch_size);
    let mut w_max = 0.0f64;
    for _ in 0..cfg.batch_size {
        let slot = buffer.tree.find(rng.f64() * total);
        let p = buffer.tree.get(slot) / total;
        let w = (n * p).powf(-cfg.per_beta);
        w_max = w_max.max(w);
        picks.push((slot, w));
    }
    let samples: Vec<SilSample> = picks
        .iter()
        .map(|(slot, w)| {
            let entry = &buffer.entries[*slot];
            SilSample {
                input: entry.input.clone(),
                action: entry.action,
                ret: entry.ret,
                weight: w / w_max,
            }
        })
        .collect();

    let mut cache = Cache::for_params(params);
    let mut grads = params.zeros_like();
    let (loss, advantages) = sil_minibatch_loss(params, &samples, cfg, &mut cache, Some(&mut grads))?;
    opt.apply(params, &grads);
    for ((slot, _), adv) in picks.iter().zip(advantages) {
        buffer.update_priority(*slot, adv);
    }
    Ok(loss)
}

/// SIL buffer plus scheduler gating, as driven by the trainer. The
/// imitation loss runs on its own Adam state, like the ranked-replay
/// pipeline.
#[derive(Debug)]
pub struct SilPipeline {
    pub cfg: SilConfig,
    pub buffer: SilBuffer,
    pub gamma: f64,
    sil_opt: OptimizerState,
}

impl SilPipeline {
    pub fn new(cfg: SilConfig, gamma: f64, lr: f64, params: &PolicyParams) -> SilPipeline {
        SilPipeline {
            buffer: SilBuffer::new(&cfg),
            cfg,
            gamma,
            sil_opt: OptimizerState::new(lr, params),
        }
    }

    pub fn updates(&self) -> u64 {
        self.sil_opt.step
    }

    pub fn on_episode_end(
        &mut self,
        episode: &Episode,
        scheduler: &mut Scheduler,
        params: &mut PolicyParams,
        rng: &mut Rng64,
    ) -> Result<usize> {
        self.buffer.push_episode(episode, self.gamma);
        let granted = scheduler.offpolicy_updates(UpdateEvent::EpisodeEnd);
        self.run_updates(granted, params, rng)
    }

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
            sil_update(params, &mut self.sil_opt, &mut self.buffer, &self.cfg, rng)?;
        }
        Ok(granted as usize)
    }
}
