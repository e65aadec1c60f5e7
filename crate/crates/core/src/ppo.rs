//! On-policy rollout collection and PPO optimization with GAE.
//!
//! The collector steps one environment for exactly `T` frames per cycle,
//! auto-resetting finished episodes with fresh level seeds, recording
//! combined (extrinsic + weighted intrinsic) rewards, and emitting every
//! completed episode to the self-imitation pipeline. The update runs the
//! clipped surrogate with entropy and value terms for `epochs x
//! num_minibatches` Adam steps.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::agent::{self, Cache, OptimizerState, PolicyParams};
use crate::gridworld::{generate, EnvSpec, GridState, KeyMode};
use crate::hashing::fnv128;
use crate::intrinsic::{combine, intrinsic_reward, CountTable, EpisodeVisitSet, Strategy};
use crate::rng::Rng64;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Rollout size T (frames per on-policy update).
    pub rollout_len: usize,
    pub epochs: usize,
    pub num_minibatches: usize,
    pub clip: f64,
    pub lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Normalize advantages to zero mean / unit variance per update.
    pub normalize_advantages: bool,
    /// Optional clipped value loss (off by default).
    pub clip_value_loss: bool,
    /// Optional global gradient-norm clip (off by default).
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            rollout_len: 128,
            epochs: 4,
            num_minibatches: 4,
            clip: 0.2,
            lr: 1e-4,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            normalize_advantages: true,
            clip_value_loss: false,
            max_grad_norm: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rollout_len == 0 || self.epochs == 0 || self.num_minibatches == 0 {
            return Err(Error::Config("ppo sizes must be positive".into()));
        }
        if self.rollout_len % self.num_minibatches != 0 {
            return Err(Error::Config(format!(
                "rollout_len {} must divide evenly into {} minibatches",
                self.rollout_len, self.num_minibatches
            )));
        }
        if !(0.0..1.0).contains(&self.clip) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("clip must be in (0,1), gamma in [0,1]".into()));
        }
        Ok(())
    }

    pub fn minibatch_size(&self) -> usize {
        self.rollout_len / self.num_minibatches
    }
}

/// One collected environment transition.
#[derive(Debug, Clone)]
pub struct RolloutStep {
    pub input: Rc<[f64]>,
    pub action: u8,
    pub logprob: f64,
    pub value: f64,
    pub r_ext: f64,
    pub r_int: f64,
    /// Combined reward r_ext + beta * r_int, fed to GAE.
    pub reward: f64,
    pub done: bool,
}

/// Exactly T steps plus the bootstrap value for the state after the last.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub steps: Vec<RolloutStep>,
    pub bootstrap_value: f64,
}

/// One step of a completed episode, as consumed by the imitation pipelines.
#[derive(Debug, Clone)]
pub struct EpisodeStep {
    pub input: Rc<[f64]>,
    pub action: u8,
    pub r_ext: f64,
    pub r_int: f64,
    /// Canonical key fingerprint of the state the action was taken in.
    pub key_hash: u128,
    /// Agent position and heading in that state, for the position-level
    /// diversity score.
    pub pos: (i32, i32),
    pub dir: u8,
}

/// A completed (observation, action, reward) trajectory.
#[derive(Debug, Clone, Default)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
    pub level_seed: u64,
    /// Global frame index at the first step of the episode.
    pub start_frame: u64,
    pub succeeded: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted extrinsic return.
    pub fn return_ext(&self) -> f64 {
        self.steps.iter().map(|s| s.r_ext).sum()
    }
}

/// Level-seed sampling mode for episode resets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LevelSampler {
    /// Fresh 64-bit seed per episode.
    #[default]
    Unbounded,
    /// Uniform draw from a fixed seed set.
    Fixed(Vec<u64>),
}

impl LevelSampler {
    pub fn draw(&self, rng: &mut Rng64) -> u64 {
        match self {
            LevelSampler::Unbounded => rng.next_u64(),
            LevelSampler::Fixed(seeds) => *rng.choose(seeds),
        }
    }
}

/// Steps one environment instance through rollouts, owning the episode
/// bookkeeping shared by the intrinsic rewards and the imitation pipelines.
pub struct Collector {
    pub spec: EnvSpec,
    pub sampler: LevelSampler,
    pub strategy: Strategy,
    pub beta: f64,
    pub key_mode: KeyMode,
    state: GridState,
    episode: Episode,
    visits: EpisodeVisitSet,
    prev_key_hash: u128,
    frames: u64,
    episodes_completed: u64,
    key_buf: Vec<u8>,
    cache: Cache,
}

impl Collector {
    pub fn new(
        spec: EnvSpec,
        sampler: LevelSampler,
        strategy: Strategy,
        beta: f64,
        key_mode: KeyMode,
        params: &PolicyParams,
        counts: &mut CountTable,
        rng: &mut Rng64,
    ) -> Result<Collector> {
        let seed = sampler.draw(rng);
        let state = generate(&spec, seed)?;
        let mut c = Collector {
            spec,
            sampler,
            strategy,
            beta,
            key_mode,
            state,
            episode: Episode {
                level_seed: seed,
                ..Episode::default()
            },
            visits: EpisodeVisitSet::new(),
            prev_key_hash: 0,
            frames: 0,
            episodes_completed: 0,
            key_buf: Vec::new(),
            cache: Cache::for_params(params),
        };
        c.register_reset_state(counts);
        Ok(c)
    }

    /// Frames collected so far.
    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn episodes_completed(&self) -> u64 {
        self.episodes_completed
    }

    fn key_hash(&mut self) -> u128 {
        let mut buf = std::mem::take(&mut self.key_buf);
        self.state.state_key_into(self.key_mode, &mut buf);
        let h = fnv128(&buf);
        self.key_buf = buf;
        h
    }

    /// Record the freshly reset state in the count table and visit set.
    fn register_reset_state(&mut self, counts: &mut CountTable) {
        self.visits.clear();
        let h = self.key_hash();
        counts.record_visit_hash(h);
        self.visits.insert(h);
        self.prev_key_hash = h;
    }

    fn reset(&mut self, counts: &mut CountTable, rng: &mut Rng64) -> Result<()> {
        let seed = self.sampler.draw(rng);
        self.state = generate(&self.spec, seed)?;
        self.episode = Episode {
            level_seed: seed,
            start_frame: self.frames,
            ..Episode::default()
        };
        self.register_reset_state(counts);
        Ok(())
    }

    /// Take exactly `t` environment steps, auto-resetting on episode end.
    /// Returns the rollout and every episode completed during it.
    pub fn collect(
        &mut self,
        params: &PolicyParams,
        counts: &mut CountTable,
        t: usize,
        rng: &mut Rng64,
    ) -> Result<(RolloutBuffer, Vec<Episode>)> {
        let mut steps = Vec::with_capacity(t);
        let mut completed = Vec::new();
        for _ in 0..t {
            let obs = self.state.observe();
            let input: Rc<[f64]> = agent::encode_input(&obs).into();
            let pos = self.state.agent_pos;
            let dir = self.state.agent_dir as u8;
            agent::forward(params, &input, &mut self.cache);
            let value = self.cache.value;
            let (action, logprob) = agent::sample_action(&self.cache.logits, rng);
            let outcome = self
                .state
                .step(crate::gridworld::Action::from_index(action)?)?;

            let next_hash = self.key_hash();
            counts.record_visit_hash(next_hash);
            let r_int = intrinsic_reward(
                self.strategy,
                counts,
                self.prev_key_hash,
                next_hash,
                &mut self.visits,
            )?;
            let reward = combine(outcome.reward, r_int, self.beta);

            self.episode.steps.push(EpisodeStep {
                input: input.clone(),
                action: action as u8,
                r_ext: outcome.reward,
                r_int,
                key_hash: self.prev_key_hash,
                pos,
                dir,
            });
            steps.push(RolloutStep {
                input,
                action: action as u8,
                logprob,
                value,
                r_ext: outcome.reward,
                r_int,
                reward,
                done: outcome.done,
            });
            self.frames += 1;
            self.prev_key_hash = next_hash;

            if outcome.done {
                self.episode.succeeded = self.state.succeeded;
                self.episodes_completed += 1;
                completed.push(std::mem::take(&mut self.episode));
                self.reset(counts, rng)?;
            }
        }

        let bootstrap_value = if steps.last().map(|s| s.done).unwrap_or(true) {
            0.0
        } else {
            let obs = self.state.observe();
            let input = agent::encode_input(&obs);
            agent::forward(params, &input, &mut self.cache);
            self.cache.value
        };
        Ok((
            RolloutBuffer {
                steps,
                bootstrap_value,
            },
            completed,
        ))
    }
}

/// Standard GAE recursion with episode-boundary masking.
///
/// `done` marks transitions that ended an episode: no value bootstraps
/// across them (time-limit truncation is treated as a true terminal).
/// Returns (advantages, returns) with `returns = advantages + values`.
pub fn compute_gae(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = buffer.steps.len();
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let step = &buffer.steps[t];
        let nonterminal = if step.done { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n {
            buffer.steps[t + 1].value
        } else {
            buffer.bootstrap_value
        };
        let delta = step.reward + gamma * next_value * nonterminal - step.value;
        acc = delta + gamma * lambda * nonterminal * acc;
        advantages[t] = acc;
        returns[t] = acc + step.value;
    }
    (advantages, returns)
}

/// Episodic discounted extrinsic and (beta-scaled) intrinsic returns,
/// exported for the exploration diagnostics.
pub fn discounted_returns_episode(episode: &Episode, gamma: f64, beta: f64) -> (f64, f64) {
    let mut g_ext = 0.0;
    let mut g_int = 0.0;
    let mut discount = 1.0;
    for step in &episode.steps {
        g_ext += discount * step.r_ext;
        g_int += discount * beta * step.r_int;
        discount *= gamma;
    }
    (g_ext, g_int)
}

/// Loss statistics of one update (means over all minibatches).
#[derive(Debug, Clone, Copy, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub optimizer_steps: usize,
}

/// Per-minibatch loss statistics.
#[derive(Debug, Clone, Copy)]
pub struct MinibatchStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
}

/// Clipped-surrogate loss over `indices` of the rollout, with optional
/// analytic gradient accumulation. Exposed separately so oracle tests can
/// evaluate the loss surface directly.
#[allow(clippy::too_many_arguments)]
pub fn ppo_minibatch_loss(
    params: &PolicyParams,
    buffer: &RolloutBuffer,
    indices: &[usize],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    cache: &mut Cache,
    mut grads: Option<&mut PolicyParams>,
) -> Result<MinibatchStats> {
    let b = indices.len() as f64;
    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    let mut entropy_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut d_logits = vec![0.0; params.n_actions];

    for &i in indices {
        let step = &buffer.steps[i];
        let adv = advantages[i];
        let ret = returns[i];
        agent::forward(params, &step.input, cache);
        let logits = cache.logits.clone();
        let v = cache.value;
        let probs = agent::softmax(&logits);
        let lp_new = agent::log_prob(&logits, step.action as usize);
        let ratio = (lp_new - step.logprob).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let surr1 = ratio * adv;
        let surr2 = clipped * adv;
        let surr = surr1.min(surr2);
        policy_loss += -surr;
        ratio_sum += ratio;

        let vl = if cfg.clip_value_loss {
            let v_old = step.value;
            let v_clip = v_old + (v - v_old).clamp(-cfg.clip, cfg.clip);
            0.5 * (v - ret).powi(2).max((v_clip - ret).powi(2))
        } else {
            0.5 * (v - ret).powi(2)
        };
        value_loss += vl;

        let h = agent::entropy(&probs);
        entropy_sum += h;

        if let Some(g) = grads.as_deref_mut() {
            // d(-surr)/d log pi: active only on the unclipped branch.
            let d_lp = if surr1 <= surr2 { -ratio * adv } else { 0.0 };
            for (k, dl) in d_logits.iter_mut().enumerate() {
                let onehot = if k == step.action as usize { 1.0 } else { 0.0 };
                let d_policy = d_lp * (onehot - probs[k]);
                // d(-coef * H)/d logit_k = coef * p_k (ln p_k + H)
                let d_entropy = cfg.entropy_coef * probs[k] * (probs[k].ln() + h);
                *dl = (d_policy + d_entropy) / b;
            }
            let d_v = if cfg.clip_value_loss {
                let v_old = step.value;
                let v_clip = v_old + (v - v_old).clamp(-cfg.clip, cfg.clip);
                if (v - ret).powi(2) >= (v_clip - ret).powi(2) {
                    v - ret
                } else if (v - v_old).abs() < cfg.clip {
                    v_clip - ret
                } else {
                    0.0
                }
            } else {
                v - ret
            };
            let d_value = cfg.value_coef * d_v / b;
            agent::backward(params, &step.input, cache, &d_logits, d_value, g);
        }
    }

    let stats = MinibatchStats {
        policy_loss: policy_loss / b,
        value_loss: value_loss / b,
        entropy: entropy_sum / b,
        mean_ratio: ratio_sum / b,
        loss: policy_loss / b + cfg.value_coef * value_loss / b
            - cfg.entropy_coef * entropy_sum / b,
    };
    if !stats.loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite ppo loss: policy {} value {} entropy {}",
            stats.policy_loss, stats.value_loss, stats.entropy
        )));
    }
    Ok(stats)
}

/// Full PPO update: GAE, per-update advantage normalization, then
/// `epochs x num_minibatches` clipped-surrogate Adam steps.
pub fn ppo_update(
    params: &mut PolicyParams,
    opt: &mut OptimizerState,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut Rng64,
) -> Result<PpoStats> {
    cfg.validate()?;
    let n = buffer.steps.len();
    let (mut advantages, returns) = compute_gae(buffer, cfg.gamma, cfg.lambda);
    if cfg.normalize_advantages {
        normalize(&mut advantages);
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mb_size = n / cfg.num_minibatches;
    let mut cache = Cache::for_params(params);
    let mut grads = params.zeros_like();
    let mut stats = PpoStats::default();

    for _epoch in 0..cfg.epochs {
        rng.shuffle(&mut indices);
        for mb in 0..cfg.num_minibatches {
            let slice = &indices[mb * mb_size..(mb + 1) * mb_size];
            grads.set_zero();
            let mb_stats = ppo_minibatch_loss(
                params,
                buffer,
                slice,
                &advantages,
                &returns,
                cfg,
                &mut cache,
                Some(&mut grads),
            )?;
            if let Some(max_norm) = cfg.max_grad_norm {
                clip_grad_norm(&mut grads, max_norm);
            }
            opt.apply(params, &grads);
            stats.policy_loss += mb_stats.policy_loss;
            stats.value_loss += mb_stats.value_loss;
            stats.entropy += mb_stats.entropy;
            stats.mean_ratio += mb_stats.mean_ratio;
            stats.optimizer_steps += 1;
        }
    }
    let k = stats.optimizer_steps as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.mean_ratio /= k;
    Ok(stats)
}

fn normalize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = (*x - mean) / (std + 1e-8);
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut PolicyParams, max_norm: f64) {
    let norm: f64 = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            for g in t.iter_mut() {
                *g *= scale;
            }
        }
    }
}
