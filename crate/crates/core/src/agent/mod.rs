//! Actor-critic function approximator with exact analytic gradients.
//!
//! Two independent fully connected networks (no shared parameters): the
//! actor maps the 147-value encoded observation through tanh hidden layers
//! of 64 units to 7 action logits, and the critic maps the same input
//! through its own hidden stack to a scalar value. Weights start orthogonal
//! (gain sqrt(2) on hidden layers, 0.01 on the actor head, 1.0 on the
//! critic head) so the initial policy is near-uniform.

pub mod adam;
pub mod checkpoint;
pub mod math;

pub use adam::OptimizerState;
pub use math::{entropy, log_sum_exp, softmax, Mat};

use crate::gridworld::{Color, DoorState, Object, Observation, OBS_LEN};
use crate::rng::Rng64;

/// Observation input width after encoding.
pub const INPUT_DIM: usize = OBS_LEN;
/// Hidden layer widths of both actor and critic.
pub const HIDDEN_DIMS: [usize; 2] = [64, 64];
/// Number of discrete actions.
pub const N_ACTIONS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Layer {
        Layer {
            w: Mat::zeros(rows, cols),
            b: vec![0.0; rows],
        }
    }

    fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng64) -> Layer {
        Layer {
            w: orthogonal_mat(rows, cols, gain, rng),
            b: vec![0.0; rows],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }
}

/// All learnable parameters. Actor and critic share nothing. Each stack is
/// a sequence of layers; hidden layers use tanh, the final layer of each
/// stack is linear (logits / value).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub input_dim: usize,
    pub n_actions: usize,
    pub actor: Vec<Layer>,
    pub critic: Vec<Layer>,
}

fn stack_dims(input_dim: usize, hidden: &[usize], out: usize) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for h in hidden {
        dims.push((*h, prev));
        prev = *h;
    }
    dims.push((out, prev));
    dims
}

impl PolicyParams {
    /// Standard-size network with orthogonal initialization.
    pub fn init(rng: &mut Rng64) -> PolicyParams {
        Self::init_with_dims(INPUT_DIM, &HIDDEN_DIMS, N_ACTIONS, rng)
    }

    pub fn init_with_dims(
        input_dim: usize,
        hidden: &[usize],
        n_actions: usize,
        rng: &mut Rng64,
    ) -> PolicyParams {
        let g = std::f64::consts::SQRT_2;
        let build = |head_gain: f64, out: usize, rng: &mut Rng64| -> Vec<Layer> {
            let dims = stack_dims(input_dim, hidden, out);
            let n = dims.len();
            dims.into_iter()
                .enumerate()
                .map(|(i, (rows, cols))| {
                    let gain = if i + 1 == n { head_gain } else { g };
                    Layer::orthogonal(rows, cols, gain, rng)
                })
                .collect()
        };
        PolicyParams {
            input_dim,
            n_actions,
            actor: build(0.01, n_actions, rng),
            critic: build(1.0, 1, rng),
        }
    }

    /// Same shapes, all zeros; used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> PolicyParams {
        let zero_stack = |stack: &[Layer]| {
            stack
                .iter()
                .map(|l| Layer::zeros(l.w.rows, l.w.cols))
                .collect()
        };
        PolicyParams {
            input_dim: self.input_dim,
            n_actions: self.n_actions,
            actor: zero_stack(&self.actor),
            critic: zero_stack(&self.critic),
        }
    }

    /// The parameter tensors in canonical order (actor stack then critic
    /// stack, weights before biases per layer).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * (self.actor.len() + self.critic.len()));
        for layer in self.actor.iter().chain(&self.critic) {
            out.push(layer.w.data.as_slice());
            out.push(layer.b.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::with_capacity(2 * (self.actor.len() + self.critic.len()));
        for layer in self.actor.iter_mut().chain(self.critic.iter_mut()) {
            out.push(&mut layer.w.data);
            out.push(&mut layer.b);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn n_tensors(&self) -> usize {
        2 * (self.actor.len() + self.critic.len())
    }

    pub fn set_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// Zero out the critic stack only (value output becomes exactly 0).
    pub fn zero_critic(&mut self) {
        for layer in self.critic.iter_mut() {
            layer.w.data.fill(0.0);
            layer.b.fill(0.0);
        }
    }

    /// Hidden layer widths (actor stack; the critic mirrors them).
    pub fn hidden_dims(&self) -> Vec<usize> {
        self.actor[..self.actor.len() - 1]
            .iter()
            .map(|l| l.out_dim())
            .collect()
    }
}

/// Forward activations cached for the backward pass, plus backward scratch.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Post-tanh activations of the actor's hidden layers.
    actor_hidden: Vec<Vec<f64>>,
    /// Post-tanh activations of the critic's hidden layers.
    critic_hidden: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub value: f64,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
}

impl Cache {
    pub fn for_params(params: &PolicyParams) -> Cache {
        let hidden: Vec<Vec<f64>> = params.actor[..params.actor.len() - 1]
            .iter()
            .map(|l| vec![0.0; l.out_dim()])
            .collect();
        let max_width = params
            .actor
            .iter()
            .chain(&params.critic)
            .map(|l| l.out_dim().max(l.w.cols))
            .max()
            .unwrap_or(1);
        Cache {
            actor_hidden: hidden.clone(),
            critic_hidden: params.critic[..params.critic.len() - 1]
                .iter()
                .map(|l| vec![0.0; l.out_dim()])
                .collect(),
            logits: vec![0.0; params.n_actions],
            value: 0.0,
            scratch_a: vec![0.0; max_width],
            scratch_b: vec![0.0; max_width],
        }
    }
}

fn forward_stack(stack: &[Layer], x: &[f64], hidden: &mut [Vec<f64>], out: &mut [f64]) {
    let mut input = x;
    for (layer, act) in stack[..stack.len() - 1].iter().zip(hidden.iter_mut()) {
        layer.w.matvec(input, &layer.b, act);
        for v in act.iter_mut() {
            *v = v.tanh();
        }
        input = act;
    }
    let head = stack.last().expect("stack nonempty");
    head.w.matvec(input, &head.b, out);
}

/// Forward pass, writing activations into `cache`.
pub fn forward(params: &PolicyParams, x: &[f64], cache: &mut Cache) {
    debug_assert_eq!(x.len(), params.input_dim);
    forward_stack(&params.actor, x, &mut cache.actor_hidden, &mut cache.logits);
    let mut v = [0.0];
    forward_stack(&params.critic, x, &mut cache.critic_hidden, &mut v);
    cache.value = v[0];
}

/// Allocating convenience wrapper around [`forward`].
pub fn forward_simple(params: &PolicyParams, x: &[f64]) -> (Vec<f64>, f64) {
    let mut cache = Cache::for_params(params);
    forward(params, x, &mut cache);
    (cache.logits.clone(), cache.value)
}

fn backward_stack(
    stack: &[Layer],
    grads: &mut [Layer],
    x: &[f64],
    hidden: &[Vec<f64>],
    head_seed: &[f64],
    scratch_a: &mut [f64],
    scratch_b: &mut [f64],
) {
    // Head layer.
    let last = stack.len() - 1;
    let head_in: &[f64] = if last == 0 { x } else { &hidden[last - 1] };
    for (r, s) in head_seed.iter().enumerate() {
        if *s != 0.0 {
            math::axpy(grads[last].w.row_mut(r), *s, head_in);
            grads[last].b[r] += s;
        }
    }
    if last == 0 {
        return;
    }
    // Seed flowing into the deepest hidden activation.
    let mut width = stack[last].w.cols;
    stack[last]
        .w
        .matvec_transposed(head_seed, &mut scratch_a[..width]);

    for i in (0..last).rev() {
        // Through tanh.
        for (dz, h) in scratch_a[..width].iter_mut().zip(&hidden[i]) {
            *dz *= 1.0 - h * h;
        }
        let input: &[f64] = if i == 0 { x } else { &hidden[i - 1] };
        for r in 0..width {
            let s = scratch_a[r];
            if s != 0.0 {
                math::axpy(grads[i].w.row_mut(r), s, input);
                grads[i].b[r] += s;
            }
        }
        if i > 0 {
            let next_width = stack[i].w.cols;
            stack[i]
                .w
                .matvec_transposed(&scratch_a[..width], &mut scratch_b[..next_width]);
            scratch_a[..next_width].copy_from_slice(&scratch_b[..next_width]);
            width = next_width;
        }
    }
}

/// Exact analytic gradients of a scalar loss with seeds `d_logits` and
/// `d_value`, accumulated into `grads`. `cache` must hold the activations
/// of `forward(params, x, ..)`.
pub fn backward(
    params: &PolicyParams,
    x: &[f64],
    cache: &mut Cache,
    d_logits: &[f64],
    d_value: f64,
    grads: &mut PolicyParams,
) {
    debug_assert_eq!(d_logits.len(), params.n_actions);
    if d_logits.iter().any(|d| *d != 0.0) {
        backward_stack(
            &params.actor,
            &mut grads.actor,
            x,
            &cache.actor_hidden,
            d_logits,
            &mut cache.scratch_a,
            &mut cache.scratch_b,
        );
    }
    if d_value != 0.0 {
        backward_stack(
            &params.critic,
            &mut grads.critic,
            x,
            &cache.critic_hidden,
            &[d_value],
            &mut cache.scratch_a,
            &mut cache.scratch_b,
        );
    }
}

/// Sample an action from the softmax policy; returns (action, log-prob).
pub fn sample_action(logits: &[f64], rng: &mut Rng64) -> (usize, f64) {
    let probs = softmax(logits);
    let u = rng.f64();
    let mut cum = 0.0;
    let mut action = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            action = i;
            break;
        }
    }
    (action, log_prob(logits, action))
}

/// Greedy argmax action (ties break toward the lowest index).
pub fn greedy_action(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, l) in logits.iter().enumerate() {
        if *l > logits[best] {
            best = i;
        }
    }
    best
}

/// log pi(action | logits)
pub fn log_prob(logits: &[f64], action: usize) -> f64 {
    logits[action] - log_sum_exp(logits)
}

/// Flatten an observation and scale each channel into [0, 1] by its maximum
/// code (object 10, color 5, door state 2).
pub fn encode_input(obs: &Observation) -> Vec<f64> {
    let mut out = vec![0.0; INPUT_DIM];
    encode_input_into(obs, &mut out);
    out
}

pub fn encode_input_into(obs: &Observation, out: &mut [f64]) {
    debug_assert_eq!(out.len(), INPUT_DIM);
    let scale = [
        1.0 / Object::MAX_CODE as f64,
        1.0 / Color::MAX_CODE as f64,
        1.0 / DoorState::MAX_CODE as f64,
    ];
    let mut i = 0;
    for row in &obs.tiles {
        for tile in row {
            out[i] = tile[0] as f64 * scale[0];
            out[i + 1] = tile[1] as f64 * scale[1];
            out[i + 2] = tile[2] as f64 * scale[2];
            i += 3;
        }
    }
}

/// Orthogonal rows (or columns when rows > cols) scaled by `gain`.
fn orthogonal_mat(rows: usize, cols: usize, gain: f64, rng: &mut Rng64) -> Mat {
    let small = rows.min(cols);
    let big = rows.max(cols);
    // Modified Gram-Schmidt on `small` Gaussian vectors in R^big.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(small);
    while basis.len() < small {
        let mut v: Vec<f64> = (0..big).map(|_| rng.normal()).collect();
        for u in &basis {
            let proj = math::dot(&v, u);
            math::axpy(&mut v, -proj, u);
        }
        let norm = math::dot(&v, &v).sqrt();
        if norm < 1e-8 {
            continue; // degenerate draw, resample
        }
        for x in &mut v {
            *x /= norm;
        }
        basis.push(v);
    }
    let mut m = Mat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let val = if rows <= cols {
                basis[r][c]
            } else {
                basis[c][r]
            };
            m.data[r * cols + c] = gain * val;
        }
    }
    m
}

#[cfg(test)]
mod tests;
