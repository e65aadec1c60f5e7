//! Shared fixtures and oracles for the acceptance suite.

use std::path::PathBuf;
use std::rc::Rc;

use gridlab::agent::PolicyParams;
use gridlab::intrinsic::CountTable;
use gridlab::ppo::{Episode, EpisodeStep, PpoConfig, RolloutBuffer, RolloutStep};
use gridlab::rapid::ScoredEpisode;
use gridlab::rng::Rng64;
use gridlab::sil::SilSample;

pub fn test_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gridlab_acc_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small random network plus a random input.
pub fn small_net(rng: &mut Rng64) -> (PolicyParams, Vec<f64>) {
    let input_dim = 5 + rng.below(6);
    let hidden: Vec<usize> = (0..1 + rng.below(2)).map(|_| 4 + rng.below(5)).collect();
    let actions = 7;
    let params = PolicyParams::init_with_dims(input_dim, &hidden, actions, rng);
    let x = (0..input_dim).map(|_| rng.f64() - 0.3).collect();
    (params, x)
}

/// Central finite differences over every `stride`-th coordinate; asserts
/// the relative error bound and returns the worst error seen.
pub fn fd_compare(
    params: &PolicyParams,
    grads: &PolicyParams,
    loss: impl Fn(&PolicyParams) -> f64,
    tol: f64,
    stride: usize,
) -> f64 {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for ti in 0..params.n_tensors() {
        for i in (0..params.tensors()[ti].len()).step_by(stride) {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += eps;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let an = grads.tensors()[ti][i];
            let err = (an - fd).abs() / f64::max(1.0, an.abs().max(fd.abs()));
            worst = worst.max(err);
            assert!(
                err < tol,
                "tensor {ti} idx {i}: analytic {an} vs fd {fd} (rel {err:.3e})"
            );
        }
    }
    worst
}

/// Synthetic PPO minibatch with importance ratios kept away from the clip
/// kink (|ratio - (1 +- clip)| bounded below) so central differences are
/// well defined.
pub fn ppo_fixture(
    params: &PolicyParams,
    cfg: &PpoConfig,
    rng: &mut Rng64,
) -> (RolloutBuffer, Vec<f64>, Vec<f64>) {
    let n = 6;
    let lo = (1.0 - cfg.clip).ln();
    let hi = (1.0 + cfg.clip).ln();
    let mut steps = Vec::with_capacity(n);
    let mut adv = Vec::new();
    let mut ret = Vec::new();
    for _ in 0..n {
        let input: Rc<[f64]> = (0..params.input_dim)
            .map(|_| rng.f64() - 0.3)
            .collect::<Vec<f64>>()
            .into();
        let action = rng.below(params.n_actions) as u8;
        let (logits, _) = gridlab::agent::forward_simple(params, &input);
        let lp_new = gridlab::agent::log_prob(&logits, action as usize);
        // ratio = exp(lp_new - logprob_old); keep the offset off the kinks.
        let offset = loop {
            let d = rng.normal() * 0.3;
            if (d - lo).abs() > 5e-3 && (d - hi).abs() > 5e-3 {
                break d;
            }
        };
        steps.push(RolloutStep {
            input,
            action,
            logprob: lp_new - offset,
            value: rng.normal(),
            r_ext: 0.0,
            r_int: 0.0,
            reward: 0.0,
            done: false,
        });
        adv.push(rng.normal());
        ret.push(rng.normal());
    }
    (
        RolloutBuffer {
            steps,
            bootstrap_value: 0.0,
        },
        adv,
        ret,
    )
}

/// Random SIL samples with clipped advantages kept away from the kink.
pub fn sil_fixture(params: &PolicyParams, rng: &mut Rng64) -> Vec<SilSample> {
    let mut samples = Vec::new();
    let mut cache = gridlab::agent::Cache::for_params(params);
    while samples.len() < 4 {
        let input: Rc<[f64]> = (0..params.input_dim)
            .map(|_| rng.f64() - 0.3)
            .collect::<Vec<f64>>()
            .into();
        gridlab::agent::forward(params, &input, &mut cache);
        let ret = cache.value + rng.normal();
        if (ret - cache.value).abs() < 1e-3 {
            continue; // too close to the (R - V)+ kink
        }
        samples.push(SilSample {
            input,
            action: (samples.len() % params.n_actions) as u8,
            ret,
            weight: 0.25 + rng.f64(),
        });
    }
    samples
}

/// A scored episode with `steps` experiences of uniform `score`.
pub fn scored_episode(score: f64, steps: usize, seed: u64) -> ScoredEpisode {
    ScoredEpisode {
        steps: (0..steps).map(|i| (vec![0.0; 2].into(), (i % 7) as u8)).collect(),
        s_ext: score,
        s_local: 0.0,
        s_global: 0.0,
        score,
        level_seed: seed,
        created_at: 0,
    }
}

/// Build an episode from (key, extrinsic reward, action) triples plus a
/// count table holding a random number of visits per key.
pub fn episode_with_counts(
    steps: &[(&str, f64, u8)],
    seed: u64,
    rng: &mut Rng64,
) -> (Episode, CountTable) {
    let episode = Episode {
        steps: steps
            .iter()
            .map(|(key, r_ext, action)| EpisodeStep {
                input: vec![0.0; 4].into(),
                action: *action,
                r_ext: *r_ext,
                r_int: 0.0,
                key_hash: gridlab::hashing::fnv128(key.as_bytes()),
                pos: (0, 0),
                dir: 0,
            })
            .collect(),
        level_seed: seed,
        start_frame: 0,
        succeeded: false,
    };
    let mut counts = CountTable::new();
    for s in &episode.steps {
        for _ in 0..1 + rng.below(6) {
            counts.record_visit_hash(s.key_hash);
        }
    }
    (episode, counts)
}
