use super::*;
use crate::gridworld::Observation;
use crate::rng::Rng64;

fn random_input(dim: usize, rng: &mut Rng64) -> Vec<f64> {
    (0..dim).map(|_| rng.f64()).collect()
}

/// Straight-line reimplementation of the forward pass with plain index
/// loops, independent of the Mat kernels.
fn naive_forward(p: &PolicyParams, x: &[f64]) -> (Vec<f64>, f64) {
    let lin = |w: &Mat, b: &[f64], input: &[f64]| -> Vec<f64> {
        (0..w.rows)
            .map(|r| {
                let mut s = b[r];
                for c in 0..w.cols {
                    s += w.data[r * w.cols + c] * input[c];
                }
                s
            })
            .collect()
    };
    let run = |stack: &[Layer]| -> Vec<f64> {
        let mut cur = x.to_vec();
        for (i, layer) in stack.iter().enumerate() {
            cur = lin(&layer.w, &layer.b, &cur);
            if i + 1 < stack.len() {
                for v in cur.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
        cur
    };
    (run(&p.actor), run(&p.critic)[0])
}

#[test]
fn forward_matches_straight_line_oracle() {
    let mut rng = Rng64::new(17);
    for hidden in [vec![6usize], vec![6, 5], vec![8, 6, 4]] {
        for _ in 0..10 {
            let p = PolicyParams::init_with_dims(9, &hidden, 5, &mut rng);
            let x = random_input(9, &mut rng);
            let (logits, value) = forward_simple(&p, &x);
            let (nl, nv) = naive_forward(&p, &x);
            for (a, b) in logits.iter().zip(&nl) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((value - nv).abs() < 1e-12);
            assert!(logits.iter().all(|l| l.is_finite()) && value.is_finite());
        }
    }
}

#[test]
fn zero_params_give_uniform_policy() {
    let mut rng = Rng64::new(1);
    let mut p = PolicyParams::init_with_dims(9, &[6, 6], 5, &mut rng);
    p.set_zero();
    let (logits, value) = forward_simple(&p, &random_input(9, &mut rng));
    assert!(logits.iter().all(|l| *l == 0.0));
    assert_eq!(value, 0.0);
    let probs = softmax(&logits);
    for pr in probs {
        assert!((pr - 0.2).abs() < 1e-12);
    }
}

#[test]
fn sample_action_concentrates_on_huge_logit() {
    let mut rng = Rng64::new(2);
    let logits = [0.0, 1e6, 0.0, 0.0, 0.0, 0.0, 0.0];
    for _ in 0..100 {
        let (a, lp) = sample_action(&logits, &mut rng);
        assert_eq!(a, 1);
        assert!(lp.abs() < 1e-9, "log prob of certain action ~ 0");
    }
}

#[test]
fn sample_action_frequencies_match_softmax_within_3_sigma() {
    let mut rng = Rng64::new(3);
    let logits = [0.4, -0.3, 1.2, 0.0, -1.0, 0.7, 0.1];
    let probs = softmax(&logits);
    let n = 1_000_000usize;
    let mut counts = [0usize; 7];
    for _ in 0..n {
        let (a, lp) = sample_action(&logits, &mut rng);
        counts[a] += 1;
        assert!((lp - probs[a].ln()).abs() < 1e-12);
    }
    for (i, p) in probs.iter().enumerate() {
        let expected = p * n as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let diff = (counts[i] as f64 - expected).abs();
        assert!(diff < 3.0 * sigma, "action {i}: off by {diff} > 3x{sigma}");
    }
}

#[test]
fn log_prob_is_log_softmax_component() {
    let logits = [0.3, -0.7, 2.0, 0.1, 0.0, -1.3, 0.9];
    let probs = softmax(&logits);
    for a in 0..7 {
        assert!((log_prob(&logits, a) - probs[a].ln()).abs() < 1e-12);
    }
}

fn fd_check(
    p: &PolicyParams,
    x: &[f64],
    d_logits: &[f64],
    d_value: f64,
    tol: f64,
) -> (f64, usize) {
    let loss = |p: &PolicyParams| -> f64 {
        let (logits, value) = forward_simple(p, x);
        logits.iter().zip(d_logits).map(|(l, c)| l * c).sum::<f64>() + value * d_value
    };
    let mut cache = Cache::for_params(p);
    forward(p, x, &mut cache);
    let mut grads = p.zeros_like();
    backward(p, x, &mut cache, d_logits, d_value, &mut grads);

    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for ti in 0..p.n_tensors() {
        for i in 0..p.tensors()[ti].len() {
            let mut plus = p.clone();
            plus.tensors_mut()[ti][i] += eps;
            let mut minus = p.clone();
            minus.tensors_mut()[ti][i] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let an = grads.tensors()[ti][i];
            let err = (an - fd).abs() / f64::max(1.0, an.abs().max(fd.abs()));
            worst = worst.max(err);
            assert!(err < tol, "tensor {ti} idx {i}: analytic {an} vs fd {fd}");
            checked += 1;
        }
    }
    (worst, checked)
}

#[test]
fn backward_matches_central_finite_differences() {
    let mut rng = Rng64::new(11);
    for hidden in [vec![5usize], vec![5, 4], vec![4, 4, 3]] {
        for _ in 0..3 {
            let p = PolicyParams::init_with_dims(6, &hidden, 4, &mut rng);
            let x = random_input(6, &mut rng);
            let d_logits: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let d_value = rng.normal();
            let (worst, checked) = fd_check(&p, &x, &d_logits, d_value, 1e-6);
            assert!(checked > 0);
            assert!(worst < 1e-6, "worst relative error {worst}");
        }
    }
}

#[test]
fn zero_seed_gives_zero_gradients_and_linearity_holds() {
    let mut rng = Rng64::new(12);
    let p = PolicyParams::init_with_dims(6, &[5, 5], 4, &mut rng);
    let x = random_input(6, &mut rng);
    let mut cache = Cache::for_params(&p);
    forward(&p, &x, &mut cache);

    let mut grads = p.zeros_like();
    backward(&p, &x, &mut cache, &[0.0; 4], 0.0, &mut grads);
    for t in grads.tensors() {
        assert!(t.iter().all(|g| *g == 0.0));
    }

    let d: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
    let dv = rng.normal();
    let mut g1 = p.zeros_like();
    backward(&p, &x, &mut cache, &d, dv, &mut g1);
    let d2: Vec<f64> = d.iter().map(|v| 2.0 * v).collect();
    let mut g2 = p.zeros_like();
    backward(&p, &x, &mut cache, &d2, 2.0 * dv, &mut g2);
    for (t1, t2) in g1.tensors().iter().zip(g2.tensors().iter()) {
        for (a, b) in t1.iter().zip(t2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn encode_input_examples() {
    // All-unseen observation: fixed all-zero vector.
    let obs = Observation {
        tiles: [[[0u8; 3]; 7]; 7],
    };
    let x = encode_input(&obs);
    assert!(x.iter().all(|v| *v == 0.0));
    assert_eq!(x.len(), INPUT_DIM);

    // Equal observations encode equally; max codes scale to exactly 1.0.
    let mut tiles = [[[1u8, 0, 0]; 7]; 7];
    tiles[2][4] = [10, 5, 2];
    let a = Observation { tiles };
    let b = Observation { tiles };
    assert_eq!(encode_input(&a), encode_input(&b));
    let x = encode_input(&a);
    let base = (2 * 7 + 4) * 3;
    assert_eq!(&x[base..base + 3], &[1.0, 1.0, 1.0]);
}

#[test]
fn orthogonal_init_has_orthonormal_rows_scaled_by_gain() {
    let mut rng = Rng64::new(21);
    let p = PolicyParams::init(&mut rng);
    let w = &p.actor[0].w; // 64 x 147, gain sqrt(2)
    for r in 0..w.rows {
        let self_dot = math::dot(w.row(r), w.row(r));
        assert!((self_dot - 2.0).abs() < 1e-9, "row {r} norm^2 {self_dot}");
        for r2 in (r + 1)..w.rows.min(r + 5) {
            let cross = math::dot(w.row(r), w.row(r2));
            assert!(cross.abs() < 1e-9, "rows {r},{r2} not orthogonal: {cross}");
        }
    }
    // Critic head: gain 1.0 on a 1 x 64 row.
    let head = p.critic.last().unwrap();
    let norm = math::dot(head.w.row(0), head.w.row(0));
    assert!((norm - 1.0).abs() < 1e-9);
    // Default architecture: two hidden layers of 64 per stack.
    assert_eq!(p.hidden_dims(), vec![64, 64]);
    assert_eq!(p.actor.len(), 3);
}

#[test]
fn init_is_deterministic_per_stream() {
    let a = PolicyParams::init(&mut Rng64::new(7));
    let b = PolicyParams::init(&mut Rng64::new(7));
    assert_eq!(a, b);
    let c = PolicyParams::init(&mut Rng64::new(8));
    assert_ne!(a, c);
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let dir = std::env::temp_dir().join(format!("gridlab_ckpt_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("test.ckpt");

    let mut rng = Rng64::new(33);
    let mut params = PolicyParams::init(&mut rng);
    let mut opt = OptimizerState::new(1e-4, &params);
    // Touch the optimizer so moments are nonzero.
    let mut grads = params.zeros_like();
    grads.actor[0].w.data[5] = 0.25;
    grads.critic.last_mut().unwrap().b[0] = -1.5;
    opt.apply(&mut params, &grads);

    let ck = checkpoint::Checkpoint {
        params,
        opt,
        rng_state: rng.state(),
    };
    checkpoint::save(&path, &ck).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    std::fs::remove_dir_all(&dir).ok();
}
