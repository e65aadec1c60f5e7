//! Adam optimizer with per-parameter first/second moment accumulators.

use super::PolicyParams;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: PolicyParams,
    pub v: PolicyParams,
}

impl OptimizerState {
    pub fn new(lr: f64, params: &PolicyParams) -> OptimizerState {
        OptimizerState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One Adam update of `params` from `grads`.
    pub fn apply(&mut self, params: &mut PolicyParams, grads: &PolicyParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                let grad = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * grad;
                v[i] = b2 * v[i] + (1.0 - b2) * grad * grad;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;

    fn tiny_params() -> PolicyParams {
        let mut rng = Rng64::new(3);
        PolicyParams::init_with_dims(2, &[2], 2, &mut rng)
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = tiny_params();
        let before = params.clone();
        let grads = params.zeros_like();
        let mut opt = OptimizerState::new(1e-3, &params);
        opt.apply(&mut params, &grads);
        assert_eq!(params, before);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn single_step_decreases_quadratic() {
        // f(w) = w^2 on one coordinate; gradient 2w.
        let mut params = tiny_params();
        params.set_zero();
        params.actor[0].w.data[0] = 1.0;
        let mut grads = params.zeros_like();
        grads.actor[0].w.data[0] = 2.0;
        let mut opt = OptimizerState::new(0.1, &params);
        opt.apply(&mut params, &grads);
        let w = params.actor[0].w.data[0];
        assert!(w < 1.0 && w * w < 1.0, "w = {w}");
    }

    #[test]
    fn matches_hand_computed_step() {
        // One parameter w = 1, gradient 0.5, lr = 0.1, first step:
        //   m = 0.1 * 0.5, v = 0.001 * 0.25
        //   m_hat = 0.5, v_hat = 0.25
        //   w' = 1 - 0.1 * 0.5 / (0.5 + 1e-8)
        let mut params = tiny_params();
        params.set_zero();
        params.actor[1].b[1] = 1.0;
        let mut grads = params.zeros_like();
        grads.actor[1].b[1] = 0.5;
        let mut opt = OptimizerState::new(0.1, &params);
        opt.apply(&mut params, &grads);
        let expected = 1.0 - 0.1 * 0.5 / (0.25f64.sqrt() + 1e-8);
        assert!(
            (params.actor[1].b[1] - expected).abs() < 1e-15,
            "{} vs {expected}",
            params.actor[1].b[1]
        );
    }
}
