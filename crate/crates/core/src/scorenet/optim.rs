use serde::{Deserialize, Serialize};

use super::{Grads, ScoreNet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p -= lr · wd · p`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with decoupled weight decay over the six parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut ScoreNet, grads: &Grads) {
        self.t += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        let params = net
            .w1
            .iter_mut()
            .chain(net.b1.iter_mut())
            .chain(net.w2.iter_mut())
            .chain(net.b2.iter_mut())
            .chain(net.w3.iter_mut())
            .chain(net.b3.iter_mut());
        let grads = grads
            .w1
            .iter()
            .chain(grads.b1.iter())
            .chain(grads.w2.iter())
            .chain(grads.b2.iter())
            .chain(grads.w3.iter())
            .chain(grads.b3.iter());
        for (((p, g), m), v) in params.zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let update = (*m / bias1) / ((*v / bias2).sqrt() + c.eps);
            *p -= c.lr * (update + c.weight_decay * *p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorenet::SigmaConditioning;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut net = ScoreNet::random(2, 2, SigmaConditioning::from_range(0.1, 0.2), 0);
        let before = net.params();
        let mut grads = net.zero_grads();
        grads.b3[0] = 3.0;
        grads.b3[1] = -0.5;
        let mut opt = Adam::new(AdamConfig::default(), net.n_params());
        opt.step(&mut net, &grads);
        assert!((net.b3[0] - (before[before.len() - 2] - 1e-3)).abs() < 1e-9);
        assert!((net.b3[1] - (before[before.len() - 1] + 1e-3)).abs() < 1e-9);
        // Zero gradients leave other parameters in place.
        assert_eq!(net.w1.as_slice().unwrap(), &before[..net.w1.len()]);
    }
}
