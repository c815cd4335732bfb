use serde::{Deserialize, Serialize};

/// Adam with bias correction followed by decoupled weight decay
/// `p *= 1 - lr * wd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    #[serde(skip)]
    pub m: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
}

impl AdamW {
    pub fn new(num_params: usize, lr: f64, betas: [f64; 2], eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: betas[0],
            beta2: betas[1],
            eps,
            weight_decay,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            params[i] *= decay;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut opt = AdamW::new(3, 2e-4, [0.9, 0.999], 1e-8, 0.0);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.update(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_gradient_decays_parameters() {
        let mut opt = AdamW::new(1, 2e-4, [0.9, 0.999], 1e-8, 1e-3);
        let mut p = vec![3.0];
        opt.update(&mut p, &[0.0]);
        assert_eq!(p[0], 3.0 * (1.0 - 2e-7));
    }

    #[test]
    fn first_step_is_minus_lr() {
        let mut opt = AdamW::new(1, 2e-4, [0.9, 0.999], 1e-8, 0.0);
        let mut p = vec![0.0];
        opt.update(&mut p, &[1.0]);
        // lr / (1 + eps) after bias correction
        assert!((p[0] + 2e-4 / (1.0 + 1e-8)).abs() < 1e-18);
    }
}
