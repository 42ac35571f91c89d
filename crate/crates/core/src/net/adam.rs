use ndarray::Array2;

use super::params::{ModelDims, Params};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u32,
    first: Params,
    second: Params,
}

impl Adam {
    pub fn new(config: AdamConfig, dims: &ModelDims) -> Self {
        Self {
            config,
            step: 0,
            first: Params::zeros(dims),
            second: Params::zeros(dims),
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        let grads = grads.tensors();
        let first = self.first.tensors_mut();
        let second = self.second.tensors_mut();
        for (((_, p), (_, g)), ((_, m), (_, v))) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(first.into_iter().zip(second))
        {
            update(p, g, m, v, c, bias1, bias2);
        }
    }
}

fn update(
    p: &mut Array2<f64>,
    g: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    c: AdamConfig,
    bias1: f64,
    bias2: f64,
) {
    ndarray::Zip::from(p)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let dims = ModelDims::tiny(2);
        let mut p = Params::init(&dims, 1);
        let before = p.clone();
        let mut g = Params::init(&dims, 2);
        g.scale(3.0);
        let mut opt = Adam::new(AdamConfig { lr: 0.0, ..Default::default() }, &dims);
        for _ in 0..5 {
            opt.step(&mut p, &g);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let dims = ModelDims::tiny(2);
        let mut p = Params::zeros(&dims);
        let mut g = Params::zeros(&dims);
        g.fluency_b[[0, 3]] = 0.25;
        g.fluency_b[[0, 4]] = -40.0;
        let mut opt = Adam::new(AdamConfig::default(), &dims);
        opt.step(&mut p, &g);
        assert!((p.fluency_b[[0, 3]] + 1e-4).abs() < 1e-9);
        assert!((p.fluency_b[[0, 4]] - 1e-4).abs() < 1e-9);
        assert_eq!(p.fluency_b[[0, 5]], 0.0);
    }
}
