use super::tape::{grad_norm, Grads, ParamStore};
use super::tensor::Mat;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros = || params.tensors().iter().map(|t| Mat::zeros(t.rows(), t.cols())).collect::<Vec<_>>();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let t = self.step as i32;
        let lr_t = self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        for (id, g) in grads.iter().enumerate() {
            // Untouched parameters still decay their moments like a dense update with g = 0.
            let m = self.m[id].data_mut();
            let v = self.v[id].data_mut();
            let p = params.get_mut(id).data_mut();
            match g {
                Some(g) => {
                    for i in 0..p.len() {
                        let gi = g.data()[i];
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                        p[i] -= lr_t * m[i] / (v[i].sqrt() + self.eps);
                    }
                }
                None => {
                    for i in 0..p.len() {
                        m[i] *= self.beta1;
                        v[i] *= self.beta2;
                        p[i] -= lr_t * m[i] / (v[i].sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// Plain stochastic gradient descent with optional global-norm clipping.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub max_grad_norm: Option<f64>,
}

impl Sgd {
    pub fn new(lr: f64, max_grad_norm: Option<f64>) -> Self {
        Self { lr, max_grad_norm }
    }

    pub fn step(&self, params: &mut ParamStore, grads: &Grads) {
        let mut scale = self.lr;
        if let Some(max) = self.max_grad_norm {
            let norm = grad_norm(grads);
            if norm > max {
                scale *= max / norm;
            }
        }
        for (id, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                for (p, gi) in params.get_mut(id).data_mut().iter_mut().zip(g.data()) {
                    *p -= scale * gi;
                }
            }
        }
    }
}
