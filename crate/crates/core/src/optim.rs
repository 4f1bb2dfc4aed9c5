//! Adam over a [`ParamStore`].

use crate::params::ParamStore;
use crate::tape::Gradients;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update moving against `grads` (minimization). Parameters without
    /// a gradient see a zero gradient, so their moments still decay.
    pub fn descend(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.update(store, grads, 1.0);
    }

    /// One update moving along `grads` (maximization).
    pub fn ascend(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.update(store, grads, -1.0);
    }

    fn update(&mut self, store: &mut ParamStore, grads: &Gradients, sign: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads.get(id);
            if g.is_none() && self.m[i].iter().all(|&x| x == 0.0) && self.v[i].iter().all(|&x| x == 0.0) {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = store.get_mut(id).data_mut();
            for k in 0..data.len() {
                let gk = sign * g.map_or(0.0, |g| g[k]);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                data[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}
