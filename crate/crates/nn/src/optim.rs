use crate::params::{Grads, ParamStore};

/// Stochastic gradient descent with optional heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Option<Vec<f32>>>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Applies one update. Parameters without a gradient are left untouched,
    /// including their momentum state.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f32) {
        if self.velocity.len() != params.len() {
            self.velocity = vec![None; params.len()];
        }
        for id in params.ids().collect::<Vec<_>>() {
            let Some(g) = grads.get(id) else { continue };
            let p = params.get_mut(id).data_mut();
            if self.momentum == 0.0 {
                for (w, &d) in p.iter_mut().zip(g) {
                    *w -= lr * (d + self.weight_decay * *w);
                }
                continue;
            }
            let v = self.velocity[id.index()].get_or_insert_with(|| vec![0.0; g.len()]);
            for ((w, &d), vel) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vel = self.momentum * *vel + d + self.weight_decay * *w;
                *w -= lr * *vel;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    state: Vec<Option<(Vec<f32>, Vec<f32>, i32)>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: Vec::new(),
        }
    }
}

impl Adam {
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f32) {
        if self.state.len() != params.len() {
            self.state = vec![None; params.len()];
        }
        for id in params.ids().collect::<Vec<_>>() {
            let Some(g) = grads.get(id) else { continue };
            let (m, v, t) = self.state[id.index()]
                .get_or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()], 0));
            *t += 1;
            let c1 = 1.0 - self.beta1.powi(*t);
            let c2 = 1.0 - self.beta2.powi(*t);
            let p = params.get_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}
