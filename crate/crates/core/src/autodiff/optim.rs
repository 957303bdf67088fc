use super::graph::GradBuffer;
use super::params::ParamStore;
use super::Tensor;

/// Adaptive-moment gradient descent.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
}

impl Adam {
    pub fn new(learning_rate: f64, store: &ParamStore) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: vec![None; store.len()],
            second: vec![None; store.len()],
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &GradBuffer) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.get(id).trainable() {
                continue;
            }
            let Some(g) = grads.get(id) else { continue };
            let [r, c] = g.shape();
            let m = self.first[id.index()].get_or_insert_with(|| Tensor::zeros(r, c));
            let v = self.second[id.index()].get_or_insert_with(|| Tensor::zeros(r, c));
            let value = store.value_mut(id);
            for k in 0..g.len() {
                let gk = g.data()[k];
                let mk = self.beta1 * m.data()[k] + (1.0 - self.beta1) * gk;
                let vk = self.beta2 * v.data()[k] + (1.0 - self.beta2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let update =
                    self.learning_rate * (mk / bias1) / ((vk / bias2).sqrt() + self.epsilon);
                value.data_mut()[k] -= update;
            }
        }
    }
}
