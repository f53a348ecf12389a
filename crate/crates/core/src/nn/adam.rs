use super::{Gradients, ParamStore};

/// Adam with bias correction. Parameters without a gradient in a step are
/// updated as if their gradient were zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads.get(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            if g.is_none() && m.iter().all(|&x| x == 0.0) {
                continue;
            }
            let p = store.value_mut(id).data_mut();
            for k in 0..p.len() {
                let gk = g.map_or(0.0, |g| g[k]);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Graph, Init, Tensor};
    use rand::SeedableRng;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::vector(vec![1.0, -2.0])).unwrap();
        let mut adam = Adam::new(&store, 0.1);
        let grads = Gradients::zeros_like(&store);
        adam.step(&mut store, &grads);
        assert_eq!(store.value(id).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g and v_hat = g^2 after one step, so |step| = lr * |g| / (|g| + eps).
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::from_vec(&[1, 3], vec![0.0; 3]).unwrap()).unwrap();
        let c = [0.5, -3.0, 1e-3];
        let lr = 1e-4;
        let mut adam = Adam::new(&store, lr);
        let mut grads = Gradients::zeros_like(&store);
        grads.set(w, c.to_vec()).unwrap();
        adam.step(&mut store, &grads);
        for (k, &gk) in c.iter().enumerate() {
            let expected = -lr * gk / (gk.abs() + 1e-8);
            assert!((store.value(w).data()[k] - expected).abs() < 1e-15);
            assert!((store.value(w).data()[k].abs() - lr).abs() < 1e-8);
        }
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn deterministic_runs() {
        let run = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            let mut store = ParamStore::new();
            let w = store.init("w", 4, 3, Init::Xavier, &mut rng).unwrap();
            let mut adam = Adam::new(&store, 0.01);
            for step in 0..20 {
                let grads = {
                    let mut g = Graph::new(&store);
                    let x = g.leaf(vec![1.0, -0.5, 0.25, step as f64 * 0.1]);
                    let z = g.affine(&[(w, 0, x)], None).unwrap();
                    let l = g.softmax_cross_entropy(z, step % 3).unwrap();
                    g.backward(l).unwrap()
                };
                adam.step(&mut store, &grads);
            }
            store
        };
        assert_eq!(run(), run());
    }
}
