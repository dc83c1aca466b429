use serde::{Deserialize, Serialize};

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|p| vec![0.0; p.value.numel()]).collect::<Vec<_>>();
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }
}

/// One bias-corrected Adam update over every parameter, then clears the
/// gradients.
pub fn adam_step(store: &mut ParamStore, state: &mut OptimizerState) {
    assert_eq!(store.len(), state.first.len(), "optimizer state does not match parameters");
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, m), v) in store.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        for (((w, g), m), v) in p.value.data_mut().iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    store.zero_grads();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamCategory, Tape, Tensor};

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let id = store.add("w", ParamCategory::Weight, Tensor::from_rows(&[vec![1.5, -2.0]]));
        let mut state = OptimizerState::new(&store, AdamConfig::default());
        adam_step(&mut store, &mut state);
        assert_eq!(store.value(id).data(), &[1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("w", ParamCategory::Weight, Tensor::from_rows(&[vec![1.0, 1.0]]));
        store.get_mut(id).grad = vec![0.3, -42.0];
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut state = OptimizerState::new(&store, cfg);
        adam_step(&mut store, &mut state);
        let w = store.value(id).data();
        assert!((w[0] - (1.0 - 0.01)).abs() < 1e-8);
        assert!((w[1] - (1.0 + 0.01)).abs() < 1e-8);
        assert_eq!(store.get(id).grad, vec![0.0, 0.0]);
    }

    #[test]
    fn minimizes_a_quadratic_bowl() {
        let target = [3.0, -1.0, 0.5, 2.0];
        let mut store = ParamStore::new();
        let id = store.add("x", ParamCategory::Weight, Tensor::zeros(&[4]));
        let mut state = OptimizerState::new(&store, AdamConfig { lr: 0.05, ..AdamConfig::default() });
        let mut loss = f64::INFINITY;
        for _ in 0..5000 {
            let mut tape = Tape::new();
            let x = tape.param(&store, id);
            let t = tape.constant(Tensor::new(vec![4], target.iter().map(|v| -v).collect()).unwrap());
            let diff = tape.add(x, t).unwrap();
            let sq = tape.mul(diff, diff).unwrap();
            let l = tape.sum(sq);
            loss = tape.value(l).data()[0];
            if loss < 1e-6 {
                break;
            }
            tape.backward(l).unwrap();
            tape.accumulate_param_grads(&mut store);
            adam_step(&mut store, &mut state);
        }
        assert!(loss < 1e-6, "{loss}");
    }
}
