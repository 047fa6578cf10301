use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 64,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Validation(format!("{name} = {b} outside [0, 1)")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::Validation("adam_epsilon must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Validation("batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: params.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update of every tensor in `weights`.
pub fn adam_step(weights: &mut [Tensor], grads: &[Vec<f32>], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if weights.len() != grads.len() || weights.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} weight tensors, {} gradients, {} state slots",
            weights.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (w, g)) in weights.iter().zip(grads).enumerate() {
        if w.len() != g.len() || w.len() != state.m[i].len() {
            return Err(Error::Shape(format!("adam: tensor {i} size mismatch")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = (1.0 / (1.0 - b1.powi(t))) as f32;
    let c2 = (1.0 / (1.0 - b2.powi(t))) as f32;
    let (b1, b2) = (b1 as f32, b2 as f32);
    let lr = cfg.learning_rate as f32;
    let eps = cfg.adam_epsilon as f32;
    for ((w, g), (m, v)) in weights.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((wi, &gi), mi), vi) in w.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let mhat = *mi * c1;
            let vhat = *vi * c2;
            *wi -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(w: f32) -> Vec<Tensor> {
        vec![Tensor::new(vec![1], vec![w]).unwrap()]
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = scalar(0.7);
        let mut st = AdamState::new(&w);
        adam_step(&mut w, &[vec![0.0]], &mut st, &TrainConfig::default()).unwrap();
        assert_eq!(w[0].data[0], 0.7);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps).
        let cfg = TrainConfig { learning_rate: 1e-2, ..Default::default() };
        for g in [0.3f32, -5.0, 1e-3] {
            let mut w = scalar(1.0);
            let mut st = AdamState::new(&w);
            adam_step(&mut w, &[vec![g]], &mut st, &cfg).unwrap();
            let delta = (1.0 - w[0].data[0]) as f64;
            let expected = 1e-2 * g as f64 / (g.abs() as f64 + 1e-8);
            assert!((delta - expected).abs() < 1e-6, "{g}: {delta}");
        }
    }

    #[test]
    fn minimizes_square() {
        let cfg = TrainConfig { learning_rate: 0.1, ..Default::default() };
        let mut w = scalar(1.0);
        let mut st = AdamState::new(&w);
        for _ in 0..200 {
            let g = 2.0 * w[0].data[0];
            adam_step(&mut w, &[vec![g]], &mut st, &cfg).unwrap();
        }
        assert!(w[0].data[0].abs() < 0.05, "{}", w[0].data[0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut w = scalar(1.0);
        let mut st = AdamState::new(&w);
        let err = adam_step(&mut w, &[vec![1.0, 2.0]], &mut st, &TrainConfig::default());
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
