use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    moments: IndexMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, moments: IndexMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients are validated first: if any is
    /// non-finite, nothing changes and the offending parameter is named.
    pub fn step(&mut self, params: &mut ParamStore, grads: &IndexMap<String, Tensor>) -> Result<(), AutodiffError> {
        for (name, g) in grads {
            let p = params.get(name).ok_or_else(|| AutodiffError::UnknownParam(name.clone()))?;
            if p.shape() != g.shape() {
                return Err(AutodiffError::Shape(crate::tensor::ShapeError::new(
                    "adam",
                    format!("{name}: parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
                )));
            }
            if !g.all_finite() {
                return Err(AutodiffError::NonFiniteGradient(name.clone()));
            }
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("validated above");
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let it = p.data_mut().iter_mut().zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((w, (mi, vi)), &gi) in it.zip(g.data()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::matrix(1, values.len(), values).unwrap()).unwrap();
        s
    }

    fn grads(values: Vec<f64>) -> IndexMap<String, Tensor> {
        let mut g = IndexMap::new();
        g.insert("w".to_string(), Tensor::matrix(1, values.len(), values).unwrap());
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = store(vec![1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p, &grads(vec![0.0, 0.0])).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // One step: m̂ = g, v̂ = g², so the update is lr·g/(|g| + ε).
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        for g in [0.5, -3.0, 1e-3] {
            let mut p = store(vec![1.0]);
            Adam::new(cfg).step(&mut p, &grads(vec![g])).unwrap();
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            let got = p.get("w").unwrap().data()[0];
            assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
            assert!(((1.0 - got).abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn nan_gradient_aborts_the_step() {
        let mut p = store(vec![1.0, 2.0]);
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam.step(&mut p, &grads(vec![0.1, f64::NAN])).unwrap_err();
        assert!(matches!(err, AutodiffError::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(p.get("w").unwrap().data(), &[1.0, 2.0]);
        assert_eq!(adam.steps_taken(), 0);
    }
}
