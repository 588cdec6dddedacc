use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes the parameters, which tests rely on.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be ≥ 0",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimMismatch(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = *config;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = vec![Tensor::row(&[1.0, -2.0])];
        let before = params.clone();
        let mut state = AdamState::new(&params);
        adam_step(
            &mut params,
            &[Tensor::zeros(&[1, 2])],
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut params = vec![Tensor::row(&[0.0, 0.0, 0.0])];
        let mut state = AdamState::new(&params);
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        adam_step(
            &mut params,
            &[Tensor::row(&[3.0, -0.5, 20.0])],
            &mut state,
            &config,
        )
        .unwrap();
        for (&p, expected) in params[0].data().iter().zip([-0.1, 0.1, -0.1]) {
            assert!((p - expected).abs() < 1e-6, "{p}");
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut params = vec![Tensor::row(&[1.0, 2.0])];
        let mut state = AdamState::new(&params);
        assert!(adam_step(
            &mut params,
            &[Tensor::row(&[1.0])],
            &mut state,
            &AdamConfig::default()
        )
        .is_err());
    }

    // scalar transcription of the update equations
    fn brute_force(p: &mut [f64], g_steps: &[Vec<f64>], c: &AdamConfig) {
        let mut m = vec![0.0; p.len()];
        let mut v = vec![0.0; p.len()];
        for (step, g) in g_steps.iter().enumerate() {
            let t = (step + 1) as f64;
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / (1.0 - c.beta1.powf(t));
                let vh = v[i] / (1.0 - c.beta2.powf(t));
                p[i] -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
            }
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            start in prop::collection::vec(-2.0f64..2.0, 4),
            grads in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..6),
            lr in 1e-4f64..0.5,
        ) {
            let config = AdamConfig { learning_rate: lr, ..AdamConfig::default() };
            let mut params = vec![Tensor::from_rows(&[&start[..2], &start[2..]]).unwrap()];
            let mut state = AdamState::new(&params);
            for g in &grads {
                let g = Tensor::from_rows(&[&g[..2], &g[2..]]).unwrap();
                adam_step(&mut params, &[g], &mut state, &config).unwrap();
            }
            let mut expected = start.clone();
            brute_force(&mut expected, &grads, &config);
            for (a, b) in params[0].data().iter().zip(&expected) {
                prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
            }
        }
    }
}
