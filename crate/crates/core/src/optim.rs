//! Bias-corrected Adam over [`ModelParams`].

use crate::error::{Error, Result};
use crate::network::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let cfg = params.config();
        AdamState { m: ModelParams::zeros(&cfg), v: ModelParams::zeros(&cfg), step: 0 }
    }
}

/// One Adam update, in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.config() != grads.config() || params.config() != state.m.config() {
        return Err(Error::dim("parameter, gradient and optimizer state layouts differ"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let lr = cfg.learning_rate;
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        p.same_shape(g)?;
        let it = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut());
        for (((p, &g), m), v) in it {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ModelConfig {
        ModelConfig { blocks: 1, channels: 2, kernel_size: 3 }
    }

    fn filled(v: f64) -> ModelParams {
        let mut p = ModelParams::zeros(&cfg());
        for t in p.tensors_mut() {
            t.data_mut().fill(v);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ModelParams::init(&cfg(), &mut rng);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &ModelParams::zeros(&cfg()), &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step, 5);
    }

    #[test]
    fn first_step_closed_form() {
        let c = AdamConfig::default();
        let g = 0.37;
        let mut p = filled(1.0);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &filled(g), &mut st, &c).unwrap();
        // m̂ = g, v̂ = g² after bias correction
        let want = 1.0 - c.learning_rate * g / (g + c.eps);
        assert!((p.expand_x.data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let c = AdamConfig { learning_rate: 1e-3, ..Default::default() };
        let mut p = filled(0.0);
        let mut st = AdamState::new(&p);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.proj.data()[0];
            adam_step(&mut p, &filled(-2.5), &mut st, &c).unwrap();
            last = p.proj.data()[0] - before;
        }
        assert!((last - 1e-3).abs() < 1e-8, "{last}");
    }

    #[test]
    fn layout_mismatch_rejected() {
        let mut p = filled(0.0);
        let mut st = AdamState::new(&p);
        let other = ModelParams::zeros(&ModelConfig { blocks: 2, ..cfg() });
        assert!(adam_step(&mut p, &other, &mut st, &AdamConfig::default()).is_err());
    }
}
