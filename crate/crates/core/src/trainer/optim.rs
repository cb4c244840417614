use super::config::TrainConfig;
use crate::error::{Error, Result};

/// `η₀·(1 + α·p)^(−β)`.
pub fn inverse_decay(base: f64, progress: f64, alpha: f64, beta: f64) -> f64 {
    base * (1.0 + alpha * progress).powf(-beta)
}

/// Learning rates in effect at `iter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates {
    pub encoder: f64,
    /// Classifier and discriminator.
    pub heads: f64,
}

pub fn lr_schedule(iter: usize, config: &TrainConfig) -> GroupRates {
    let p = iter as f64 / config.total_iters.max(1) as f64;
    GroupRates {
        encoder: inverse_decay(config.lr_encoder, p, config.lr_alpha, config.lr_beta),
        heads: inverse_decay(config.lr_heads, p, config.lr_alpha, config.lr_beta),
    }
}

/// One momentum-SGD step with L2 weight decay:
/// `v ← m·v + (g + λθ)`, `θ ← θ − η·v`.
pub fn sgd_update(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape("sgd_update", params.len(), grads.len()));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let step = momentum * *v + g + weight_decay * *p;
        let next = *p - lr * step;
        if !next.is_finite() {
            return Err(Error::Numerical {
                iteration: None,
                detail: format!("non-finite parameter update (gradient {g})"),
            });
        }
        *v = step;
        *p = next;
    }
    Ok(())
}

/// Velocity buffers for one parameter group.
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("Sgd::step", params.len(), grads.len()));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(self.velocity.iter_mut()) {
            sgd_update(p, g, v, lr, self.momentum, self.weight_decay)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let c = TrainConfig::default();
        let r0 = lr_schedule(0, &c);
        assert_eq!((r0.encoder, r0.heads), (0.003, 0.03));
        let end = inverse_decay(0.03, 1.0, 10.0, 0.75);
        assert!((end - 0.03 * 11f64.powf(-0.75)).abs() < 1e-15);
        assert!((end - 0.0049668).abs() < 1e-7);
        for it in [0, 17, 1500, 2999] {
            let r = lr_schedule(it, &c);
            assert!((r.encoder / r.heads - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_examples() {
        let mut p = [1.5];
        let mut v = [0.0];
        sgd_update(&mut p, &[0.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p, [1.5]);

        let mut p = [2.0];
        let mut v = [0.0];
        sgd_update(&mut p, &[1.0], &mut v, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p, [2.0 - 0.1]);

        let mut p = [0.0];
        let mut v = [0.0];
        sgd_update(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        sgd_update(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert!((p[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn non_finite_update_aborts() {
        let mut p = [1.0];
        let mut v = [0.0];
        assert!(sgd_update(&mut p, &[f64::INFINITY], &mut v, 0.1, 0.0, 0.0).is_err());
        assert_eq!(p, [1.0]);
    }
}
