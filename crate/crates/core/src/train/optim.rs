//! Adam with bias correction and the step-decay learning-rate schedule.

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every entry of a [`ParamStore`], in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    /// Steps taken so far.
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Adam {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update of all trainable entries from their accumulated gradients.
    pub fn step(&mut self, params: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::Invalid(format!(
                "optimizer tracks {} tensors, store has {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let step = T::lit(lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            let g = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                md[i] = b1 * md[i] + one_b1 * g[i];
                vd[i] = b2 * vd[i] + one_b2 * g[i] * g[i];
                *w -= step * md[i] / ((vd[i] * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `base_lr / factor^n` after `n` completed decay periods.
pub fn step_decay_lr(base_lr: f64, factor: f64, every: usize, iteration: usize) -> f64 {
    if every == 0 {
        return base_lr;
    }
    let n = (iteration / every) as i32;
    base_lr / factor.powi(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(x));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = single(1.5);
        let mut adam = Adam::new(&s, AdamConfig::default());
        adam.step(&mut s, 0.1).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value.data()[0], 1.5);
        adam.m[0] = Tensor::scalar(0.5);
        adam.v[0] = Tensor::scalar(0.25);
        s.zero_grad();
        let before = s.iter().next().unwrap().1.value.data()[0];
        adam.step(&mut s, 0.0).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value.data()[0], before);
        assert!((adam.m[0].data()[0] - 0.45).abs() < 1e-15);
        assert!((adam.v[0].data()[0] - 0.25 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_is_bounded_by_lr() {
        for g in [1e-6, 0.3, -7.0, 1e4] {
            let mut s = single(0.0);
            s.iter_mut().next().unwrap().grad = Tensor::scalar(g);
            let mut adam = Adam::new(&s, AdamConfig::default());
            adam.step(&mut s, 0.01).unwrap();
            let x = s.iter().next().unwrap().1.value.data()[0];
            assert!(x.abs() <= 0.01 * (1.0 + 1e-6), "g={g} step={x}");
            assert!(x * g < 0.0);
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let mut s = single(0.0);
        let mut adam = Adam::new(&s, AdamConfig::default());
        for _ in 0..100 {
            let x = s.iter().next().unwrap().1.value.data()[0];
            s.iter_mut().next().unwrap().grad = Tensor::scalar(2.0 * (x - 3.0));
            adam.step(&mut s, 0.1).unwrap();
        }
        let x = s.iter().next().unwrap().1.value.data()[0];
        assert!((x - 3.0).abs() < 0.1, "x = {x}");
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut s = ParamStore::<f64>::new();
        s.add_buffer("running", Tensor::scalar(1.0));
        s.iter_mut().next().unwrap().grad = Tensor::scalar(5.0);
        let mut adam = Adam::new(&s, AdamConfig::default());
        adam.step(&mut s, 0.1).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value.data()[0], 1.0);
    }

    #[test]
    fn schedule_divides_by_five() {
        assert_eq!(step_decay_lr(0.001, 5.0, 500, 0), 0.001);
        assert_eq!(step_decay_lr(0.001, 5.0, 500, 499), 0.001);
        assert_eq!(step_decay_lr(0.001, 5.0, 500, 500), 0.001 / 5.0);
        assert_eq!(step_decay_lr(0.001, 5.0, 500, 1999), 0.001 / 125.0);
        assert_eq!(step_decay_lr(0.001, 5.0, 0, 1999), 0.001);
    }
}
