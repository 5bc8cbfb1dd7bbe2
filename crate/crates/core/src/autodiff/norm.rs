//! Batch normalization over `N x H x W` per channel.

use super::graph::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running mean and variance tracked across training steps.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Scalar> RunningStats<T> {
    /// Mean 0, variance 1: what eval mode sees before any training step.
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::ones(&[channels]),
        }
    }

    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn update(&mut self, batch: &BatchStats<T>, momentum: T) {
        let keep = T::one() - momentum;
        for (r, &b) in self.mean.data_mut().iter_mut().zip(batch.mean.data()) {
            *r = keep * *r + momentum * b;
        }
        for (r, &b) in self.var.data_mut().iter_mut().zip(batch.var_unbiased.data()) {
            *r = keep * *r + momentum * b;
        }
    }
}

/// Statistics of one training batch, handed back so the caller can fold them into
/// its running estimates.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Tensor<T>,
    pub var_unbiased: Tensor<T>,
}

pub enum BnMode<'a, T> {
    Train,
    Eval(&'a RunningStats<T>),
}

struct BatchNormBackward<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
    batch: usize,
    channels: usize,
    plane: usize,
}

impl<T: Scalar> Backward<T> for BatchNormBackward<T> {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let gamma = ctx.inputs[1].data();
        let dy = ctx.grad.data();
        let (n, c, p) = (self.batch, self.channels, self.plane);
        let m = T::from_usize(n * p).unwrap();

        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * p;
                for (&g, &xh) in dy[off..off + p].iter().zip(&self.normalized[off..off + p]) {
                    sum_dy[ch] += g;
                    sum_dy_xhat[ch] += g * xh;
                }
            }
        }

        let dx = ctx.needs[0].then(|| {
            let mut dx = Tensor::zeros(ctx.inputs[0].shape());
            let d = dx.data_mut();
            for b in 0..n {
                for ch in 0..c {
                    let scale = gamma[ch] * self.inv_std[ch];
                    let off = (b * c + ch) * p;
                    for i in off..off + p {
                        d[i] = if self.train {
                            scale * (dy[i] - sum_dy[ch] / m - self.normalized[i] * sum_dy_xhat[ch] / m)
                        } else {
                            scale * dy[i]
                        };
                    }
                }
            }
            dx
        });
        let dgamma = ctx.needs[1].then(|| Tensor::from_vec(&[c], sum_dy_xhat.clone()).unwrap());
        let dbeta = ctx.needs[2].then(|| Tensor::from_vec(&[c], sum_dy.clone()).unwrap());
        Ok(vec![dx, dgamma, dbeta])
    }
}

impl<T: Scalar> Graph<T> {
    /// Per-channel affine normalization. In train mode the batch statistics are returned
    /// alongside the output so the caller can update its running estimates.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, T>,
        epsilon: T,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let xv = self.value(x);
        let (n, c, h, w) = xv.chw()?;
        let p = h * w;
        for (v, what) in [(gamma, "gamma"), (beta, "beta")] {
            if self.value(v).shape() != [c] {
                return Err(Error::shape(
                    "batchnorm",
                    "channels",
                    format!("{what} has shape {:?}, input has {c} channels", self.value(v).shape()),
                ));
            }
        }
        let m = n * p;
        let (mean, var, stats) = match mode {
            BnMode::Train => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for b in 0..n {
                    for (ch, mu) in mean.iter_mut().enumerate() {
                        let off = (b * c + ch) * p;
                        *mu += xv.data()[off..off + p].iter().copied().sum::<T>();
                    }
                }
                let mf = T::from_usize(m).unwrap();
                mean.iter_mut().for_each(|v| *v /= mf);
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * p;
                        for &v in &xv.data()[off..off + p] {
                            let d = v - mean[ch];
                            var[ch] += d * d;
                        }
                    }
                }
                let unbiased: Vec<T> = var
                    .iter()
                    .map(|&s| if m > 1 { s / T::from_usize(m - 1).unwrap() } else { T::zero() })
                    .collect();
                var.iter_mut().for_each(|v| *v /= mf);
                let stats = BatchStats {
                    mean: Tensor::from_vec(&[c], mean.clone())?,
                    var_unbiased: Tensor::from_vec(&[c], unbiased)?,
                };
                (mean, var, Some(stats))
            }
            BnMode::Eval(rs) => (rs.mean.data().to_vec(), rs.var.data().to_vec(), None),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + epsilon).sqrt()).collect();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut normalized = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * p;
                for i in off..off + p {
                    let xh = (xv.data()[i] - mean[ch]) * inv_std[ch];
                    normalized[i] = xh;
                    out[i] = gv[ch] * xh + bv[ch];
                }
            }
        }
        let value = Tensor::from_vec(xv.shape(), out)?;
        let op = BatchNormBackward {
            normalized,
            inv_std,
            train: stats.is_some(),
            batch: n,
            channels: c,
            plane: p,
        };
        let y = self.push_op("batchnorm", value, &[x, gamma, beta], Box::new(op))?;
        Ok((y, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn(&[2, 3, 3], |i| if i < 9 { 4.0 } else { -1.5 }));
        let gamma = g.constant(Tensor::from_f64(&[2], &[2.0, 3.0]).unwrap());
        let beta = g.constant(Tensor::from_f64(&[2], &[0.5, -0.25]).unwrap());
        let (y, _) = g.batchnorm(x, gamma, beta, BnMode::Train, 1e-5).unwrap();
        let y = g.value(y);
        assert!(y.data()[..9].iter().all(|&v| v == 0.5));
        assert!(y.data()[9..].iter().all(|&v| v == -0.25));
    }

    #[test]
    fn standardized_input_passes_through() {
        // zero mean, unit (biased) variance
        let data = [1.0, -1.0, 1.0, -1.0];
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64(&[1, 2, 2], &data).unwrap());
        let gamma = g.constant(Tensor::ones(&[1]));
        let beta = g.constant(Tensor::zeros(&[1]));
        let (y, stats) = g.batchnorm(x, gamma, beta, BnMode::Train, 1e-5).unwrap();
        for (a, b) in g.value(y).data().iter().zip(data) {
            assert!((a - b).abs() < 1e-3);
        }
        let stats = stats.unwrap();
        assert_eq!(stats.mean.data(), &[0.0]);
        assert!((stats.var_unbiased.data()[0] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eval_before_training_uses_unit_stats() {
        let rs = RunningStats::<f64>::new(1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_f64(&[1, 1, 2], &[3.0, -2.0]).unwrap());
        let gamma = g.constant(Tensor::ones(&[1]));
        let beta = g.constant(Tensor::zeros(&[1]));
        let (y, stats) = g.batchnorm(x, gamma, beta, BnMode::Eval(&rs), 1e-5).unwrap();
        assert!(stats.is_none());
        let s = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert_eq!(g.value(y).data(), &[3.0 * s, -2.0 * s]);
    }

    #[test]
    fn running_update_uses_momentum() {
        let mut rs = RunningStats::<f64>::new(1);
        let batch = BatchStats {
            mean: Tensor::scalar(2.0),
            var_unbiased: Tensor::scalar(3.0),
        };
        rs.update(&batch, 0.1);
        assert!((rs.mean.data()[0] - 0.2).abs() < 1e-15);
        assert!((rs.var.data()[0] - 1.2).abs() < 1e-15);
    }
}
