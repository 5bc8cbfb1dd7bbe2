//! Elementwise primitives and reductions.

use super::graph::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

struct ReluBackward;

impl<T: Scalar> Backward<T> for ReluBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        // subgradient 0 at the kink
        let g = ctx.inputs[0].zip_map(ctx.grad, |x, g| if x > T::zero() { g } else { T::zero() })?;
        Ok(vec![Some(g)])
    }
}

struct SigmoidBackward;

impl<T: Scalar> Backward<T> for SigmoidBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let g = ctx.output.zip_map(ctx.grad, |s, g| g * s * (T::one() - s))?;
        Ok(vec![Some(g)])
    }
}

struct MulBackward;

impl<T: Scalar> Backward<T> for MulBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let (a, b) = (ctx.inputs[0], ctx.inputs[1]);
        let da = if ctx.needs[0] { Some(b.zip_map(ctx.grad, |b, g| b * g)?) } else { None };
        let db = if ctx.needs[1] { Some(a.zip_map(ctx.grad, |a, g| a * g)?) } else { None };
        Ok(vec![da, db])
    }
}

struct AddBackward;

impl<T: Scalar> Backward<T> for AddBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![
            ctx.needs[0].then(|| ctx.grad.clone()),
            ctx.needs[1].then(|| ctx.grad.clone()),
        ])
    }
}

struct ScaleBackward<T>(T);

impl<T: Scalar> Backward<T> for ScaleBackward<T> {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let s = self.0;
        Ok(vec![Some(ctx.grad.map(|g| g * s))])
    }
}

struct SumBackward;

impl<T: Scalar> Backward<T> for SumBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let g = ctx.grad.data()[0];
        Ok(vec![Some(Tensor::full(ctx.inputs[0].shape(), g))])
    }
}

struct L1LossBackward;

impl<T: Scalar> Backward<T> for L1LossBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let up = ctx.grad.data()[0];
        let sign = |d: T| {
            if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        };
        let (pred, gt) = (ctx.inputs[0], ctx.inputs[1]);
        let dp = if ctx.needs[0] { Some(pred.zip_map(gt, |p, t| up * sign(p - t))?) } else { None };
        let dg = if ctx.needs[1] { Some(pred.zip_map(gt, |p, t| -up * sign(p - t))?) } else { None };
        Ok(vec![dp, dg])
    }
}

/// Per-pixel constraint across channels of a `C x H x W` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ChannelConstraint {
    MeanSubtract,
    L1Normalize,
}

struct ChannelConstraintBackward {
    kind: ChannelConstraint,
}

fn channel_dims<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    let (n, c, h, w) = t.chw()?;
    if n != 1 {
        return Err(Error::shape("channel constraint", "batch", format!("{:?}", t.shape())));
    }
    Ok((c, h * w))
}

impl<T: Scalar> Backward<T> for ChannelConstraintBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let x = ctx.inputs[0];
        let (c, p) = channel_dims(x)?;
        let dy = ctx.grad.data();
        let mut dx = Tensor::zeros(x.shape());
        let cf = T::from_usize(c).unwrap();
        for i in 0..p {
            match self.kind {
                ChannelConstraint::MeanSubtract => {
                    let mean: T = (0..c).map(|ch| dy[ch * p + i]).sum::<T>() / cf;
                    for ch in 0..c {
                        dx.data_mut()[ch * p + i] = dy[ch * p + i] - mean;
                    }
                }
                ChannelConstraint::L1Normalize => {
                    // y_c = x_c / S, S = sum |x|
                    let s: T = (0..c).map(|ch| x.data()[ch * p + i].abs()).sum();
                    let y = ctx.output.data();
                    let dot: T = (0..c).map(|ch| dy[ch * p + i] * y[ch * p + i]).sum();
                    for ch in 0..c {
                        let xv = x.data()[ch * p + i];
                        let sgn = if xv > T::zero() {
                            T::one()
                        } else if xv < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        dx.data_mut()[ch * p + i] = (dy[ch * p + i] - sgn * dot) / s;
                    }
                }
            }
        }
        Ok(vec![Some(dx)])
    }
}

impl<T: Scalar> Graph<T> {
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|a| a.max(T::zero()));
        self.push_op("relu", v, &[x], Box::new(ReluBackward))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|a| {
            // split by sign so exp never overflows
            if a >= T::zero() {
                T::one() / (T::one() + (-a).exp())
            } else {
                let e = a.exp();
                e / (T::one() + e)
            }
        });
        self.push_op("sigmoid", v, &[x], Box::new(SigmoidBackward))
    }

    /// Hadamard product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |a, b| a * b)?;
        self.push_op("mul", v, &[a, b], Box::new(MulBackward))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |a, b| a + b)?;
        self.push_op("add", v, &[a, b], Box::new(AddBackward))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let v = self.value(x).map(|a| a * s);
        self.push_op("scale", v, &[x], Box::new(ScaleBackward(s)))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).sum());
        self.push_op("sum", v, &[x], Box::new(SumBackward))
    }

    /// `sum |pred - gt|`; subgradient 0 where they coincide.
    pub fn l1_loss(&mut self, pred: Var, gt: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(gt));
        if p.shape() != t.shape() {
            return Err(Error::shape(
                "l1_loss",
                "shape",
                format!("prediction {:?} vs ground truth {:?}", p.shape(), t.shape()),
            ));
        }
        let loss: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
        self.push_op("l1_loss", Tensor::scalar(loss), &[pred, gt], Box::new(L1LossBackward))
    }

    /// Subtract the per-pixel mean over channels: every pixel's channel vector sums to 0.
    pub fn mean_subtract_channels(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (c, p) = channel_dims(xv)?;
        let cf = T::from_usize(c).unwrap();
        let mut out = xv.clone();
        for i in 0..p {
            let mean: T = (0..c).map(|ch| xv.data()[ch * p + i]).sum::<T>() / cf;
            for ch in 0..c {
                out.data_mut()[ch * p + i] -= mean;
            }
        }
        let op = ChannelConstraintBackward {
            kind: ChannelConstraint::MeanSubtract,
        };
        self.push_op("mean_subtract_channels", out, &[x], Box::new(op))
    }

    /// Divide each pixel's channel vector by its L1 norm: the entries sum to 1 when positive.
    pub fn l1_normalize_channels(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (c, p) = channel_dims(xv)?;
        let mut out = xv.clone();
        for i in 0..p {
            let s: T = (0..c).map(|ch| xv.data()[ch * p + i].abs()).sum();
            if s == T::zero() {
                return Err(Error::NonFinite("l1_normalize_channels"));
            }
            for ch in 0..c {
                out.data_mut()[ch * p + i] /= s;
            }
        }
        let op = ChannelConstraintBackward {
            kind: ChannelConstraint::L1Normalize,
        };
        self.push_op("l1_normalize_channels", out, &[x], Box::new(op))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn relu_values() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);

        let x = g.constant(t(&[3], &[0.0, 1.5, 7.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 1.5, 7.0]);
    }

    #[test]
    fn relu_gradient() {
        let mut g = Graph::new();
        let x = g.input(t(&[2], &[-1.0, 2.0]), true);
        let y = g.relu(x).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn sigmoid_values_and_slope() {
        let mut g = Graph::new();
        let x = g.input(t(&[2], &[0.0, -50.0]), true);
        let y = g.sigmoid(x).unwrap();
        let v = g.value(y).data().to_vec();
        assert_eq!(v[0], 0.5);
        assert!(v[1] > 0.0 && v[1] < 1e-20 && v[1].is_finite());
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data()[0], 0.25);
    }

    #[test]
    fn sigmoid_f32_saturates_without_nan() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_f64(&[2], &[-50.0, 90.0]).unwrap());
        let y = g.sigmoid(x).unwrap();
        let v = g.value(y).data();
        assert!(v[0] > 0.0 && v[0] < 1e-20);
        assert_eq!(v[1], 1.0);
    }

    #[test]
    fn mul_values() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2], &[1.0, 2.0]));
        let b = g.constant(t(&[2], &[3.0, 4.0]));
        let y = g.mul(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 8.0]);
        let ones = g.constant(Tensor::ones(&[2]));
        let y = g.mul(a, ones).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn mul_shape_mismatch() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2]));
        let b = g.constant(Tensor::zeros(&[3]));
        assert!(g.mul(a, b).is_err());
    }

    #[test]
    fn l1_loss_values() {
        let mut g = Graph::new();
        let p = g.input(t(&[2], &[1.0, 2.0]), true);
        let q = g.constant(t(&[2], &[0.0, 4.0]));
        let l = g.l1_loss(p, q).unwrap();
        assert_eq!(g.value(l).data(), &[3.0]);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(p).unwrap().data(), &[1.0, -1.0]);

        let same = g.l1_loss(q, q).unwrap();
        assert_eq!(g.value(same).data(), &[0.0]);
    }

    #[test]
    fn channel_constraints() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3, 1, 2], &[1.0, 0.5, 2.0, 0.5, 3.0, 1.0]));
        let m = g.mean_subtract_channels(x).unwrap();
        let mv = g.value(m).clone();
        for i in 0..2 {
            let s: f64 = (0..3).map(|c| mv.data()[c * 2 + i]).sum();
            assert!(s.abs() < 1e-15);
        }
        let n = g.l1_normalize_channels(x).unwrap();
        let nv = g.value(n);
        assert_eq!(nv.data()[0], 1.0 / 6.0);
        assert_eq!(nv.data()[1], 0.25);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros(&[2]), true);
        let y = g.relu(x).unwrap();
        assert!(g.backward(y).is_err());
    }
}
