//! 2-D cross-correlation lowered to im2col + gemm.

use super::graph::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    fn rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

/// Output extent of a convolution along one axis, `None` when the kernel does not fit.
pub fn conv_out_extent(extent: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = extent + 2 * pad;
    (stride > 0 && kernel > 0 && kernel <= padded).then(|| (padded - kernel) / stride + 1)
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry, col: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut col[row * p..(row + 1) * p];
                if g.pad == 0 {
                    for oy in 0..oh {
                        let iy = oy * g.stride + ky;
                        let src = &plane[iy * g.w..(iy + 1) * g.w];
                        let d = &mut dst[oy * ow..(oy + 1) * ow];
                        if g.stride == 1 {
                            d.copy_from_slice(&src[kx..kx + ow]);
                        } else {
                            for (ox, v) in d.iter_mut().enumerate() {
                                *v = src[ox * g.stride + kx];
                            }
                        }
                    }
                } else {
                    for oy in 0..oh {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        let d = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= g.h as isize {
                            d.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                        for (ox, v) in d.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            *v = if ix < 0 || ix >= g.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im_add<T: Scalar>(col: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

struct Conv2dBackward<T> {
    geom: ConvGeometry,
    batch: usize,
    c_out: usize,
    has_bias: bool,
    /// im2col buffers per batch item, kept only when the weight needs a gradient.
    cols: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> Backward<T> for Conv2dBackward<T> {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let g = &self.geom;
        let (k, p) = (g.rows(), g.cols());
        let x = ctx.inputs[0];
        let w = ctx.inputs[1];
        let dy = ctx.grad.data();

        let mut dx = ctx.needs[0].then(|| Tensor::zeros(x.shape()));
        let mut dw = ctx.needs[1].then(|| Tensor::zeros(w.shape()));
        let db = (self.has_bias && ctx.needs[2]).then(|| {
            let mut db = Tensor::zeros(&[self.c_out]);
            for n in 0..self.batch {
                for co in 0..self.c_out {
                    let off = (n * self.c_out + co) * p;
                    db.data_mut()[co] += dy[off..off + p].iter().copied().sum::<T>();
                }
            }
            db
        });

        let mut col_scratch = vec![T::zero(); if dx.is_some() { k * p } else { 0 }];
        let plane_in = g.c_in * g.h * g.w;
        for n in 0..self.batch {
            let dy_n = &dy[n * self.c_out * p..(n + 1) * self.c_out * p];
            if let Some(dw) = dw.as_mut() {
                let cols = self
                    .cols
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("conv2d: weight gradient without saved columns".into()))?;
                // dW += dY[Co, P] * col^T[P, K]
                T::gemm(
                    self.c_out,
                    p,
                    k,
                    T::one(),
                    (dy_n, p as isize, 1),
                    (&cols[n], 1, p as isize),
                    T::one(),
                    (dw.data_mut(), k as isize, 1),
                );
            }
            if let Some(dx) = dx.as_mut() {
                // dcol = W^T[K, Co] * dY[Co, P]
                T::gemm(
                    k,
                    self.c_out,
                    p,
                    T::one(),
                    (w.data(), 1, k as isize),
                    (dy_n, p as isize, 1),
                    T::zero(),
                    (&mut col_scratch, p as isize, 1),
                );
                col2im_add(&col_scratch, g, &mut dx.data_mut()[n * plane_in..(n + 1) * plane_in]);
            }
        }
        let mut out = vec![dx, dw];
        if self.has_bias {
            out.push(db);
        }
        Ok(out)
    }
}

impl<T: Scalar> Graph<T> {
    /// Cross-correlation of `C_in x H x W` (or `N x C_in x H x W`) input with
    /// `C_out x C_in x k_h x k_w` weights.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (batch, c_in, h, wd) = xv.chw()?;
        let &[c_out, wc_in, kh, kw] = wv.shape() else {
            return Err(Error::shape(
                "conv2d",
                "weight rank",
                format!("expected C_out x C_in x k_h x k_w, got {:?}", wv.shape()),
            ));
        };
        if wc_in != c_in {
            return Err(Error::shape(
                "conv2d",
                "input channels",
                format!("weight expects {wc_in}, input has {c_in}"),
            ));
        }
        if stride == 0 {
            return Err(Error::Invalid("conv2d: stride must be positive".into()));
        }
        if kh > h + 2 * pad {
            return Err(Error::shape(
                "conv2d",
                "height",
                format!("kernel height {kh} exceeds padded input height {}", h + 2 * pad),
            ));
        }
        if kw > wd + 2 * pad {
            return Err(Error::shape(
                "conv2d",
                "width",
                format!("kernel width {kw} exceeds padded input width {}", wd + 2 * pad),
            ));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [c_out] {
                return Err(Error::shape(
                    "conv2d",
                    "bias",
                    format!("expected [{c_out}], got {:?}", self.value(b).shape()),
                ));
            }
        }
        let geom = ConvGeometry {
            c_in,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
        };
        let (oh, ow) = (geom.out_h(), geom.out_w());
        let (k, p) = (geom.rows(), geom.cols());
        let keep_cols = self.grad_enabled() && self.requires_grad(w);

        let mut out = vec![T::zero(); batch * c_out * p];
        let mut saved = Vec::new();
        let mut col = vec![T::zero(); k * p];
        for n in 0..batch {
            im2col(&xv.data()[n * c_in * h * wd..(n + 1) * c_in * h * wd], &geom, &mut col);
            let out_n = &mut out[n * c_out * p..(n + 1) * c_out * p];
            if let Some(b) = bias {
                for (co, &bv) in self.value(b).data().iter().enumerate() {
                    out_n[co * p..(co + 1) * p].fill(bv);
                }
            }
            T::gemm(
                c_out,
                k,
                p,
                T::one(),
                (wv.data(), k as isize, 1),
                (&col, p as isize, 1),
                if bias.is_some() { T::one() } else { T::zero() },
                (out_n, p as isize, 1),
            );
            if keep_cols {
                saved.push(col.clone());
            }
        }
        let shape: Vec<usize> = if xv.ndim() == 4 {
            vec![batch, c_out, oh, ow]
        } else {
            vec![c_out, oh, ow]
        };
        let value = Tensor::from_vec(&shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let op = Conv2dBackward {
            geom,
            batch,
            c_out,
            has_bias: bias.is_some(),
            cols: keep_cols.then_some(saved),
        };
        self.push_op("conv2d", value, &inputs, Box::new(op))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: Tensor<f64>, w: Tensor<f64>, b: Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let mut g = Graph::new();
        let (x, w, b) = (g.constant(x), g.constant(w), g.constant(b));
        let y = g.conv2d(x, w, Some(b), stride, pad).unwrap();
        g.value(y).clone()
    }

    /// Direct summation, no lowering.
    fn direct(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let (_, ci, h, wd) = x.chw().unwrap();
        let &[co, _, kh, kw] = w.shape() else { panic!() };
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        Tensor::from_fn(&[co, oh, ow], |i| {
            let (o, oy, ox) = (i / (oh * ow), (i / ow) % oh, i % ow);
            let mut acc = b.data()[o];
            for c in 0..ci {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            acc += x.at3(c, iy as usize, ix as usize)
                                * w.data()[((o * ci + c) * kh + ky) * kw + kx];
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn two_by_two_sum() {
        let x = Tensor::from_f64(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = run(x, Tensor::ones(&[1, 1, 2, 2]), Tensor::zeros(&[1]), 1, 0);
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = Tensor::from_f64(&[1, 3, 3], &[1.0, -2.0, 3.0, 4.5, 5.0, 6.0, 7.0, 8.0, -9.0]).unwrap();
        let y = run(x.clone(), Tensor::ones(&[1, 1, 1, 1]), Tensor::zeros(&[1]), 1, 0);
        assert_eq!(y, x);
    }

    #[test]
    fn seven_by_seven_valid_shape() {
        let x = Tensor::zeros(&[1, 51, 51]);
        let y = run(x, Tensor::zeros(&[32, 1, 7, 7]), Tensor::zeros(&[32]), 1, 0);
        assert_eq!(y.shape(), &[32, 45, 45]);
    }

    #[test]
    fn matches_direct_summation_with_stride_and_padding() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::rand_uniform(&[3, 9, 8], -1.0, 1.0, &mut rng);
        let w = Tensor::rand_uniform(&[4, 3, 3, 2], -1.0, 1.0, &mut rng);
        let b = Tensor::rand_uniform(&[4], -1.0, 1.0, &mut rng);
        for (stride, pad) in [(1, 0), (2, 0), (1, 1), (2, 2), (3, 1)] {
            let got = run(x.clone(), w.clone(), b.clone(), stride, pad);
            let want = direct(&x, &w, &b, stride, pad);
            assert_eq!(got.shape(), want.shape());
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12, "stride {stride} pad {pad}");
        }
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[2, 5, 5]));
        let w = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
        let err = g.conv2d(x, w, None, 1, 0).unwrap_err().to_string();
        assert!(err.contains("input channels"), "{err}");
    }

    #[test]
    fn oversized_kernel_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[1, 4, 6]));
        let w = g.constant(Tensor::zeros(&[1, 1, 5, 5]));
        let err = g.conv2d(x, w, None, 1, 0).unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
    }
}
