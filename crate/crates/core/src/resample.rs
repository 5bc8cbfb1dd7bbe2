//! Lossless stride-`r` rearrangement between space and channels.
//!
//! Channel `c * r^2 + dy * r + dx` of the unshuffled tensor at `(i, j)` holds input
//! channel `c` at `(r * i + dy, r * j + dx)`. Every other module that needs the
//! sub-pixel ordering goes through these two functions.

use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn dims<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = t.chw()?;
    if n != 1 {
        return Err(Error::shape(op, "batch", format!("{:?}", t.shape())));
    }
    Ok((c, h, w))
}

/// `C x H x W -> r^2 C x H/r x W/r`.
pub fn pixel_unshuffle<T: Scalar>(image: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (c, h, w) = dims(image, "pixel_unshuffle")?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::shape(
            "pixel_unshuffle",
            "spatial extent",
            format!("{h} x {w} is not divisible by stride {r}"),
        ));
    }
    let (oh, ow) = (h / r, w / r);
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for dy in 0..r {
            for dx in 0..r {
                for i in 0..oh {
                    let row = &src[(ch * h + r * i + dy) * w..];
                    out.extend((0..ow).map(|j| row[r * j + dx]));
                }
            }
        }
    }
    Tensor::from_vec(&[c * r * r, oh, ow], out)
}

/// `r^2 C x H x W -> C x rH x rW`, the inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle<T: Scalar>(image: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (c, h, w) = dims(image, "pixel_shuffle")?;
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::shape(
            "pixel_shuffle",
            "channels",
            format!("{c} channels are not divisible by {}", r * r),
        ));
    }
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let src = image.data();
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..oc {
        for dy in 0..r {
            for dx in 0..r {
                let plane = ((ch * r + dy) * r + dx) * h * w;
                for i in 0..h {
                    let dst = &mut out[(ch * oh + r * i + dy) * ow..];
                    for j in 0..w {
                        dst[r * j + dx] = src[plane + i * w + j];
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[oc, oh, ow], out)
}

struct ShuffleBackward {
    r: usize,
}

impl<T: Scalar> Backward<T> for ShuffleBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(pixel_unshuffle(ctx.grad, self.r)?)])
    }
}

impl<T: Scalar> Graph<T> {
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let v = pixel_shuffle(self.value(x), r)?;
        self.push_op("pixel_shuffle", v, &[x], Box::new(ShuffleBackward { r }))
    }
}
