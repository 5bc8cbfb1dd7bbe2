//! Dense channels-first tensors.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array of reals. Images are `C x H x W`, batches `N x C x H x W`.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "Tensor::from_vec",
                "length",
                format!("shape {shape:?} holds {n} values but {} were given", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Build a tensor from `f64` literals; mostly for tests.
    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn rand_uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| T::lit(rng.random_range(lo..hi)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Interpret the trailing three dims as `(C, H, W)`; leading dims fold into a batch.
    pub fn chw(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [c, h, w] => Ok((1, c, h, w)),
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(
                "chw",
                "rank",
                format!("expected C x H x W or N x C x H x W, got {:?}", self.shape),
            )),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(
                "reshape",
                "length",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> T {
        let (h, w) = (self.shape[self.ndim() - 2], self.shape[self.ndim() - 1]);
        self.data[(c * h + y) * w + x]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: T) {
        let (h, w) = (self.shape[self.ndim() - 2], self.shape[self.ndim() - 1]);
        self.data[(c * h + y) * w + x] = v;
    }

    /// One channel of a `C x H x W` tensor as a `1 x H x W` tensor.
    pub fn channel(&self, c: usize) -> Result<Self> {
        let (n, ch, h, w) = self.chw()?;
        if n != 1 || c >= ch {
            return Err(Error::shape("channel", "channel", format!("{c} of {:?}", self.shape)));
        }
        let plane = h * w;
        Ok(Tensor {
            shape: vec![1, h, w],
            data: self.data[c * plane..(c + 1) * plane].to_vec(),
        })
    }

    /// Concatenate `C_i x H x W` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("concat_channels of nothing".into()))?;
        let (_, _, h, w) = first.chw()?;
        let mut c_total = 0;
        let mut data = Vec::new();
        for p in parts {
            let (n, c, ph, pw) = p.chw()?;
            if n != 1 || ph != h || pw != w {
                return Err(Error::shape(
                    "concat_channels",
                    "spatial extent",
                    format!("{:?} vs {:?}", first.shape, p.shape),
                ));
            }
            c_total += c;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            shape: vec![c_total, h, w],
            data,
        })
    }

    /// Repeat a single-channel image `times` along the channel axis.
    pub fn replicate_channels(&self, times: usize) -> Result<Self> {
        let parts: Vec<&Tensor<T>> = std::iter::repeat_n(self, times).collect();
        Self::concat_channels(&parts)
    }

    /// Spatial window `[y0, y0+h) x [x0, x0+w)` of a `C x H x W` tensor.
    /// Coordinates outside the source read `fill`.
    pub fn crop(&self, y0: isize, x0: isize, h: usize, w: usize, fill: T) -> Result<Self> {
        let (n, c, sh, sw) = self.chw()?;
        if n != 1 {
            return Err(Error::shape("crop", "batch", format!("{:?}", self.shape)));
        }
        let mut out = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for y in 0..h as isize {
                let sy = y0 + y;
                for x in 0..w as isize {
                    let sx = x0 + x;
                    if sy < 0 || sx < 0 || sy >= sh as isize || sx >= sw as isize {
                        out.push(fill);
                    } else {
                        out.push(self.data[(ch * sh + sy as usize) * sw + sx as usize]);
                    }
                }
            }
        }
        Ok(Tensor {
            shape: vec![c, h, w],
            data: out,
        })
    }

    /// Zero padding on all four sides.
    pub fn pad_zero(&self, top: usize, bottom: usize, left: usize, right: usize) -> Result<Self> {
        let (_, _, h, w) = self.chw()?;
        self.crop(
            -(top as isize),
            -(left as isize),
            h + top + bottom,
            w + left + right,
            T::zero(),
        )
    }

    /// Mirror padding (edge pixel not repeated) on the bottom and right sides.
    pub fn pad_reflect_br(&self, bottom: usize, right: usize) -> Result<Self> {
        let (n, c, h, w) = self.chw()?;
        if n != 1 {
            return Err(Error::shape("pad_reflect_br", "batch", format!("{:?}", self.shape)));
        }
        let reflect = |i: usize, len: usize| -> usize {
            if len == 1 {
                return 0;
            }
            let period = 2 * (len - 1);
            let m = i % period;
            if m < len {
                m
            } else {
                period - m
            }
        };
        let (oh, ow) = (h + bottom, w + right);
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                let sy = reflect(y, h);
                for x in 0..ow {
                    out.push(self.data[(ch * h + sy) * w + reflect(x, w)]);
                }
            }
        }
        Ok(Tensor {
            shape: vec![c, oh, ow],
            data: out,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.data.len().max(1)).unwrap()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<T> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub(crate) fn expect_same_shape(&self, other: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                "shape",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(())
    }
}
