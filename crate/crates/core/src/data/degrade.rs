//! Resampling and noise used to turn ground-truth depth into network inputs.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Keys cubic convolution parameter.
pub const BICUBIC_A: f64 = -0.5;

fn keys(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four source indices and weights for every output position along one axis.
fn bicubic_taps(n_in: usize, n_out: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let base = src.floor();
            let t = src - base;
            let mut idx = [0; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let i = base as isize + k as isize - 1;
                idx[k] = i.clamp(0, n_in as isize - 1) as usize;
                w[k] = keys(t - (k as f64 - 1.0));
            }
            (idx, w)
        })
        .collect()
}

/// Separable Keys bicubic resize with border clamping and no antialiasing prefilter.
pub fn bicubic_resize<T: Scalar>(image: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = image.chw()?;
    if n != 1 || out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::Invalid(format!(
            "bicubic_resize: cannot resize {:?} to {out_h} x {out_w}",
            image.shape()
        )));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let tx = bicubic_taps(w, out_w);
    let ty = bicubic_taps(h, out_h);
    let src = image.data();
    let mut rows = vec![0.0f64; c * h * out_w];
    for ch in 0..c {
        for y in 0..h {
            let row = &src[(ch * h + y) * w..][..w];
            for (x, (idx, wt)) in tx.iter().enumerate() {
                rows[(ch * h + y) * out_w + x] = (0..4).map(|k| wt[k] * row[idx[k]].as_f64()).sum();
            }
        }
    }
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        for (idx, wt) in &ty {
            for x in 0..out_w {
                let v: f64 = (0..4).map(|k| wt[k] * rows[(ch * h + idx[k]) * out_w + x]).sum();
                out.push(T::lit(v));
            }
        }
    }
    let shape = if image.ndim() == 4 {
        vec![1, c, out_h, out_w]
    } else {
        vec![c, out_h, out_w]
    };
    Tensor::from_vec(&shape, out)
}

fn check_divisible<T: Scalar>(image: &Tensor<T>, s: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    let (_, c, h, w) = image.chw()?;
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::shape(op, "spatial extent", format!("{h} x {w} is not divisible by {s}")));
    }
    Ok((c, h, w))
}

/// Keep the bottom-right pixel of every `s x s` block.
pub fn nearest_downsample_rb<T: Scalar>(image: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let (c, h, w) = check_divisible(image, s, "nearest_downsample_rb")?;
    let (oh, ow) = (h / s, w / s);
    Ok(Tensor::from_fn(&[c, oh, ow], |k| {
        let (ch, i, j) = (k / (oh * ow), (k / ow) % oh, k % ow);
        image.at3(ch, s * i + s - 1, s * j + s - 1)
    }))
}

/// Zero-mean Gaussian noise of the given variance, clamped to `[0, 1]`.
pub fn add_gaussian_noise<T: Scalar>(depth: &Tensor<T>, variance: f64, seed: u64) -> Result<Tensor<T>> {
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::Invalid(format!("noise variance must be >= 0, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(depth.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = depth.clone();
    for v in out.data_mut() {
        *v = T::lit((v.as_f64() + normal.sample(&mut rng)).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// How the low-resolution target is produced from ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Protocol {
    #[default]
    Bicubic,
    NearestRb,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Bicubic => "bicubic",
            Protocol::NearestRb => "nearest_rb",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bicubic" => Ok(Protocol::Bicubic),
            "nearest_rb" => Ok(Protocol::NearestRb),
            _ => Err(Error::Invalid(format!("unknown protocol {s:?} (bicubic|nearest_rb)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Degradation {
    pub protocol: Protocol,
    pub scale: usize,
    pub noise_var: f64,
}

impl Default for Degradation {
    fn default() -> Self {
        Degradation {
            protocol: Protocol::Bicubic,
            scale: 4,
            noise_var: 0.0,
        }
    }
}

/// Aligned network inputs and ground truth, all `H x W`.
#[derive(Clone, Debug)]
pub struct SamplePair<T> {
    pub guidance: Tensor<T>,
    /// Degraded depth, upsampled back to full resolution.
    pub target: Tensor<T>,
    pub ground_truth: Tensor<T>,
    pub degradation: Degradation,
}

/// Downsample by protocol, optionally add noise at low resolution, upsample bicubically.
pub fn make_training_pair<T: Scalar>(
    rgb: &Tensor<T>,
    depth: &Tensor<T>,
    degradation: Degradation,
    seed: u64,
) -> Result<SamplePair<T>> {
    let s = degradation.scale;
    let (_, h, w) = check_divisible(depth, s, "make_training_pair")?;
    let (_, _, gh, gw) = rgb.chw()?;
    if (gh, gw) != (h, w) {
        return Err(Error::shape(
            "make_training_pair",
            "spatial extent",
            format!("rgb is {gh} x {gw}, depth is {h} x {w}"),
        ));
    }
    let low = match degradation.protocol {
        Protocol::Bicubic => bicubic_resize(depth, h / s, w / s)?,
        Protocol::NearestRb => nearest_downsample_rb(depth, s)?,
    };
    let low = add_gaussian_noise(&low, degradation.noise_var, seed)?;
    Ok(SamplePair {
        guidance: rgb.clone(),
        target: bicubic_resize(&low, h, w)?,
        ground_truth: depth.clone(),
        degradation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_taps_partition_unity() {
        for (n_in, n_out) in [(7, 3), (10, 40), (96, 24), (5, 5)] {
            for (_, w) in bicubic_taps(n_in, n_out) {
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_size_is_identity() {
        let t = Tensor::<f32>::from_fn(&[1, 6, 5], |i| (i as f32).sqrt());
        assert_eq!(bicubic_resize(&t, 6, 5).unwrap(), t);
    }

    #[test]
    fn constant_stays_constant() {
        let t = Tensor::<f64>::full(&[2, 8, 12], 0.37);
        let r = bicubic_resize(&t, 5, 17).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn ramp_survives_down_and_up() {
        let t = Tensor::<f64>::from_fn(&[1, 32, 32], |i| (i % 32) as f64 * 0.1 + (i / 32) as f64 * 0.05);
        let back = bicubic_resize(&bicubic_resize(&t, 16, 16).unwrap(), 32, 32).unwrap();
        for y in 4..28 {
            for x in 4..28 {
                assert!((back.at3(0, y, x) - t.at3(0, y, x)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn nearest_rb_examples() {
        let t = Tensor::<f64>::from_f64(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(nearest_downsample_rb(&t, 2).unwrap().data(), &[4.0]);
        assert_eq!(nearest_downsample_rb(&t, 1).unwrap(), t);
        let ramp = Tensor::<f64>::from_fn(&[1, 4, 4], |i| i as f64);
        assert_eq!(nearest_downsample_rb(&ramp, 4).unwrap().data(), &[15.0]);
        assert!(nearest_downsample_rb(&ramp, 3).is_err());
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let t = Tensor::<f64>::full(&[1, 1000, 1000], 0.5);
        assert_eq!(add_gaussian_noise(&t, 0.0, 1).unwrap(), t);
        let a = add_gaussian_noise(&t, 0.005, 42).unwrap();
        let var = a.data().iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / a.len() as f64;
        assert!((var / 0.005 - 1.0).abs() < 0.05, "variance {var}");
        assert_eq!(a, add_gaussian_noise(&t, 0.005, 42).unwrap());
    }

    #[test]
    fn pair_composition() {
        let ramp = Tensor::<f64>::from_fn(&[1, 4, 4], |i| i as f64);
        let rgb = Tensor::zeros(&[3, 4, 4]);
        let d = Degradation {
            protocol: Protocol::NearestRb,
            scale: 4,
            noise_var: 0.0,
        };
        let p = make_training_pair(&rgb, &ramp, d, 0).unwrap();
        assert!(p.target.data().iter().all(|&v| v == 15.0));

        let flat = Tensor::<f64>::full(&[1, 8, 8], 0.3);
        let d = Degradation {
            protocol: Protocol::Bicubic,
            scale: 4,
            noise_var: 0.0,
        };
        let p = make_training_pair(&Tensor::zeros(&[3, 8, 8]), &flat, d, 0).unwrap();
        assert!(p.target.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));

        let d = Degradation {
            scale: 1,
            ..Degradation::default()
        };
        let p = make_training_pair(&rgb, &ramp, d, 0).unwrap();
        assert_eq!(p.target, ramp);
    }
}
