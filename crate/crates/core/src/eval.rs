//! RMSE and benchmark reports.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::data::{SamplePair, BICUBIC_A};
use crate::error::{Error, Result};
use crate::nets::AnyModel;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Value scaling applied before the error is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scaling {
    /// Depth in metres, error in centimetres.
    Centimeters,
    /// Normalised `[0, 1]` depth mapped to `[0, 255]`.
    #[default]
    Range255,
}

impl Scaling {
    pub fn factor(self) -> f64 {
        match self {
            Scaling::Centimeters => 100.0,
            Scaling::Range255 => 255.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scaling::Centimeters => "centimeters",
            Scaling::Range255 => "range255",
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centimeters" | "cm" => Ok(Scaling::Centimeters),
            "range255" => Ok(Scaling::Range255),
            _ => Err(Error::Invalid(format!("unknown scaling {s:?} (centimeters|range255)"))),
        }
    }
}

/// Root mean squared error over pixels where `mask` (if any) is nonzero.
pub fn rmse<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, scaling: Scaling, mask: Option<&Tensor<T>>) -> Result<f64> {
    pred.expect_same_shape(gt, "rmse")?;
    if let Some(m) = mask {
        m.expect_same_shape(gt, "rmse mask")?;
    }
    let s = scaling.factor();
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if mask.is_some_and(|m| m.data()[i] == T::zero()) {
            continue;
        }
        let d = (pred.data()[i].as_f64() - gt.data()[i].as_f64()) * s;
        sum += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Invalid("rmse: empty mask".into()));
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageResult {
    pub index: usize,
    pub rmse: f64,
    /// Error of the degraded input itself.
    pub baseline_rmse: f64,
    pub seconds: f64,
    pub passes: usize,
    pub padded: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub arch: String,
    pub protocol: String,
    pub scale: usize,
    pub noise_var: f64,
    pub scaling: Scaling,
    pub images: Vec<ImageResult>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl EvalReport {
    pub fn mean_rmse(&self) -> f64 {
        mean(self.images.iter().map(|r| r.rmse))
    }

    pub fn mean_baseline_rmse(&self) -> f64 {
        mean(self.images.iter().map(|r| r.baseline_rmse))
    }

    pub fn mean_seconds(&self) -> f64 {
        mean(self.images.iter().map(|r| r.seconds))
    }

    /// Relative RMSE reduction against the degraded input.
    pub fn improvement(&self) -> f64 {
        1.0 - self.mean_rmse() / self.mean_baseline_rmse()
    }

    pub fn render_text(&self) -> String {
        let mut s = format!(
            "# {} | protocol {} x{} | noise_var {} | scaling {} | bicubic a={}\n",
            self.arch, self.protocol, self.scale, self.noise_var, self.scaling, BICUBIC_A
        );
        for r in &self.images {
            s.push_str(&format!(
                "image {:>4}  rmse {:>10.5}  baseline {:>10.5}  time {:>8.4}s  passes {:>2}  processed {}x{}\n",
                r.index, r.rmse, r.baseline_rmse, r.seconds, r.passes, r.padded.0, r.padded.1
            ));
        }
        s.push_str(&format!(
            "mean rmse {:.5}  baseline {:.5}  improvement {:.2}%  time {:.4}s/image\n",
            self.mean_rmse(),
            self.mean_baseline_rmse(),
            100.0 * self.improvement(),
            self.mean_seconds()
        ));
        s
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        kv.insert("arch".into(), self.arch.clone());
        kv.insert("protocol".into(), self.protocol.clone());
        kv.insert("scale".into(), self.scale.to_string());
        kv.insert("noise_var".into(), self.noise_var.to_string());
        kv.insert("scaling".into(), self.scaling.to_string());
        kv.insert("bicubic_a".into(), BICUBIC_A.to_string());
        kv.insert("images".into(), self.images.len().to_string());
        kv.insert("mean_rmse".into(), self.mean_rmse().to_string());
        kv.insert("mean_baseline_rmse".into(), self.mean_baseline_rmse().to_string());
        kv.insert("mean_seconds".into(), self.mean_seconds().to_string());
        for r in &self.images {
            let p = format!("image.{}", r.index);
            kv.insert(format!("{p}.rmse"), r.rmse.to_string());
            kv.insert(format!("{p}.baseline_rmse"), r.baseline_rmse.to_string());
            kv.insert(format!("{p}.seconds"), r.seconds.to_string());
            kv.insert(format!("{p}.passes"), r.passes.to_string());
            kv.insert(format!("{p}.padded"), format!("{}x{}", r.padded.0, r.padded.1));
        }
        kv
    }
}

/// Filter every pair and score it against ground truth.
pub fn benchmark<T: Scalar>(model: &AnyModel<T>, pairs: &[SamplePair<T>], scaling: Scaling) -> Result<EvalReport> {
    let mut images = Vec::with_capacity(pairs.len());
    for (index, p) in pairs.iter().enumerate() {
        let start = Instant::now();
        let inf = model.infer(&p.guidance, &p.target)?;
        let seconds = start.elapsed().as_secs_f64();
        images.push(ImageResult {
            index,
            rmse: rmse(&inf.output, &p.ground_truth, scaling, None)?,
            baseline_rmse: rmse(&p.target, &p.ground_truth, scaling, None)?,
            seconds,
            passes: inf.passes,
            padded: inf.padded,
        });
    }
    let d = pairs.first().map(|p| p.degradation).unwrap_or_default();
    Ok(EvalReport {
        arch: model.arch().to_string(),
        protocol: d.protocol.to_string(),
        scale: d.scale,
        noise_var: d.noise_var,
        scaling,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_prediction_scores_zero() {
        let t = Tensor::<f64>::from_fn(&[1, 4, 4], |i| i as f64 / 16.0);
        assert_eq!(rmse(&t, &t, Scaling::Range255, None).unwrap(), 0.0);
    }

    #[test]
    fn constant_error() {
        let gt = Tensor::<f64>::zeros(&[1, 5, 5]);
        let pred = Tensor::full(&[1, 5, 5], 2.0 / 255.0);
        assert!((rmse(&pred, &gt, Scaling::Range255, None).unwrap() - 2.0).abs() < 1e-12);
        let pred = Tensor::full(&[1, 5, 5], 0.02);
        assert!((rmse(&pred, &gt, Scaling::Centimeters, None).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_error_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = Normal::new(0.0, 0.01).unwrap();
        let gt = Tensor::<f64>::full(&[1, 400, 400], 0.5);
        let pred = Tensor::from_fn(&[1, 400, 400], |_| 0.5 + n.sample(&mut rng));
        let r = rmse(&pred, &gt, Scaling::Range255, None).unwrap();
        assert!((r / 2.55 - 1.0).abs() < 0.02, "{r}");
    }

    #[test]
    fn mask_selects_pixels() {
        let gt = Tensor::<f64>::zeros(&[1, 1, 2]);
        let pred = Tensor::from_f64(&[1, 1, 2], &[0.0, 1.0]).unwrap();
        let mask = Tensor::from_f64(&[1, 1, 2], &[1.0, 0.0]).unwrap();
        assert_eq!(rmse(&pred, &gt, Scaling::Range255, Some(&mask)).unwrap(), 0.0);
        let empty = Tensor::zeros(&[1, 1, 2]);
        assert!(rmse(&pred, &gt, Scaling::Range255, Some(&empty)).is_err());
    }

    #[test]
    fn permutation_invariant_and_linear() {
        let gt = Tensor::<f64>::from_fn(&[1, 1, 6], |i| i as f64 * 0.1);
        let pred = Tensor::<f64>::from_fn(&[1, 1, 6], |i| i as f64 * 0.1 + [0.01, -0.02, 0.0, 0.03, 0.01, -0.01][i]);
        let r = rmse(&pred, &gt, Scaling::Range255, None).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let gp = Tensor::from_fn(&[1, 1, 6], |i| gt.data()[perm[i]]);
        let pp = Tensor::from_fn(&[1, 1, 6], |i| pred.data()[perm[i]]);
        assert!((rmse(&pp, &gp, Scaling::Range255, None).unwrap() - r).abs() < 1e-12);
        let p3 = gt.zip_map(&pred, |g, p| g + 3.0 * (p - g)).unwrap();
        assert!((rmse(&p3, &gt, Scaling::Range255, None).unwrap() - 3.0 * r).abs() < 1e-9);
    }
}
