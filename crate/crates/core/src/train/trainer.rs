//! Single-pair-batch training on random windows.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::{step_decay_lr, Adam, AdamConfig};
use crate::autodiff::Graph;
use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::filter::OutputGrid;
use crate::nets::{apply_bn_updates, Arch, Mode, Model, Pass};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    /// Divide the learning rate by `lr_decay_factor` every this many iterations;
    /// `None` means a quarter of `iterations`.
    pub lr_decay_every: Option<usize>,
    pub lr_decay_factor: f64,
    pub adam: AdamConfig,
    /// Side of the training window in full-resolution pixels, clipped to the image.
    pub crop: usize,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            lr: 1e-3,
            lr_decay_every: None,
            lr_decay_factor: 5.0,
            adam: AdamConfig::default(),
            crop: 64,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    /// Defaults with the window that suits `arch`: FDKN trains on whole 96 x 96 images.
    pub fn for_arch(arch: Arch) -> Self {
        let crop = match arch {
            Arch::Dkn => 64,
            Arch::Fdkn => 96,
        };
        TrainConfig {
            crop,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.lr_decay_factor.is_nan() || self.lr_decay_factor < 1.0 {
            return Err(Error::Invalid("lr_decay_factor must be >= 1".into()));
        }
        if self.crop == 0 {
            return Err(Error::Invalid("crop must be positive".into()));
        }
        Ok(())
    }

    pub fn decay_every(&self) -> usize {
        self.lr_decay_every.unwrap_or(self.iterations / 4)
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        step_decay_lr(self.lr, self.lr_decay_factor, self.decay_every(), iteration)
    }

    pub fn push_kv(&self, kv: &mut BTreeMap<String, String>) {
        kv.insert("iterations".into(), self.iterations.to_string());
        kv.insert("lr".into(), self.lr.to_string());
        kv.insert("lr_decay_every".into(), self.decay_every().to_string());
        kv.insert("lr_decay_factor".into(), self.lr_decay_factor.to_string());
        kv.insert("adam_beta1".into(), self.adam.beta1.to_string());
        kv.insert("adam_beta2".into(), self.adam.beta2.to_string());
        kv.insert("adam_eps".into(), self.adam.eps.to_string());
        kv.insert("crop".into(), self.crop.to_string());
        kv.insert("seed".into(), self.seed.to_string());
        kv.insert("batch_size".into(), "1".into());
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean absolute error per output pixel at every completed iteration.
    pub losses: Vec<f64>,
    pub iterations: usize,
}

impl TrainReport {
    /// Mean of the last `n` losses.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.losses[self.losses.len().saturating_sub(n)..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Ground truth at the centres of `grid`.
pub fn gather_grid<T: Scalar>(image: &Tensor<T>, grid: &OutputGrid) -> Tensor<T> {
    Tensor::from_fn(&[1, grid.h, grid.w], |k| {
        let (y, x) = grid.center(k / grid.w, k % grid.w);
        image.at3(0, y, x)
    })
}

/// One forward/backward on a window: accumulates parameter gradients and folds batch-norm
/// statistics into the running estimates. Returns the summed L1 loss and pixel count.
pub fn train_step<T: Scalar, M: Model<T> + ?Sized>(model: &mut M, pair: &SamplePair<T>, grid: OutputGrid) -> Result<(f64, usize)> {
    let mut graph = Graph::new();
    let mut pass = Pass::new(&mut graph, Mode::Train);
    let sample = pass.graph.constant(pair.target.clone());
    let out = model.forward_region(&mut pass, &pair.guidance, &pair.target, sample, grid)?;
    let gt = pass.graph.constant(gather_grid(&pair.ground_truth, &grid));
    let loss = pass.graph.l1_loss(out.filtered, gt)?;
    let updates = pass.take_bn_updates();
    let value = graph.value(loss).data()[0].as_f64();
    let grads = graph.backward(loss)?;
    let params = model.params_mut();
    params.zero_grad();
    grads.accumulate(params)?;
    apply_bn_updates(params, &updates);
    Ok((value, grid.h * grid.w))
}

/// Train in place. On divergence the model keeps the last finite parameters and the error
/// reports the iteration.
pub fn train<T: Scalar, M: Model<T> + ?Sized>(
    model: &mut M,
    data: &[SamplePair<T>],
    config: &TrainConfig,
    optimizer: &mut Adam<T>,
    mut log: impl FnMut(usize, f64, f64),
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() && config.iterations > 0 {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut report = TrainReport::default();
    let mut window = 0.0;
    for it in 0..config.iterations {
        let pair = &data[rng.random_range(0..data.len())];
        let (_, _, h, w) = pair.target.chw()?;
        let grid = model.training_grid(h, w, config.crop.min(h).min(w), &mut rng)?;
        let diverged = |loss: f64| Error::Diverged { iteration: it, loss };
        let (loss, n) = match train_step(model, pair, grid) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => return Err(diverged(f64::NAN)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || !model.params().iter().all(|(_, p)| p.grad.all_finite()) {
            return Err(diverged(loss));
        }
        let lr = config.lr_at(it);
        optimizer.step(model.params_mut(), lr)?;
        let per_pixel = loss / n as f64;
        report.losses.push(per_pixel);
        report.iterations = it + 1;
        window += per_pixel;
        if config.log_every > 0 && (it + 1) % config.log_every == 0 {
            log(it + 1, window / config.log_every as f64, lr);
            window = 0.0;
        }
    }
    Ok(report)
}

/// Fresh optimizer state for `model`.
pub fn new_optimizer<T: Scalar, M: Model<T> + ?Sized>(model: &M, config: &TrainConfig) -> Adam<T> {
    Adam::new(model.params(), config.adam)
}
