//! Two-stream kernel prediction: feature towers, weight/offset heads, and the
//! deformable weighted average on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Arch, Constraint, DknConfig, FdknConfig, ModelConfig, Streams};
use super::layers::{receptive_field, support, total_stride, ConvLayer, LayerSpec, Mode, Pass, Stream};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::filter::{JointFilter, KernelField, OutputGrid};
use crate::param::ParamStore;
use crate::resample::pixel_unshuffle;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

thread_local! {
    static SKIP_MEAN_SUBTRACTION: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// Fault-injection hook for self-tests: while set, the residual weight head on this thread
/// skips its mean subtraction.
#[doc(hidden)]
pub fn inject_broken_mean_subtraction(enabled: bool) {
    SKIP_MEAN_SUBTRACTION.with(|c| c.set(enabled));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    Guidance,
    Target,
}

/// Graph handles produced by one region forward.
#[derive(Clone, Copy, Debug)]
pub struct RegionOutput {
    /// Filtered values on the output grid, `1 x h x w`.
    pub filtered: Var,
    /// Constrained kernel weights, `k^2 x h x w`.
    pub weights: Var,
    /// Sampling offsets, `2k^2 x h x w`; `None` when offsets are not learned.
    pub offsets: Option<Var>,
}

/// Initial scale of the weight-head convolutions relative to Kaiming.
pub const WEIGHT_HEAD_GAIN: f64 = 0.0;
/// Initial scale of the offset-head convolutions relative to Kaiming.
pub const OFFSET_HEAD_GAIN: f64 = 0.1;

/// Shared machinery of both architectures.
#[derive(Clone, Debug)]
pub(crate) struct Engine<T> {
    pub config: DknConfig,
    pub params: ParamStore<T>,
    pub layers: Vec<LayerSpec>,
    guidance: Option<Stream>,
    target: Option<Stream>,
    weight_heads: Vec<(StreamKind, ConvLayer)>,
    offset_heads: Vec<(StreamKind, ConvLayer)>,
    /// Sub-pixel factor of the head outputs (1 for DKN).
    pub shuffle: usize,
}

impl<T: Scalar> Engine<T> {
    fn build(
        config: DknConfig,
        layers: Vec<LayerSpec>,
        inputs: (usize, usize),
        shuffle: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let feat = layers.last().map(|l| l.out_channels).unwrap_or(0);
        let kk = config.k * config.k * shuffle * shuffle;
        let enabled = |kind| {
            matches!(
                (config.streams, kind),
                (Streams::Both, _)
                    | (Streams::GuidanceOnly, StreamKind::Guidance)
                    | (Streams::TargetOnly, StreamKind::Target)
            )
        };
        let guidance = enabled(StreamKind::Guidance)
            .then(|| Stream::new(&mut params, "guidance", inputs.0, &layers, &mut rng));
        let target = enabled(StreamKind::Target)
            .then(|| Stream::new(&mut params, "target", inputs.1, &layers, &mut rng));
        let kinds: Vec<StreamKind> = [StreamKind::Guidance, StreamKind::Target]
            .into_iter()
            .filter(|&k| enabled(k))
            .collect();
        let tag = |k: StreamKind| match k {
            StreamKind::Guidance => "guidance",
            StreamKind::Target => "target",
        };
        let weight_heads: Vec<(StreamKind, ConvLayer)> = kinds
            .iter()
            .map(|&k| {
                let name = format!("weight_head.{}", tag(k));
                (k, ConvLayer::new(&mut params, &name, feat, LayerSpec::head(kk), &mut rng))
            })
            .collect();
        let offset_heads: Vec<(StreamKind, ConvLayer)> = if config.learn_offsets {
            kinds
                .iter()
                .map(|&k| {
                    let name = format!("offset_head.{}", tag(k));
                    (k, ConvLayer::new(&mut params, &name, feat, LayerSpec::head(2 * kk), &mut rng))
                })
                .collect()
        } else {
            Vec::new()
        };
        // start at the identity filter with near-regular sampling
        for (_, h) in &weight_heads {
            h.scale_weight(&mut params, WEIGHT_HEAD_GAIN);
        }
        for (_, h) in &offset_heads {
            h.scale_weight(&mut params, OFFSET_HEAD_GAIN);
        }
        Ok(Engine {
            config,
            params,
            layers,
            guidance,
            target,
            weight_heads,
            offset_heads,
            shuffle,
        })
    }

    pub fn stream(&self, kind: StreamKind) -> Option<&Stream> {
        match kind {
            StreamKind::Guidance => self.guidance.as_ref(),
            StreamKind::Target => self.target.as_ref(),
        }
    }

    /// Run both towers on prepared network inputs.
    fn features(&self, pass: &mut Pass<'_, T>, guidance: Tensor<T>, target: Tensor<T>) -> Result<[Option<Var>; 2]> {
        let mut out = [None, None];
        if let Some(s) = &self.guidance {
            let x = pass.graph.constant(guidance);
            out[0] = Some(s.forward(pass, &self.params, x)?);
        }
        if let Some(s) = &self.target {
            let x = pass.graph.constant(target);
            out[1] = Some(s.forward(pass, &self.params, x)?);
        }
        Ok(out)
    }

    fn pick(features: &[Option<Var>; 2], kind: StreamKind) -> Result<Var> {
        let v = match kind {
            StreamKind::Guidance => features[0],
            StreamKind::Target => features[1],
        };
        v.ok_or_else(|| Error::Invalid(format!("{kind:?} stream features missing")))
    }

    /// Sigmoid per stream, elementwise product across streams, sub-pixel recomposition,
    /// then the zero-sum or unit-sum constraint.
    pub fn weight_head(&self, pass: &mut Pass<'_, T>, features: &[Option<Var>; 2]) -> Result<Var> {
        let mut combined: Option<Var> = None;
        for (kind, head) in &self.weight_heads {
            let z = head.forward(pass, &self.params, Self::pick(features, *kind)?)?;
            let s = pass.graph.sigmoid(z)?;
            combined = Some(match combined {
                Some(c) => pass.graph.mul(c, s)?,
                None => s,
            });
        }
        let mut w = combined.ok_or_else(|| Error::Invalid("no weight head".into()))?;
        if self.shuffle > 1 {
            w = pass.graph.pixel_shuffle(w, self.shuffle)?;
        }
        match self.config.constraint {
            Constraint::MeanSubtract if SKIP_MEAN_SUBTRACTION.with(|c| c.get()) => Ok(w),
            Constraint::MeanSubtract => pass.graph.mean_subtract_channels(w),
            Constraint::L1Normalize => pass.graph.l1_normalize_channels(w),
        }
    }

    /// Raw offsets: elementwise product of the per-stream 1x1 regressions, no activation.
    pub fn offset_head(&self, pass: &mut Pass<'_, T>, features: &[Option<Var>; 2]) -> Result<Option<Var>> {
        let mut combined: Option<Var> = None;
        for (kind, head) in &self.offset_heads {
            let z = head.forward(pass, &self.params, Self::pick(features, *kind)?)?;
            combined = Some(match combined {
                Some(c) => pass.graph.mul(c, z)?,
                None => z,
            });
        }
        match combined {
            Some(o) if self.shuffle > 1 => Ok(Some(pass.graph.pixel_shuffle(o, self.shuffle)?)),
            other => Ok(other),
        }
    }

    /// Heads plus the weighted average of `sample` on `grid`.
    fn filter_from_features(
        &self,
        pass: &mut Pass<'_, T>,
        features: &[Option<Var>; 2],
        sample: Var,
        grid: OutputGrid,
    ) -> Result<RegionOutput> {
        let weights = self.weight_head(pass, features)?;
        let offsets = self.offset_head(pass, features)?;
        let shape = pass.graph.shape(weights);
        if shape[1] != grid.h || shape[2] != grid.w {
            return Err(Error::shape(
                "kernel field",
                "spatial extent",
                format!("network produced {} x {}, grid is {} x {}", shape[1], shape[2], grid.h, grid.w),
            ));
        }
        let kk = self.config.k * self.config.k;
        let off_var = match offsets {
            Some(o) => o,
            None => pass.graph.constant(Tensor::zeros(&[2 * kk, grid.h, grid.w])),
        };
        let filtered = pass
            .graph
            .deformable_filter(sample, weights, off_var, self.config.filter_spec(), grid)?;
        Ok(RegionOutput {
            filtered,
            weights,
            offsets,
        })
    }

    fn prepare_guidance(&self, guidance: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, _, _) = guidance.chw()?;
        let want = self.config.guidance_channels;
        match c {
            _ if c == want => Ok(guidance.clone()),
            1 => guidance.replicate_channels(want),
            _ => Err(Error::shape(
                "guidance",
                "channels",
                format!("model expects {want} guidance channels, got {c}"),
            )),
        }
    }

    fn check_pair(guidance: &Tensor<T>, target: &Tensor<T>) -> Result<(usize, usize)> {
        let (_, _, gh, gw) = guidance.chw()?;
        let (n, c, h, w) = target.chw()?;
        if n != 1 || c != 1 {
            return Err(Error::shape(
                "target",
                "channels",
                format!("expected 1 x H x W, got {:?}", target.shape()),
            ));
        }
        if (gh, gw) != (h, w) {
            return Err(Error::shape(
                "joint filter",
                "spatial extent",
                format!("guidance is {gh} x {gw}, target is {h} x {w}"),
            ));
        }
        Ok((h, w))
    }
}

/// Common interface of the trainable filters.
pub trait Model<T: Scalar>: JointFilter<T> {
    fn model_config(&self) -> ModelConfig;
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;
    /// Network evaluations needed for one full-resolution image.
    fn passes_per_image(&self) -> usize;
    /// Random training window of roughly `extent x extent` pixels inside an `h x w` image.
    fn training_grid(&self, h: usize, w: usize, extent: usize, rng: &mut dyn rand::RngCore) -> Result<OutputGrid>;
    /// Kernel prediction and filtering for the pixels of `grid`. `sample` is the graph
    /// handle of `target`.
    fn forward_region(
        &self,
        pass: &mut Pass<'_, T>,
        guidance: &Tensor<T>,
        target: &Tensor<T>,
        sample: Var,
        grid: OutputGrid,
    ) -> Result<RegionOutput>;
}

/// Deformable kernel network with stride-4 feature towers (51 x 51 receptive field).
#[derive(Clone, Debug)]
pub struct Dkn<T> {
    engine: Engine<T>,
}

impl<T: Scalar> Dkn<T> {
    pub fn new(config: DknConfig, seed: u64) -> Result<Self> {
        let layers = config.dkn_layers()?;
        let inputs = (config.guidance_channels, 1);
        Ok(Dkn {
            engine: Engine::build(config, layers, inputs, 1, seed)?,
        })
    }

    pub fn config(&self) -> &DknConfig {
        &self.engine.config
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.engine.layers
    }

    /// Odd patch side centred on a pixel that covers everything its kernel depends on.
    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.engine.layers)
    }

    pub fn stride(&self) -> usize {
        total_stride(&self.engine.layers)
    }

    /// Padding in front of the first output so that output `(i, j)` belongs to pixel
    /// `(stride * i, stride * j)`.
    pub fn lead_padding(&self) -> usize {
        (self.receptive_field() - 1) / 2
    }

    /// Network input extent for `n` outputs along one axis.
    pub fn input_extent(&self, n: usize) -> usize {
        self.stride() * (n.max(1) - 1) + support(&self.engine.layers)
    }

    /// Feature tower on one receptive-field patch (`D x rf x rf`), returning the
    /// per-layer outputs; the last one is `C x 1 x 1`.
    pub fn features_trace(
        &self,
        pass: &mut Pass<'_, T>,
        kind: StreamKind,
        patch: &Tensor<T>,
    ) -> Result<Vec<Var>> {
        let rf = self.receptive_field();
        let (_, _, h, w) = patch.chw()?;
        if h != rf || w != rf {
            return Err(Error::shape(
                "dkn_features",
                "patch",
                format!("expected {rf} x {rf}, got {h} x {w}"),
            ));
        }
        let stream = self
            .engine
            .stream(kind)
            .ok_or_else(|| Error::Invalid(format!("{kind:?} stream disabled")))?;
        let x = pass.graph.constant(patch.clone());
        stream.forward_trace(pass, &self.engine.params, x)
    }

    pub fn features(&self, pass: &mut Pass<'_, T>, kind: StreamKind, patch: &Tensor<T>) -> Result<Var> {
        let trace = self.features_trace(pass, kind, patch)?;
        trace
            .last()
            .copied()
            .ok_or_else(|| Error::Invalid("empty feature tower".into()))
    }

    /// Weight regression from `C x 1 x 1` features of each stream.
    pub fn weight_head(&self, pass: &mut Pass<'_, T>, guidance: Option<Var>, target: Option<Var>) -> Result<Var> {
        self.engine.weight_head(pass, &[guidance, target])
    }

    pub fn offset_head(
        &self,
        pass: &mut Pass<'_, T>,
        guidance: Option<Var>,
        target: Option<Var>,
    ) -> Result<Option<Var>> {
        self.engine.offset_head(pass, &[guidance, target])
    }

    /// Forward on network inputs that are already padded and aligned with `grid`.
    pub fn forward_inputs(
        &self,
        pass: &mut Pass<'_, T>,
        guidance_in: Tensor<T>,
        target_in: Tensor<T>,
        sample: Var,
        grid: OutputGrid,
    ) -> Result<RegionOutput> {
        let guidance_in = self.engine.prepare_guidance(&guidance_in)?;
        let features = self.engine.features(pass, guidance_in, target_in)?;
        self.engine.filter_from_features(pass, &features, sample, grid)
    }

    /// Per-pixel reference evaluation: the network on the receptive-field patch centred on
    /// each pixel, one pixel at a time.
    pub fn infer_per_pixel(&self, guidance: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = Engine::<T>::check_pair(guidance, target)?;
        let rf = self.receptive_field();
        let half = (rf / 2) as isize;
        let mut out = Tensor::zeros(&[1, h, w]);
        for y in 0..h {
            for x in 0..w {
                let mut g = Graph::inference();
                let mut pass = Pass::new(&mut g, Mode::Eval);
                let sample = pass.graph.constant(target.clone());
                let gp = guidance.crop(y as isize - half, x as isize - half, rf, rf, T::zero())?;
                let tp = target.crop(y as isize - half, x as isize - half, rf, rf, T::zero())?;
                let grid = OutputGrid {
                    y0: y,
                    x0: x,
                    stride: 1,
                    h: 1,
                    w: 1,
                };
                let r = self.forward_inputs(&mut pass, gp, tp, sample, grid)?;
                out.set3(0, y, x, pass.graph.value(r.filtered).data()[0]);
            }
        }
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> Dkn<U> {
        Dkn {
            engine: cast_engine(&self.engine),
        }
    }
}

fn cast_engine<T: Scalar, U: Scalar>(e: &Engine<T>) -> Engine<U> {
    Engine {
        config: e.config.clone(),
        params: e.params.cast(),
        layers: e.layers.clone(),
        guidance: e.guidance.clone(),
        target: e.target.clone(),
        weight_heads: e.weight_heads.clone(),
        offset_heads: e.offset_heads.clone(),
        shuffle: e.shuffle,
    }
}

impl<T: Scalar> Model<T> for Dkn<T> {
    fn model_config(&self) -> ModelConfig {
        ModelConfig::Dkn(self.engine.config.clone())
    }

    fn params(&self) -> &ParamStore<T> {
        &self.engine.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.engine.params
    }

    fn passes_per_image(&self) -> usize {
        self.stride() * self.stride()
    }

    fn training_grid(&self, h: usize, w: usize, extent: usize, rng: &mut dyn rand::RngCore) -> Result<OutputGrid> {
        let s = self.stride();
        let n = (extent / s).max(1);
        let span = s * (n - 1) + 1;
        if span > h || span > w {
            return Err(Error::Invalid(format!("training window {extent} does not fit {h} x {w}")));
        }
        Ok(OutputGrid {
            y0: rng.random_range(0..=h - span),
            x0: rng.random_range(0..=w - span),
            stride: s,
            h: n,
            w: n,
        })
    }

    fn forward_region(
        &self,
        pass: &mut Pass<'_, T>,
        guidance: &Tensor<T>,
        target: &Tensor<T>,
        sample: Var,
        grid: OutputGrid,
    ) -> Result<RegionOutput> {
        Engine::<T>::check_pair(guidance, target)?;
        if grid.stride != self.stride() {
            return Err(Error::Invalid(format!(
                "DKN grid stride must be {}, got {}",
                self.stride(),
                grid.stride
            )));
        }
        let lead = self.lead_padding() as isize;
        let (eh, ew) = (self.input_extent(grid.h), self.input_extent(grid.w));
        let (y0, x0) = (grid.y0 as isize - lead, grid.x0 as isize - lead);
        let gi = guidance.crop(y0, x0, eh, ew, T::zero())?;
        let ti = target.crop(y0, x0, eh, ew, T::zero())?;
        self.forward_inputs(pass, gi, ti, sample, grid)
    }
}

impl<T: Scalar> JointFilter<T> for Dkn<T> {
    fn filter(&self, guidance: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(crate::stitch::infer_shift_and_stitch(self, guidance, target)?.output)
    }
}

/// Fast variant: stride-4 space-to-channel resampling, six 3 x 3 layers, one pass.
#[derive(Clone, Debug)]
pub struct Fdkn<T> {
    engine: Engine<T>,
    stride: usize,
}

impl<T: Scalar> Fdkn<T> {
    pub fn new(config: FdknConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = config.base.fdkn_layers()?;
        let r2 = config.stride * config.stride;
        let inputs = (config.base.guidance_channels * r2, r2);
        Ok(Fdkn {
            engine: Engine::build(config.base, layers, inputs, config.stride, seed)?,
            stride: config.stride,
        })
    }

    pub fn config(&self) -> FdknConfig {
        FdknConfig {
            base: self.engine.config.clone(),
            stride: self.stride,
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.engine.layers
    }

    pub fn resample_stride(&self) -> usize {
        self.stride
    }

    /// Receptive field measured on the resampled grid.
    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.engine.layers)
    }

    /// Full-resolution zero padding in front of the first output.
    pub fn lead_padding(&self) -> usize {
        self.stride * (self.receptive_field() - 1) / 2
    }

    /// Kernel field for every full-resolution pixel from already resampled inputs
    /// (`16C x (H/4 + 2m) x (W/4 + 2m)` and `16 x ...`, `m` the resampled lead padding).
    pub fn kernel_field(&self, guidance_resampled: &Tensor<T>, target_resampled: &Tensor<T>) -> Result<KernelField<T>> {
        let mut g = Graph::inference();
        let mut pass = Pass::new(&mut g, Mode::Eval);
        let features = self
            .engine
            .features(&mut pass, guidance_resampled.clone(), target_resampled.clone())?;
        let w = self.engine.weight_head(&mut pass, &features)?;
        let o = self.engine.offset_head(&mut pass, &features)?;
        let weights = pass.graph.value(w).clone();
        match o {
            Some(o) => KernelField::new(self.engine.config.k, weights, pass.graph.value(o).clone()),
            None => KernelField::with_zero_offsets(self.engine.config.k, weights),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Fdkn<U> {
        Fdkn {
            engine: cast_engine(&self.engine),
            stride: self.stride,
        }
    }

    /// Resampled network inputs for a full-resolution window starting at `(y0, x0)`.
    fn resampled_inputs(
        &self,
        guidance: &Tensor<T>,
        target: &Tensor<T>,
        grid: &OutputGrid,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let lead = self.lead_padding();
        let (eh, ew) = (grid.h + 2 * lead, grid.w + 2 * lead);
        let (y0, x0) = (grid.y0 as isize - lead as isize, grid.x0 as isize - lead as isize);
        let guidance = self.engine.prepare_guidance(guidance)?;
        let gi = pixel_unshuffle(&guidance.crop(y0, x0, eh, ew, T::zero())?, self.stride)?;
        let ti = pixel_unshuffle(&target.crop(y0, x0, eh, ew, T::zero())?, self.stride)?;
        Ok((gi, ti))
    }
}

impl<T: Scalar> Model<T> for Fdkn<T> {
    fn model_config(&self) -> ModelConfig {
        ModelConfig::Fdkn(self.config())
    }

    fn params(&self) -> &ParamStore<T> {
        &self.engine.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.engine.params
    }

    fn passes_per_image(&self) -> usize {
        1
    }

    fn training_grid(&self, h: usize, w: usize, extent: usize, rng: &mut dyn rand::RngCore) -> Result<OutputGrid> {
        let r = self.stride;
        let n = (extent / r).max(1) * r;
        if n > h || n > w {
            return Err(Error::Invalid(format!("training window {extent} does not fit {h} x {w}")));
        }
        // origins stay on the resampling lattice so sub-pixel phases match inference
        Ok(OutputGrid {
            y0: r * rng.random_range(0..=(h - n) / r),
            x0: r * rng.random_range(0..=(w - n) / r),
            stride: 1,
            h: n,
            w: n,
        })
    }

    fn forward_region(
        &self,
        pass: &mut Pass<'_, T>,
        guidance: &Tensor<T>,
        target: &Tensor<T>,
        sample: Var,
        grid: OutputGrid,
    ) -> Result<RegionOutput> {
        Engine::<T>::check_pair(guidance, target)?;
        let r = self.stride;
        if grid.stride != 1 || !grid.h.is_multiple_of(r) || !grid.w.is_multiple_of(r) {
            return Err(Error::Invalid(format!(
                "FDKN grid must be dense with extents divisible by {r}, got {grid:?}"
            )));
        }
        let (gi, ti) = self.resampled_inputs(guidance, target, &grid)?;
        let features = self.engine.features(pass, gi, ti)?;
        self.engine.filter_from_features(pass, &features, sample, grid)
    }
}

impl<T: Scalar> JointFilter<T> for Fdkn<T> {
    fn filter(&self, guidance: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(crate::stitch::infer_single_pass(self, guidance, target)?.output)
    }
}

/// Either architecture, as stored in a checkpoint.
#[derive(Clone, Debug)]
pub enum AnyModel<T> {
    Dkn(Dkn<T>),
    Fdkn(Fdkn<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::Dkn(c) => AnyModel::Dkn(Dkn::new(c.clone(), seed)?),
            ModelConfig::Fdkn(c) => AnyModel::Fdkn(Fdkn::new(c.clone(), seed)?),
        })
    }

    pub fn arch(&self) -> Arch {
        match self {
            AnyModel::Dkn(_) => Arch::Dkn,
            AnyModel::Fdkn(_) => Arch::Fdkn,
        }
    }

    fn inner(&self) -> &dyn Model<T> {
        match self {
            AnyModel::Dkn(m) => m,
            AnyModel::Fdkn(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Model<T> {
        match self {
            AnyModel::Dkn(m) => m,
            AnyModel::Fdkn(m) => m,
        }
    }

    /// Filter one image, reporting how many network evaluations it took.
    pub fn infer(&self, guidance: &Tensor<T>, target: &Tensor<T>) -> Result<crate::stitch::Inference<T>> {
        match self {
            AnyModel::Dkn(m) => crate::stitch::infer_shift_and_stitch(m, guidance, target),
            AnyModel::Fdkn(m) => crate::stitch::infer_single_pass(m, guidance, target),
        }
    }
}

impl<T: Scalar> JointFilter<T> for AnyModel<T> {
    fn filter(&self, guidance: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
        self.inner().filter(guidance, target)
    }
}

impl<T: Scalar> Model<T> for AnyModel<T> {
    fn model_config(&self) -> ModelConfig {
        self.inner().model_config()
    }

    fn params(&self) -> &ParamStore<T> {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        self.inner_mut().params_mut()
    }

    fn passes_per_image(&self) -> usize {
        self.inner().passes_per_image()
    }

    fn training_grid(&self, h: usize, w: usize, extent: usize, rng: &mut dyn rand::RngCore) -> Result<OutputGrid> {
        self.inner().training_grid(h, w, extent, rng)
    }

    fn forward_region(
        &self,
        pass: &mut Pass<'_, T>,
        guidance: &Tensor<T>,
        target: &Tensor<T>,
        sample: Var,
        grid: OutputGrid,
    ) -> Result<RegionOutput> {
        self.inner().forward_region(pass, guidance, target, sample, grid)
    }
}
