//! Convolution layers backed by a [`ParamStore`].

use rand::Rng;

use crate::autodiff::{BatchStats, BnMode, Graph, RunningStats, Var, BN_EPSILON, BN_MOMENTUM};
use crate::error::Result;
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One row of an architecture table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub batchnorm: bool,
    pub relu: bool,
}

impl LayerSpec {
    pub const fn conv(out_channels: usize, kernel: usize, batchnorm: bool) -> Self {
        LayerSpec {
            out_channels,
            kernel,
            stride: 1,
            batchnorm,
            relu: true,
        }
    }

    pub const fn down(out_channels: usize) -> Self {
        LayerSpec {
            out_channels,
            kernel: 2,
            stride: 2,
            batchnorm: false,
            relu: true,
        }
    }

    pub const fn head(out_channels: usize) -> Self {
        LayerSpec {
            out_channels,
            kernel: 1,
            stride: 1,
            batchnorm: false,
            relu: false,
        }
    }

    pub fn describe(&self) -> String {
        let mut s = if self.stride > 1 {
            format!("DownConv({0}x{0})", self.kernel)
        } else {
            format!("Conv({0}x{0})", self.kernel)
        };
        if self.batchnorm {
            s.push_str("-BN");
        }
        if self.relu {
            s.push_str("-ReLU");
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch statistics produced during a training forward, waiting to be folded into the
/// running estimates.
#[derive(Clone, Debug)]
pub struct BnUpdate<T> {
    mean: ParamId,
    var: ParamId,
    stats: BatchStats<T>,
}

/// A forward pass in progress: the graph plus side effects owed to the model.
pub struct Pass<'g, T> {
    pub graph: &'g mut Graph<T>,
    pub mode: Mode,
    pub(crate) bn_updates: Vec<BnUpdate<T>>,
}

impl<'g, T: Scalar> Pass<'g, T> {
    pub fn new(graph: &'g mut Graph<T>, mode: Mode) -> Self {
        Pass {
            graph,
            mode,
            bn_updates: Vec::new(),
        }
    }

    pub fn take_bn_updates(&mut self) -> Vec<BnUpdate<T>> {
        std::mem::take(&mut self.bn_updates)
    }
}

/// Fold training-mode batch statistics into the running estimates.
pub fn apply_bn_updates<T: Scalar>(store: &mut ParamStore<T>, updates: &[BnUpdate<T>]) {
    for u in updates {
        let mut rs = RunningStats {
            mean: store.get(u.mean).value.clone(),
            var: store.get(u.var).value.clone(),
        };
        rs.update(&u.stats, T::lit(BN_MOMENTUM));
        store.get_mut(u.mean).value = rs.mean;
        store.get_mut(u.var).value = rs.var;
    }
}

#[derive(Clone, Debug)]
struct BnParams {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct ConvLayer {
    pub spec: LayerSpec,
    weight: ParamId,
    bias: ParamId,
    bn: Option<BnParams>,
}

/// Kaiming-uniform (fan-in, ReLU gain) weights.
fn kaiming_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let fan_in: usize = shape[1..].iter().product();
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::rand_uniform(shape, -bound, bound, rng)
}

impl ConvLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        spec: LayerSpec,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            kaiming_uniform(&[spec.out_channels, in_channels, spec.kernel, spec.kernel], rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]));
        let bn = spec.batchnorm.then(|| {
            let c = spec.out_channels;
            BnParams {
                gamma: store.add(format!("{name}.bn.gamma"), Tensor::ones(&[c])),
                beta: store.add(format!("{name}.bn.beta"), Tensor::zeros(&[c])),
                mean: store.add_buffer(format!("{name}.bn.running_mean"), Tensor::zeros(&[c])),
                var: store.add_buffer(format!("{name}.bn.running_var"), Tensor::ones(&[c])),
            }
        });
        ConvLayer { spec, weight, bias, bn }
    }

    /// Multiply the initial weights by `gain`.
    pub fn scale_weight<T: Scalar>(&self, store: &mut ParamStore<T>, gain: f64) {
        let g = T::lit(gain);
        store.get_mut(self.weight).value.data_mut().iter_mut().for_each(|v| *v *= g);
    }

    pub fn forward<T: Scalar>(&self, pass: &mut Pass<'_, T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let g = &mut *pass.graph;
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let mut y = g.conv2d(x, w, Some(b), self.spec.stride, 0)?;
        if let Some(bn) = &self.bn {
            let gamma = g.param(store, bn.gamma);
            let beta = g.param(store, bn.beta);
            let eps = T::lit(BN_EPSILON);
            y = match pass.mode {
                Mode::Train => {
                    let (out, stats) = g.batchnorm(y, gamma, beta, BnMode::Train, eps)?;
                    if let Some(stats) = stats {
                        pass.bn_updates.push(BnUpdate {
                            mean: bn.mean,
                            var: bn.var,
                            stats,
                        });
                    }
                    out
                }
                Mode::Eval => {
                    let rs = RunningStats {
                        mean: store.get(bn.mean).value.clone(),
                        var: store.get(bn.var).value.clone(),
                    };
                    g.batchnorm(y, gamma, beta, BnMode::Eval(&rs), eps)?.0
                }
            };
        }
        if self.spec.relu {
            y = pass.graph.relu(y)?;
        }
        Ok(y)
    }
}

/// A feature-extraction tower.
#[derive(Clone, Debug)]
pub(crate) struct Stream {
    pub layers: Vec<ConvLayer>,
}

impl Stream {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        specs: &[LayerSpec],
        rng: &mut R,
    ) -> Self {
        let mut c = in_channels;
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, &spec)| {
                let layer = ConvLayer::new(store, &format!("{name}.conv{}", i + 1), c, spec, rng);
                c = spec.out_channels;
                layer
            })
            .collect();
        Stream { layers }
    }

    pub fn forward<T: Scalar>(&self, pass: &mut Pass<'_, T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.layers.iter().try_fold(x, |x, layer| layer.forward(pass, store, x))
    }

    /// Output of every layer, for inspecting the shape chain.
    pub fn forward_trace<T: Scalar>(
        &self,
        pass: &mut Pass<'_, T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            cur = layer.forward(pass, store, cur)?;
            out.push(cur);
        }
        Ok(out)
    }
}

/// Extent of the input region one output depends on, by composing kernel sizes and strides.
pub fn support(layers: &[LayerSpec]) -> usize {
    layers
        .iter()
        .rev()
        .fold(1, |rf, l| (rf - 1) * l.stride + l.kernel)
}

/// Side of the smallest odd window, centred on an output pixel, that contains the support.
///
/// An even support has no centre pixel, so it is widened by one.
pub fn receptive_field(layers: &[LayerSpec]) -> usize {
    let s = support(layers);
    if s % 2 == 1 {
        s
    } else {
        s + 1
    }
}

/// Product of layer strides.
pub fn total_stride(layers: &[LayerSpec]) -> usize {
    layers.iter().map(|l| l.stride).product()
}

/// `(C, H, W)` after each layer for a `C x H x W` input, `None` once a kernel stops fitting.
pub fn shape_chain(layers: &[LayerSpec], input: (usize, usize, usize)) -> Option<Vec<(usize, usize, usize)>> {
    let (_, mut h, mut w) = input;
    let mut chain = Vec::with_capacity(layers.len());
    for l in layers {
        h = crate::autodiff::conv_out_extent(h, l.kernel, l.stride, 0)?;
        w = crate::autodiff::conv_out_extent(w, l.kernel, l.stride, 0)?;
        chain.push((l.out_channels, h, w));
    }
    Some(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_receptive_field() {
        assert_eq!(receptive_field(&[LayerSpec::conv(8, 3, false)]), 3);
        assert_eq!(support(&[LayerSpec::conv(8, 3, false), LayerSpec::conv(8, 3, false)]), 5);
    }

    #[test]
    fn stride_composition() {
        // 2x2 stride 2 after 3x3: (2 - 1) * 1 + 3 = 4 -> odd window 5
        let l = [LayerSpec::conv(4, 3, false), LayerSpec::down(4)];
        assert_eq!(support(&l), 4);
        assert_eq!(receptive_field(&l), 5);
        assert_eq!(total_stride(&l), 2);
    }

    #[test]
    fn describe_layers() {
        assert_eq!(LayerSpec::conv(32, 7, true).describe(), "Conv(7x7)-BN-ReLU");
        assert_eq!(LayerSpec::down(32).describe(), "DownConv(2x2)-ReLU");
    }
}
