//! Built-in numerical checks: gradients, kernel constraints, shift-and-stitch, resampling.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    compare_with_central_differences, finite_diff_check, BnMode, Graph, Var, BN_EPSILON, DEFAULT_STEP,
};
use crate::error::Result;
use crate::filter::{FilterSpec, OutputGrid};
use crate::nets::{inject_broken_mean_subtraction, Constraint, Dkn, DknConfig, Fdkn, FdknConfig, Mode, Model, Pass};
use crate::param::ParamStore;
use crate::resample::{pixel_shuffle, pixel_unshuffle};
use crate::sampling::{sample_backward_with, sample_bilinear_with, BorderMode};
use crate::scalar::Scalar;
use crate::stitch::infer_shift_and_stitch;
use crate::tensor::Tensor;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;
pub const STACK_TOLERANCE: f64 = 1e-3;
pub const CONSTRAINT_TOLERANCE: f64 = 1e-5;
/// Finite-difference step for the full network, small enough to stay between ReLU and
/// bilinear kinks.
pub const STACK_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn below(name: impl Into<String>, max_error: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: max_error < tolerance,
            max_error,
            tolerance,
            detail: detail.into(),
        }
    }

    fn exact(name: impl Into<String>, ok: bool, max_error: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: ok,
            max_error,
            tolerance: 0.0,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} max_error {:>11.3e}  tolerance {:>9.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, "  {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Random head inputs per constraint mode.
    pub constraint_trials: usize,
    pub stitch_pairs: usize,
    pub stitch_size: usize,
    /// Coordinates sampled per tensor in the full-network gradient check.
    pub stack_coords: usize,
    /// Test hook: skip the zero-sum projection in the residual weight head.
    pub inject_broken_mean_subtraction: bool,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            seed: 0,
            constraint_trials: 10_000,
            stitch_pairs: 2,
            stitch_size: 16,
            stack_coords: 4,
            inject_broken_mean_subtraction: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn render_text(&self) -> String {
        let mut s: String = self.checks.iter().map(|c| format!("{c}\n")).collect();
        let failed = self.failures().count();
        s.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        s
    }
}

/// Run every check.
pub fn run(options: &SelftestOptions) -> Result<SelftestReport> {
    let mut checks = primitive_gradchecks(options.seed)?;
    checks.push(dkn_stack_gradcheck(options.seed, STACK_STEP, options.stack_coords)?);
    inject_broken_mean_subtraction(options.inject_broken_mean_subtraction);
    let residual = constraint_check(Constraint::MeanSubtract, options.constraint_trials, options.seed);
    inject_broken_mean_subtraction(false);
    checks.push(residual?);
    checks.push(constraint_check(Constraint::L1Normalize, options.constraint_trials, options.seed)?);
    checks.push(stitch_check::<f32>(options.stitch_pairs, options.stitch_size, options.seed, 1e-5)?);
    checks.push(stitch_check::<f64>(1, options.stitch_size.min(8), options.seed, 1e-10)?);
    checks.extend(shuffle_round_trips(options.seed)?);
    checks.extend(receptive_field_checks()?);
    Ok(SelftestReport { checks })
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::rand_uniform(shape, lo, hi, rng)
}

/// Uniform values whose magnitude is at least `gap`.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Scalar `sum(c * y)` for a fixed random `c`, so every output entry gets a distinct weight.
fn project(g: &mut Graph<f64>, y: Var, c: &Tensor<f64>) -> Result<Var> {
    let c = g.constant(c.clone());
    let p = g.mul(y, c)?;
    g.sum(p)
}

struct Primitive<'a> {
    rng: &'a mut ChaCha8Rng,
    out: Vec<CheckResult>,
}

impl Primitive<'_> {
    fn check<F>(&mut self, name: &str, x: &Tensor<f64>, out_shape: &[usize], f: F) -> Result<()>
    where
        F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
    {
        let c = uniform(out_shape, -1.0, 1.0, self.rng);
        let r = finite_diff_check(
            |g, x| {
                let y = f(g, x)?;
                project(g, y, &c)
            },
            x,
            DEFAULT_STEP,
        )?;
        self.out.push(CheckResult::below(
            format!("grad.{name}"),
            r.max_rel_err,
            PRIMITIVE_TOLERANCE,
            format!("{} coords", r.checked),
        ));
        Ok(())
    }

    fn check_scalar<F>(&mut self, name: &str, x: &Tensor<f64>, f: F) -> Result<()>
    where
        F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
    {
        let r = finite_diff_check(f, x, DEFAULT_STEP)?;
        self.out.push(CheckResult::below(
            format!("grad.{name}"),
            r.max_rel_err,
            PRIMITIVE_TOLERANCE,
            format!("{} coords", r.checked),
        ));
        Ok(())
    }
}

/// Central-difference checks of every differentiable primitive in 64-bit.
pub fn primitive_gradchecks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    let x = uniform(&[1, 2, 5, 5], -1.0, 1.0, &mut rng);
    let w = uniform(&[3, 2, 3, 3], -0.5, 0.5, &mut rng);
    let b = uniform(&[3], -0.5, 0.5, &mut rng);
    let pos = uniform(&[3, 4, 4], 0.2, 1.0, &mut rng);
    let bn_x = uniform(&[2, 3, 4, 4], -1.0, 1.0, &mut rng);
    let gamma = uniform(&[3], 0.5, 1.5, &mut rng);
    let beta = uniform(&[3], -0.5, 0.5, &mut rng);
    let signed = away_from_zero(&[2, 3, 3], 0.05, &mut rng);
    let shuffle_in = uniform(&[8, 2, 3], -1.0, 1.0, &mut rng);
    let factor = uniform(&[2, 3, 3], -1.0, 1.0, &mut rng);
    let stats = crate::autodiff::RunningStats {
        mean: uniform(&[3], -0.2, 0.2, &mut rng),
        var: uniform(&[3], 0.5, 1.5, &mut rng),
    };

    let mut p = Primitive { rng: &mut rng, out: Vec::new() };
    p.check("conv2d.input", &x, &[1, 3, 3, 3], |g, x| {
        let (w, b) = (g.constant(w.clone()), g.constant(b.clone()));
        g.conv2d(x, w, Some(b), 2, 1)
    })?;
    p.check("conv2d.weight", &w, &[1, 3, 3, 3], |g, w| {
        let (x, b) = (g.constant(x.clone()), g.constant(b.clone()));
        g.conv2d(x, w, Some(b), 2, 1)
    })?;
    p.check("conv2d.bias", &b, &[1, 3, 3, 3], |g, b| {
        let (x, w) = (g.constant(x.clone()), g.constant(w.clone()));
        g.conv2d(x, w, Some(b), 2, 1)
    })?;
    p.check("relu", &signed, &[2, 3, 3], |g, x| g.relu(x))?;
    p.check("sigmoid", &signed, &[2, 3, 3], |g, x| g.sigmoid(x))?;
    p.check("mul", &signed, &[2, 3, 3], |g, x| {
        let y = g.constant(factor.clone());
        let xy = g.mul(x, y)?;
        g.mul(xy, x)
    })?;
    p.check("add", &signed, &[2, 3, 3], |g, x| {
        let s = g.scale(x, 2.5)?;
        g.add(x, s)
    })?;
    p.check("batchnorm.train", &bn_x, &[2, 3, 4, 4], |g, x| {
        let (ga, be) = (g.constant(gamma.clone()), g.constant(beta.clone()));
        Ok(g.batchnorm(x, ga, be, BnMode::Train, BN_EPSILON)?.0)
    })?;
    p.check("batchnorm.gamma", &gamma, &[2, 3, 4, 4], |g, ga| {
        let (x, be) = (g.constant(bn_x.clone()), g.constant(beta.clone()));
        Ok(g.batchnorm(x, ga, be, BnMode::Train, BN_EPSILON)?.0)
    })?;
    p.check("batchnorm.beta", &beta, &[2, 3, 4, 4], |g, be| {
        let (x, ga) = (g.constant(bn_x.clone()), g.constant(gamma.clone()));
        Ok(g.batchnorm(x, ga, be, BnMode::Train, BN_EPSILON)?.0)
    })?;
    p.check("batchnorm.eval", &bn_x, &[2, 3, 4, 4], |g, x| {
        let (ga, be) = (g.constant(gamma.clone()), g.constant(beta.clone()));
        Ok(g.batchnorm(x, ga, be, BnMode::Eval(&stats), BN_EPSILON)?.0)
    })?;
    p.check("mean_subtract_channels", &pos, &[3, 4, 4], |g, x| g.mean_subtract_channels(x))?;
    p.check("l1_normalize_channels", &pos, &[3, 4, 4], |g, x| g.l1_normalize_channels(x))?;
    p.check("pixel_shuffle", &shuffle_in, &[2, 4, 6], |g, x| g.pixel_shuffle(x, 2))?;
    let gt = uniform(&[2, 3, 3], -1.0, 1.0, p.rng);
    let pred = Tensor::from_fn(&[2, 3, 3], |i| gt.data()[i] + signed.data()[i]);
    p.check_scalar("l1_loss", &pred, |g, x| {
        let t = g.constant(gt.clone());
        g.l1_loss(x, t)
    })?;

    let mut out = p.out;
    out.extend(deformable_gradchecks(&mut rng)?);
    out.push(sampler_gradcheck(&mut rng)?);
    Ok(out)
}

/// Offsets whose sampling positions have fractional parts in `[0.2, 0.8]`, away from the
/// bilinear kinks.
fn fractional_offsets(kk: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(&[2 * kk, h, w], |_| {
        let whole = rng.random_range(-2i32..=2) as f64;
        whole + rng.random_range(0.2..0.8)
    })
}

fn deformable_gradchecks(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let (k, h, w) = (3, 7, 7);
    let kk = k * k;
    let image = uniform(&[1, h, w], 0.0, 1.0, rng);
    let grid = OutputGrid {
        y0: 1,
        x0: 2,
        stride: 2,
        h: 3,
        w: 3,
    };
    let weights = uniform(&[kk, grid.h, grid.w], -0.5, 0.5, rng);
    let offsets = fractional_offsets(kk, grid.h, grid.w, rng);
    let mut p = Primitive { rng, out: Vec::new() };
    for (tag, spec) in [("residual", FilterSpec::residual(k)), ("plain", FilterSpec::plain(k))] {
        for border in [BorderMode::Border, BorderMode::Zero] {
            let spec = FilterSpec { border, ..spec };
            let name = |what: &str| format!("deformable_filter.{tag}.{}.{what}", border.as_str());
            p.check(&name("image"), &image, &[1, grid.h, grid.w], |g, x| {
                let (wv, ov) = (g.constant(weights.clone()), g.constant(offsets.clone()));
                g.deformable_filter(x, wv, ov, spec, grid)
            })?;
            p.check(&name("weights"), &weights, &[1, grid.h, grid.w], |g, wv| {
                let (x, ov) = (g.constant(image.clone()), g.constant(offsets.clone()));
                g.deformable_filter(x, wv, ov, spec, grid)
            })?;
            p.check(&name("offsets"), &offsets, &[1, grid.h, grid.w], |g, ov| {
                let (x, wv) = (g.constant(image.clone()), g.constant(weights.clone()));
                g.deformable_filter(x, wv, ov, spec, grid)
            })?;
        }
    }
    Ok(p.out)
}

/// Bilinear sampler against central differences in the image values and the position.
fn sampler_gradcheck(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let image = uniform(&[1, 5, 6], 0.0, 1.0, rng);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for mode in [BorderMode::Border, BorderMode::Zero] {
        for _ in 0..20 {
            let x = rng.random_range(-1i32..6) as f64 + rng.random_range(0.2..0.8);
            let y = rng.random_range(-1i32..5) as f64 + rng.random_range(0.2..0.8);
            let upstream = rng.random_range(0.5..1.5);
            let grad = sample_backward_with(&image, x, y, upstream, mode)?;
            let mut analytic = vec![0.0; image.len() + 2];
            for &(yy, xx, v) in &grad.image {
                analytic[yy * 6 + xx] += v;
            }
            analytic[image.len()] = grad.position.0;
            analytic[image.len() + 1] = grad.position.1;
            let coords: Vec<usize> = (0..analytic.len()).collect();
            let r = compare_with_central_differences(&analytic, &coords, DEFAULT_STEP, |i, d| {
                let (mut img, mut px, mut py) = (image.clone(), x, y);
                match i {
                    _ if i < img.len() => img.data_mut()[i] += d,
                    _ if i == img.len() => px += d,
                    _ => py += d,
                }
                Ok(upstream * sample_bilinear_with(&img, px, py, mode)?)
            })?;
            worst = worst.max(r.max_rel_err);
            checked += r.checked;
        }
    }
    Ok(CheckResult::below(
        "grad.bilinear_sampler",
        worst,
        PRIMITIVE_TOLERANCE,
        format!("{checked} coords"),
    ))
}

/// Give the weight and offset heads random weights so that the kernels are non-trivial.
pub fn randomize_heads<T: Scalar>(params: &mut ParamStore<T>, scale: f64, rng: &mut impl Rng) {
    for p in params.iter_mut() {
        if (p.name.starts_with("weight_head.") || p.name.starts_with("offset_head.")) && p.trainable {
            let shape = p.value.shape().to_vec();
            p.value = Tensor::rand_uniform(&shape, -scale, scale, rng);
        }
    }
}

/// Gradient of the L1 loss through the whole DKN (both towers, both heads, sampler and
/// weighted average) on a 51 x 51 pair, at sampled coordinates of selected tensors.
pub fn dkn_stack_gradcheck(seed: u64, h: f64, per_tensor: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(12);
    let mut model = Dkn::<f64>::new(DknConfig::default(), seed)?;
    randomize_heads(model.params_mut(), 0.2, &mut rng);
    let size = model.receptive_field();
    let guidance = uniform(&[3, size, size], 0.0, 1.0, &mut rng);
    let target = uniform(&[1, size, size], 0.0, 1.0, &mut rng);
    let s = model.stride();
    let n = (size - 2) / s + 1;
    let grid = OutputGrid {
        y0: 1,
        x0: 1,
        stride: s,
        h: n,
        w: n,
    };
    let gt = uniform(&[1, n, n], 0.0, 1.0, &mut rng);

    let loss = |model: &Dkn<f64>, grad: bool| -> Result<(f64, Option<ParamStore<f64>>)> {
        let mut graph = if grad { Graph::new() } else { Graph::inference() };
        let mut pass = Pass::new(&mut graph, Mode::Train);
        let sample = pass.graph.constant(target.clone());
        let out = model.forward_region(&mut pass, &guidance, &target, sample, grid)?;
        let t = pass.graph.constant(gt.clone());
        let l = pass.graph.l1_loss(out.filtered, t)?;
        let value = graph.value(l).data()[0];
        if !grad {
            return Ok((value, None));
        }
        let mut store = model.params().clone();
        store.zero_grad();
        graph.backward(l)?.accumulate(&mut store)?;
        Ok((value, Some(store)))
    };
    let (_, store) = loss(&model, true)?;
    let store = store.expect("gradients requested");

    let names: Vec<String> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(_, p)| p.name.clone())
        .filter(|n| {
            n.ends_with("conv1.weight")
                || n.ends_with("conv4.bn.gamma")
                || n.ends_with("conv7.weight")
                || n.starts_with("weight_head.")
                || n.starts_with("offset_head.")
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut worst_name = String::new();
    let mut checked = 0;
    for name in &names {
        let id = store.find(name).expect("name from store");
        let analytic: Vec<f64> = store.get(id).grad.data().to_vec();
        let coords: Vec<usize> = (0..per_tensor).map(|_| rng.random_range(0..analytic.len())).collect();
        let r = compare_with_central_differences(&analytic, &coords, h, |i, d| {
            let orig = model.params().get(id).value.data()[i];
            model.params_mut().get_mut(id).value.data_mut()[i] = orig + d;
            let v = loss(&model, false).map(|(v, _)| v);
            model.params_mut().get_mut(id).value.data_mut()[i] = orig;
            v
        })?;
        if r.max_rel_err >= worst {
            worst = r.max_rel_err;
            worst_name = name.clone();
        }
        checked += r.checked;
    }
    Ok(CheckResult::below(
        "grad.dkn_stack",
        worst,
        STACK_TOLERANCE,
        format!("{checked} coords over {} tensors, worst in {worst_name}", names.len()),
    ))
}

/// Kernel sums over `trials` random head inputs: zero for the residual constraint, one
/// (with positive weights) for the normalised one.
pub fn constraint_check(constraint: Constraint, trials: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(13);
    let config = match constraint {
        Constraint::MeanSubtract => DknConfig::default(),
        Constraint::L1Normalize => DknConfig::plain(),
    };
    let mut model = Dkn::<f32>::new(config, seed)?;
    randomize_heads(model.params_mut(), 0.3, &mut rng);
    let feat = *model.config().channels.last().unwrap_or(&1);
    let kk = model.config().k * model.config().k;
    let side = 10;
    let per_call = side * side;
    let mut done = 0;
    let mut worst: f64 = 0.0;
    let mut min_weight = f64::INFINITY;
    while done < trials {
        let mut graph = Graph::inference();
        let mut pass = Pass::new(&mut graph, Mode::Eval);
        let fg = pass.graph.constant(Tensor::rand_uniform(&[feat, side, side], 0.0, 3.0, &mut rng));
        let ft = pass.graph.constant(Tensor::rand_uniform(&[feat, side, side], 0.0, 3.0, &mut rng));
        let w = model.weight_head(&mut pass, Some(fg), Some(ft))?;
        let w = pass.graph.value(w);
        let take = per_call.min(trials - done);
        for px in 0..take {
            let sum: f64 = (0..kk).map(|c| w.data()[c * per_call + px].as_f64()).sum();
            for c in 0..kk {
                min_weight = min_weight.min(w.data()[c * per_call + px].as_f64());
            }
            let err = match constraint {
                Constraint::MeanSubtract => sum.abs(),
                Constraint::L1Normalize => (sum - 1.0).abs(),
            };
            worst = worst.max(err);
        }
        done += take;
    }
    Ok(match constraint {
        Constraint::MeanSubtract => CheckResult::below(
            "constraint.residual_zero_sum",
            worst,
            CONSTRAINT_TOLERANCE,
            format!("{trials} kernels, |sum| must vanish"),
        ),
        Constraint::L1Normalize => {
            let mut r = CheckResult::below(
                "constraint.plain_unit_sum",
                worst,
                CONSTRAINT_TOLERANCE,
                format!("{trials} kernels, min weight {min_weight:.3e}"),
            );
            r.passed &= min_weight > 0.0;
            r
        }
    })
}

/// Shift-and-stitch output against the per-pixel sliding-window evaluation.
pub fn stitch_check<T: Scalar>(pairs: usize, size: usize, seed: u64, tolerance: f64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(14);
    let mut model = Dkn::<T>::new(DknConfig::default(), seed)?;
    randomize_heads(model.params_mut(), 0.2, &mut rng);
    let mut worst: f64 = 0.0;
    let mut passes_ok = true;
    for _ in 0..pairs {
        let g = Tensor::<T>::rand_uniform(&[3, size, size], 0.0, 1.0, &mut rng);
        let t = Tensor::<T>::rand_uniform(&[1, size, size], 0.0, 1.0, &mut rng);
        let stitched = infer_shift_and_stitch(&model, &g, &t)?;
        passes_ok &= stitched.passes == model.passes_per_image();
        let naive = model.infer_per_pixel(&g, &t)?;
        worst = worst.max(stitched.output.max_abs_diff(&naive)?.as_f64());
    }
    let mut r = CheckResult::below(
        format!("stitch.vs_per_pixel.{}", T::NAME),
        worst,
        tolerance,
        format!("{pairs} pairs of {size}x{size}, {} passes each", model.passes_per_image()),
    );
    r.passed &= passes_ok;
    Ok(r)
}

/// `shuffle(unshuffle(x)) == x` and `unshuffle(shuffle(y)) == y` bit for bit.
pub fn shuffle_round_trips(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(15);
    let mut out = Vec::new();
    for r in [2usize, 4] {
        let mut worst: f64 = 0.0;
        let mut exact = true;
        for _ in 0..10 {
            let c = rng.random_range(1..4);
            let (h, w) = (r * rng.random_range(1..6), r * rng.random_range(1..6));
            let x = Tensor::<f32>::rand_uniform(&[c, h, w], -1.0, 1.0, &mut rng);
            let back = pixel_shuffle(&pixel_unshuffle(&x, r)?, r)?;
            exact &= back == x;
            worst = worst.max(back.max_abs_diff(&x)? as f64);
            let y = Tensor::<f32>::rand_uniform(&[c * r * r, h / r, w / r], -1.0, 1.0, &mut rng);
            let back = pixel_unshuffle(&pixel_shuffle(&y, r)?, r)?;
            exact &= back == y;
            worst = worst.max(back.max_abs_diff(&y)? as f64);
        }
        out.push(CheckResult::exact(format!("shuffle.round_trip.r{r}"), exact, worst, "bit-exact"));
    }
    Ok(out)
}

/// Receptive fields derived from the layer specifications.
pub fn receptive_field_checks() -> Result<Vec<CheckResult>> {
    let dkn = Dkn::<f32>::new(DknConfig::default(), 0)?.receptive_field();
    let fdkn = Fdkn::<f32>::new(FdknConfig::default(), 0)?.receptive_field();
    Ok(vec![
        CheckResult::exact(
            "receptive_field.dkn",
            dkn == 51,
            (dkn as f64 - 51.0).abs(),
            format!("{dkn} (expected 51)"),
        ),
        CheckResult::exact(
            "receptive_field.fdkn",
            fdkn == 13,
            (fdkn as f64 - 13.0).abs(),
            format!("{fdkn} (expected 13 on the resampled grid)"),
        ),
    ])
}
