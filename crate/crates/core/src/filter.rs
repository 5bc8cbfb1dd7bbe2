//! Explicit weighted averages over deformably sampled neighbours.
//!
//! For every output pixel `p` the engine reads `k x k` samples at `s(q) = q + dq`
//! (clamped to a `d x d` window around `p`) and combines them with per-pixel weights:
//!
//! * residual form: `out_p = f_p + sum_q K_pq f(s(q))` with zero-sum weights,
//! * plain form: `out_p = sum_q K_pq f(s(q))` with weights summing to one.

use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::sampling::{clamp_to_window, read_taps, taps, BorderMode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Tolerance on the per-pixel kernel sum before a field is rejected.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-4;

pub const DEFAULT_KERNEL: usize = 3;
pub const DEFAULT_WINDOW: usize = 15;

/// How the k x k sample set is combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterSpec {
    pub k: usize,
    pub window: usize,
    pub border: BorderMode,
    pub residual: bool,
}

impl FilterSpec {
    pub fn residual(k: usize) -> Self {
        FilterSpec {
            k,
            window: DEFAULT_WINDOW,
            border: BorderMode::Border,
            residual: true,
        }
    }

    pub fn plain(k: usize) -> Self {
        FilterSpec {
            residual: false,
            ..Self::residual(k)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_multiple_of(2) || self.window.is_multiple_of(2) || self.window < self.k {
            return Err(Error::Invalid(format!(
                "kernel size {} and window {} must be odd with window >= kernel",
                self.k, self.window
            )));
        }
        Ok(())
    }
}

/// Output pixel `(i, j)` sits at image position `(y0 + stride * i, x0 + stride * j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutputGrid {
    pub y0: usize,
    pub x0: usize,
    pub stride: usize,
    pub h: usize,
    pub w: usize,
}

impl OutputGrid {
    pub fn dense(h: usize, w: usize) -> Self {
        OutputGrid {
            y0: 0,
            x0: 0,
            stride: 1,
            h,
            w,
        }
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (usize, usize) {
        (self.y0 + self.stride * i, self.x0 + self.stride * j)
    }

    fn check_inside(&self, ih: usize, iw: usize) -> Result<()> {
        if self.h == 0 || self.w == 0 {
            return Ok(());
        }
        let (py, px) = self.center(self.h - 1, self.w - 1);
        if py >= ih || px >= iw {
            return Err(Error::shape(
                "deformable_filter",
                "output grid",
                format!("grid reaches ({py}, {px}) in a {ih} x {iw} image"),
            ));
        }
        Ok(())
    }
}

/// Per-pixel kernel weights (`k^2 x H x W`) and sampling offsets (`2k^2 x H x W`,
/// `(dx, dy)` interleaved per grid position, grid positions row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct KernelField<T> {
    pub k: usize,
    pub weights: Tensor<T>,
    pub offsets: Tensor<T>,
}

impl<T: Scalar> KernelField<T> {
    pub fn new(k: usize, weights: Tensor<T>, offsets: Tensor<T>) -> Result<Self> {
        let (n, c, h, w) = weights.chw()?;
        if n != 1 || c != k * k {
            return Err(Error::shape(
                "KernelField",
                "weights",
                format!("expected {} x H x W, got {:?}", k * k, weights.shape()),
            ));
        }
        if offsets.shape() != [2 * k * k, h, w] {
            return Err(Error::shape(
                "KernelField",
                "offsets",
                format!("expected [{}, {h}, {w}], got {:?}", 2 * k * k, offsets.shape()),
            ));
        }
        Ok(KernelField { k, weights, offsets })
    }

    /// Regular `k x k` grid, no displacement.
    pub fn with_zero_offsets(k: usize, weights: Tensor<T>) -> Result<Self> {
        let (_, _, h, w) = weights.chw()?;
        Self::new(k, weights, Tensor::zeros(&[2 * k * k, h, w]))
    }

    pub fn height(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.weights.shape()[2]
    }

    /// Sum of the kernel weights of every pixel.
    pub fn kernel_sums(&self) -> Vec<T> {
        let p = self.height() * self.width();
        let kk = self.k * self.k;
        (0..p)
            .map(|i| (0..kk).map(|q| self.weights.data()[q * p + i]).sum())
            .collect()
    }

    /// Reject fields whose per-pixel sums stray from `target` by more than
    /// [`CONSTRAINT_TOLERANCE`].
    pub fn check_sums(&self, target: T, what: &str) -> Result<()> {
        let tol = T::lit(CONSTRAINT_TOLERANCE);
        for (i, s) in self.kernel_sums().into_iter().enumerate() {
            if (s - target).abs() > tol || !s.is_finite() {
                return Err(Error::Constraint(format!(
                    "{what}: kernel weights at pixel {i} sum to {s}, expected {target}"
                )));
            }
        }
        Ok(())
    }
}

fn image_dims<T: Scalar>(image: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match *image.shape() {
        [1, h, w] if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(Error::shape(op, "target", format!("expected 1 x H x W, got {:?}", image.shape()))),
    }
}

fn forward_kernel<T: Scalar>(
    image: &Tensor<T>,
    weights: &[T],
    offsets: &[T],
    spec: &FilterSpec,
    grid: &OutputGrid,
) -> Vec<T> {
    let (ih, iw) = (image.shape()[1], image.shape()[2]);
    let data = image.data();
    let kk = spec.k * spec.k;
    let r = (spec.k / 2) as isize;
    let p = grid.h * grid.w;
    let mut out = vec![T::zero(); p];
    for i in 0..grid.h {
        for j in 0..grid.w {
            let pix = i * grid.w + j;
            let (py, px) = grid.center(i, j);
            let (pyf, pxf) = (T::from_usize(py).unwrap(), T::from_usize(px).unwrap());
            let mut acc = if spec.residual { data[py * iw + px] } else { T::zero() };
            for q in 0..kk {
                let qy = pyf + T::from_isize(q as isize / spec.k as isize - r).unwrap();
                let qx = pxf + T::from_isize(q as isize % spec.k as isize - r).unwrap();
                let sx = clamp_to_window(qx + offsets[(2 * q) * p + pix], pxf, spec.window);
                let sy = clamp_to_window(qy + offsets[(2 * q + 1) * p + pix], pyf, spec.window);
                let t = taps(sx, sy, ih, iw, spec.border);
                let (v, _, _) = read_taps(data, iw, &t);
                acc += weights[q * p + pix] * v;
            }
            out[pix] = acc;
        }
    }
    out
}

/// Apply a kernel field to a `1 x H x W` target at every pixel.
pub fn weighted_average<T: Scalar>(target: &Tensor<T>, field: &KernelField<T>, spec: &FilterSpec) -> Result<Tensor<T>> {
    spec.validate()?;
    if field.k != spec.k {
        return Err(Error::shape(
            "weighted_average",
            "kernel size",
            format!("field has k = {}, spec has k = {}", field.k, spec.k),
        ));
    }
    let (h, w) = image_dims(target, "weighted_average")?;
    if field.height() != h || field.width() != w {
        return Err(Error::shape(
            "weighted_average",
            "kernel field",
            format!("field covers {} x {}, target is {h} x {w}", field.height(), field.width()),
        ));
    }
    let expected = if spec.residual { T::zero() } else { T::one() };
    field.check_sums(expected, if spec.residual { "residual filter" } else { "plain filter" })?;
    let out = forward_kernel(
        target,
        field.weights.data(),
        field.offsets.data(),
        spec,
        &OutputGrid::dense(h, w),
    );
    Tensor::from_vec(&[1, h, w], out)
}

/// `f_p + sum_q K_pq f(s(q))` with mean-subtracted weights.
pub fn weighted_average_residual<T: Scalar>(target: &Tensor<T>, field: &KernelField<T>) -> Result<Tensor<T>> {
    weighted_average(target, field, &FilterSpec::residual(field.k))
}

/// `sum_q K_pq f(s(q))` with L1-normalized weights.
pub fn weighted_average_plain<T: Scalar>(target: &Tensor<T>, field: &KernelField<T>) -> Result<Tensor<T>> {
    weighted_average(target, field, &FilterSpec::plain(field.k))
}

struct DeformableFilterBackward {
    spec: FilterSpec,
    grid: OutputGrid,
}

impl<T: Scalar> Backward<T> for DeformableFilterBackward {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>> {
        let (image, weights, offsets) = (ctx.inputs[0], ctx.inputs[1], ctx.inputs[2]);
        let (ih, iw) = (image.shape()[1], image.shape()[2]);
        let spec = &self.spec;
        let grid = &self.grid;
        let kk = spec.k * spec.k;
        let r = (spec.k / 2) as isize;
        let p = grid.h * grid.w;
        let (wd, od, fd) = (weights.data(), offsets.data(), image.data());
        let up = ctx.grad.data();

        let mut d_image = ctx.needs[0].then(|| Tensor::zeros(image.shape()));
        let mut d_weights = ctx.needs[1].then(|| Tensor::zeros(weights.shape()));
        let mut d_offsets = ctx.needs[2].then(|| Tensor::zeros(offsets.shape()));

        for i in 0..grid.h {
            for j in 0..grid.w {
                let pix = i * grid.w + j;
                let g = up[pix];
                let (py, px) = grid.center(i, j);
                if spec.residual {
                    if let Some(di) = d_image.as_mut() {
                        di.data_mut()[py * iw + px] += g;
                    }
                }
                let (pyf, pxf) = (T::from_usize(py).unwrap(), T::from_usize(px).unwrap());
                for q in 0..kk {
                    let qy = pyf + T::from_isize(q as isize / spec.k as isize - r).unwrap();
                    let qx = pxf + T::from_isize(q as isize % spec.k as isize - r).unwrap();
                    let raw_x = qx + od[(2 * q) * p + pix];
                    let raw_y = qy + od[(2 * q + 1) * p + pix];
                    let sx = clamp_to_window(raw_x, pxf, spec.window);
                    let sy = clamp_to_window(raw_y, pyf, spec.window);
                    let t = taps(sx, sy, ih, iw, spec.border);
                    let (v, dvx, dvy) = read_taps(fd, iw, &t);
                    let kw = wd[q * p + pix];
                    if let Some(dw) = d_weights.as_mut() {
                        dw.data_mut()[q * p + pix] = g * v;
                    }
                    if let Some(d_off) = d_offsets.as_mut() {
                        let d = d_off.data_mut();
                        if sx == raw_x {
                            d[(2 * q) * p + pix] = g * kw * dvx;
                        }
                        if sy == raw_y {
                            d[(2 * q + 1) * p + pix] = g * kw * dvy;
                        }
                    }
                    if let Some(di) = d_image.as_mut() {
                        let di = di.data_mut();
                        for c in 0..4 {
                            if let Some((yy, xx)) = t.index[c] {
                                di[yy * iw + xx] += g * kw * t.weight[c];
                            }
                        }
                    }
                }
            }
        }
        Ok(vec![d_image, d_weights, d_offsets])
    }
}

impl<T: Scalar> Graph<T> {
    /// Differentiable weighted average over deformable samples of `image` (`1 x H x W`).
    ///
    /// `weights` is `k^2 x h x w` and `offsets` `2k^2 x h x w` on `grid`; the result is `1 x h x w`.
    pub fn deformable_filter(
        &mut self,
        image: Var,
        weights: Var,
        offsets: Var,
        spec: FilterSpec,
        grid: OutputGrid,
    ) -> Result<Var> {
        spec.validate()?;
        let img = self.value(image);
        let (ih, iw) = image_dims(img, "deformable_filter")?;
        grid.check_inside(ih, iw)?;
        let kk = spec.k * spec.k;
        if self.value(weights).shape() != [kk, grid.h, grid.w] {
            return Err(Error::shape(
                "deformable_filter",
                "weights",
                format!("expected [{kk}, {}, {}], got {:?}", grid.h, grid.w, self.value(weights).shape()),
            ));
        }
        if self.value(offsets).shape() != [2 * kk, grid.h, grid.w] {
            return Err(Error::shape(
                "deformable_filter",
                "offsets",
                format!(
                    "expected [{}, {}, {}], got {:?}",
                    2 * kk,
                    grid.h,
                    grid.w,
                    self.value(offsets).shape()
                ),
            ));
        }
        let out = forward_kernel(img, self.value(weights).data(), self.value(offsets).data(), &spec, &grid);
        let value = Tensor::from_vec(&[1, grid.h, grid.w], out)?;
        self.push_op(
            "deformable_filter",
            value,
            &[image, weights, offsets],
            Box::new(DeformableFilterBackward { spec, grid }),
        )
    }
}

/// Anything that filters a target under a guidance image (`C x H x W`, `1 x H x W`).
pub trait JointFilter<T: Scalar> {
    fn filter(&self, guidance: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>>;
}

/// Apply `model` `iterations` times with the image as its own guidance and target.
///
/// Each channel is filtered on its own; the guidance stream sees that channel
/// replicated to `guidance_channels` planes.
pub fn iterative_filter<T: Scalar, M: JointFilter<T> + ?Sized>(
    image: &Tensor<T>,
    model: &M,
    iterations: usize,
    guidance_channels: usize,
) -> Result<Tensor<T>> {
    let (n, c, _, _) = image.chw()?;
    if n != 1 {
        return Err(Error::shape("iterative_filter", "batch", format!("{:?}", image.shape())));
    }
    let mut planes = Vec::with_capacity(c);
    for ch in 0..c {
        let mut plane = image.channel(ch)?;
        for _ in 0..iterations {
            let guidance = plane.replicate_channels(guidance_channels)?;
            plane = model.filter(&guidance, &plane)?;
        }
        planes.push(plane);
    }
    let refs: Vec<&Tensor<T>> = planes.iter().collect();
    let out = Tensor::concat_channels(&refs)?;
    out.reshape(image.shape())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_fn(&[1, h, w], |i| (i % w) as f64 * 2.0 + (i / w) as f64 * 0.5)
    }

    fn uniform_weights(k: usize, h: usize, w: usize, v: f64) -> Tensor<f64> {
        Tensor::full(&[k * k, h, w], v)
    }

    #[test]
    fn zero_weights_leave_target_untouched() {
        let f = ramp(5, 6);
        let field = KernelField::with_zero_offsets(3, Tensor::zeros(&[9, 5, 6])).unwrap();
        assert_eq!(weighted_average_residual(&f, &field).unwrap(), f);
    }

    #[test]
    fn zero_sum_kernel_annihilates_constants() {
        let f = Tensor::full(&[1, 6, 6], 0.75);
        let mut w = Tensor::from_fn(&[9, 6, 6], |i| ((i * 7919) % 13) as f64);
        // mean-subtract per pixel
        for p in 0..36 {
            let m: f64 = (0..9).map(|q| w.data()[q * 36 + p]).sum::<f64>() / 9.0;
            for q in 0..9 {
                w.data_mut()[q * 36 + p] -= m;
            }
        }
        let field = KernelField::with_zero_offsets(3, w).unwrap();
        let out = weighted_average_residual(&f, &field).unwrap();
        assert!(out.max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn antisymmetric_kernel_measures_horizontal_gradient() {
        let f = Tensor::from_fn(&[1, 5, 5], |i| 3.0 * (i % 5) as f64 + 1.0);
        let mut w = Tensor::zeros(&[9, 5, 5]);
        // center pixel (2, 2): q = 3 is the left neighbour, q = 5 the right one
        w.data_mut()[3 * 25 + 12] = -1.0;
        w.data_mut()[5 * 25 + 12] = 1.0;
        let field = KernelField::with_zero_offsets(3, w).unwrap();
        let out = weighted_average_residual(&f, &field).unwrap();
        // f(3) - f(1) = 2 * 3
        assert_eq!(out.at3(0, 2, 2) - f.at3(0, 2, 2), 6.0);
    }

    #[test]
    fn one_hot_center_is_identity_for_plain_filter() {
        let f = ramp(4, 7);
        let mut w = Tensor::zeros(&[9, 4, 7]);
        w.data_mut()[4 * 28..5 * 28].fill(1.0);
        let field = KernelField::with_zero_offsets(3, w).unwrap();
        assert_eq!(weighted_average_plain(&f, &field).unwrap(), f);
    }

    #[test]
    fn plain_filter_fixes_constants() {
        let f = Tensor::full(&[1, 5, 5], 2.5);
        let field = KernelField::new(
            3,
            uniform_weights(3, 5, 5, 1.0 / 9.0),
            Tensor::from_fn(&[18, 5, 5], |i| ((i * 31) % 17) as f64 * 0.37 - 3.0),
        )
        .unwrap();
        let out = weighted_average_plain(&f, &field).unwrap();
        assert!(out.max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn uniform_weights_match_box_filter() {
        let f = Tensor::from_fn(&[1, 6, 7], |i| ((i * 13) % 7) as f64 - 2.0);
        let field = KernelField::with_zero_offsets(3, uniform_weights(3, 6, 7, 1.0 / 9.0)).unwrap();
        let out = weighted_average_plain(&f, &field).unwrap();
        // box filter oracle with clamped borders
        for y in 0..6usize {
            for x in 0..7usize {
                let mut acc = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let yy = (y as isize + dy).clamp(0, 5) as usize;
                        let xx = (x as isize + dx).clamp(0, 6) as usize;
                        acc += f.at3(0, yy, xx);
                    }
                }
                assert!((out.at3(0, y, x) - acc / 9.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn broken_constraint_is_rejected() {
        let f = ramp(3, 3);
        let field = KernelField::with_zero_offsets(3, uniform_weights(3, 3, 3, 0.01)).unwrap();
        let err = weighted_average_residual(&f, &field).unwrap_err();
        assert!(matches!(err, Error::Constraint(_)), "{err}");
        assert!(weighted_average_plain(&f, &field).is_err());
    }

    #[test]
    fn graph_op_matches_tensor_api() {
        let f = ramp(6, 6);
        let w = Tensor::from_fn(&[9, 6, 6], |i| ((i * 17) % 5) as f64 / 9.0);
        let o = Tensor::from_fn(&[18, 6, 6], |i| ((i * 29) % 11) as f64 * 0.3 - 1.4);
        let spec = FilterSpec::plain(3);
        let want = forward_kernel(&f, w.data(), o.data(), &spec, &OutputGrid::dense(6, 6));
        let mut g = Graph::new();
        let (fi, wi, oi) = (g.constant(f), g.constant(w), g.constant(o));
        let y = g.deformable_filter(fi, wi, oi, spec, OutputGrid::dense(6, 6)).unwrap();
        assert_eq!(g.value(y).data(), want.as_slice());
    }

    #[test]
    fn strided_grid_reads_strided_centers() {
        let f = ramp(8, 8);
        let grid = OutputGrid {
            y0: 1,
            x0: 2,
            stride: 4,
            h: 2,
            w: 2,
        };
        let mut g = Graph::new();
        let fi = g.constant(f.clone());
        let wi = g.constant(Tensor::zeros(&[9, 2, 2]));
        let oi = g.constant(Tensor::zeros(&[18, 2, 2]));
        let y = g.deformable_filter(fi, wi, oi, FilterSpec::residual(3), grid).unwrap();
        assert_eq!(
            g.value(y).data(),
            &[f.at3(0, 1, 2), f.at3(0, 1, 6), f.at3(0, 5, 2), f.at3(0, 5, 6)]
        );
    }

    struct Halve;

    impl JointFilter<f64> for Halve {
        fn filter(&self, guidance: &Tensor<f64>, target: &Tensor<f64>) -> Result<Tensor<f64>> {
            assert_eq!(guidance.shape()[0], 3);
            Ok(target.map(|v| v * 0.5))
        }
    }

    #[test]
    fn iterative_filter_counts() {
        let im = Tensor::from_fn(&[2, 3, 3], |i| i as f64);
        assert_eq!(iterative_filter(&im, &Halve, 0, 3).unwrap(), im);
        let one = iterative_filter(&im, &Halve, 1, 3).unwrap();
        assert_eq!(one, im.map(|v| v * 0.5));
        let four = iterative_filter(&im, &Halve, 4, 3).unwrap();
        assert_eq!(four, im.map(|v| v / 16.0));
    }
}
