//! Fractional-position sampling with the separable tent kernel.
//!
//! A position `s = (x, y)` reads the four integer neighbours `t` weighted by
//! `g(s_x, t_x) * g(s_y, t_y)` with `g(a, b) = max(0, 1 - |a - b|)`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// What the sampler reads outside the image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BorderMode {
    /// Positions are clamped into the image before sampling.
    #[default]
    Border,
    /// Neighbours outside the image contribute zero.
    Zero,
}

impl BorderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BorderMode::Border => "border",
            BorderMode::Zero => "zero",
        }
    }
}

impl std::str::FromStr for BorderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "border" => Ok(BorderMode::Border),
            "zero" => Ok(BorderMode::Zero),
            _ => Err(Error::Invalid(format!("unknown border mode {s:?}"))),
        }
    }
}

/// One-dimensional tent weight.
#[inline]
pub fn bilinear_g<T: Scalar>(a: T, b: T) -> T {
    (T::one() - (a - b).abs()).max(T::zero())
}

/// The four neighbours of a fractional position with their weights and the
/// derivatives of those weights with respect to the position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Taps<T> {
    /// `(y, x)` of each corner; `None` when the corner lies outside the image in zero mode.
    pub index: [Option<(usize, usize)>; 4],
    pub weight: [T; 4],
    pub d_weight_dx: [T; 4],
    pub d_weight_dy: [T; 4],
}

impl<T: Scalar> Taps<T> {
    pub fn weight_sum(&self) -> T {
        self.index
            .iter()
            .zip(self.weight)
            .filter(|(i, _)| i.is_some())
            .map(|(_, w)| w)
            .sum()
    }
}

/// Tent weights of one axis: floor index, and `(g, dg/ds)` for the lower and upper corner.
/// The derivative is 0 at integer positions, where `g` has its kink.
#[inline]
fn axis<T: Scalar>(s: T) -> (isize, [T; 2], [T; 2]) {
    let base = s.floor();
    let frac = s - base;
    let i0 = base.to_isize().unwrap_or(isize::MIN / 2);
    let d = if frac == T::zero() { T::zero() } else { T::one() };
    (i0, [T::one() - frac, frac], [-d, d])
}

/// Neighbour taps of position `(x, y)` in an `h x w` grid.
pub fn taps<T: Scalar>(x: T, y: T, h: usize, w: usize, mode: BorderMode) -> Taps<T> {
    let (xs, ys, x_live, y_live) = match mode {
        BorderMode::Border => {
            let (xmax, ymax) = (T::from_usize(w - 1).unwrap(), T::from_usize(h - 1).unwrap());
            let xc = x.max(T::zero()).min(xmax);
            let yc = y.max(T::zero()).min(ymax);
            // clamped coordinates carry no gradient
            (xc, yc, xc == x, yc == y)
        }
        BorderMode::Zero => (x, y, true, true),
    };
    let (x0, gx, dgx) = axis(xs);
    let (y0, gy, dgy) = axis(ys);
    let dgx = if x_live { dgx } else { [T::zero(); 2] };
    let dgy = if y_live { dgy } else { [T::zero(); 2] };

    let locate = |yi: isize, xi: isize| -> Option<(usize, usize)> {
        match mode {
            BorderMode::Border => Some((
                yi.clamp(0, h as isize - 1) as usize,
                xi.clamp(0, w as isize - 1) as usize,
            )),
            BorderMode::Zero => {
                (yi >= 0 && xi >= 0 && yi < h as isize && xi < w as isize).then_some((yi as usize, xi as usize))
            }
        }
    };
    let mut t = Taps {
        index: [None; 4],
        weight: [T::zero(); 4],
        d_weight_dx: [T::zero(); 4],
        d_weight_dy: [T::zero(); 4],
    };
    for (k, (dy, dx)) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        t.index[k] = locate(y0 + dy as isize, x0 + dx as isize);
        t.weight[k] = gy[dy] * gx[dx];
        t.d_weight_dx[k] = gy[dy] * dgx[dx];
        t.d_weight_dy[k] = dgy[dy] * gx[dx];
    }
    t
}

fn plane_dims<T: Scalar>(image: &Tensor<T>) -> Result<(usize, usize)> {
    match *image.shape() {
        [1, h, w] if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(Error::shape(
            "sample_bilinear",
            "image",
            format!("expected a non-empty 1 x H x W image, got {:?}", image.shape()),
        )),
    }
}

#[inline]
pub(crate) fn read_taps<T: Scalar>(data: &[T], w: usize, t: &Taps<T>) -> (T, T, T) {
    let mut v = T::zero();
    let mut dx = T::zero();
    let mut dy = T::zero();
    for k in 0..4 {
        if let Some((yy, xx)) = t.index[k] {
            let f = data[yy * w + xx];
            v += t.weight[k] * f;
            dx += t.d_weight_dx[k] * f;
            dy += t.d_weight_dy[k] * f;
        }
    }
    (v, dx, dy)
}

/// Value of a `1 x H x W` image at fractional position `(x, y)`, border-clamped.
pub fn sample_bilinear<T: Scalar>(image: &Tensor<T>, x: T, y: T) -> Result<T> {
    sample_bilinear_with(image, x, y, BorderMode::Border)
}

pub fn sample_bilinear_with<T: Scalar>(image: &Tensor<T>, x: T, y: T, mode: BorderMode) -> Result<T> {
    let (h, w) = plane_dims(image)?;
    let t = taps(x, y, h, w, mode);
    Ok(read_taps(image.data(), w, &t).0)
}

/// Gradients of one sample with respect to the image and the position.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrad<T> {
    /// `(y, x, d value / d f_t * upstream)` for each contributing corner.
    pub image: Vec<(usize, usize, T)>,
    /// `(d/dx, d/dy)` scaled by the upstream gradient.
    pub position: (T, T),
}

pub fn sample_backward<T: Scalar>(image: &Tensor<T>, x: T, y: T, upstream: T) -> Result<SampleGrad<T>> {
    sample_backward_with(image, x, y, upstream, BorderMode::Border)
}

pub fn sample_backward_with<T: Scalar>(
    image: &Tensor<T>,
    x: T,
    y: T,
    upstream: T,
    mode: BorderMode,
) -> Result<SampleGrad<T>> {
    let (h, w) = plane_dims(image)?;
    let t = taps(x, y, h, w, mode);
    let (_, dx, dy) = read_taps(image.data(), w, &t);
    let mut corners: Vec<(usize, usize, T)> = Vec::with_capacity(4);
    for k in 0..4 {
        let Some((yy, xx)) = t.index[k] else { continue };
        if t.weight[k] == T::zero() {
            continue;
        }
        match corners.iter_mut().find(|c| c.0 == yy && c.1 == xx) {
            Some(c) => c.2 += upstream * t.weight[k],
            None => corners.push((yy, xx, upstream * t.weight[k])),
        }
    }
    Ok(SampleGrad {
        image: corners,
        position: (upstream * dx, upstream * dy),
    })
}

/// Clamp a sampling coordinate into the `d`-wide window centred on `center`.
#[inline]
pub fn clamp_to_window<T: Scalar>(s: T, center: T, d: usize) -> T {
    let r = T::from_usize((d - 1) / 2).unwrap();
    s.max(center - r).min(center + r)
}

/// Sampling positions `s(q) = q + dq` for the `k x k` grid around `p`, each coordinate
/// clamped to the `d x d` window centred on `p`.
///
/// `offsets` holds `(dx, dy)` pairs in row-major grid order; the result is `(x, y)` pairs.
pub fn clamp_offsets<T: Scalar>(p: (T, T), k: usize, offsets: &[(T, T)], d: usize) -> Result<Vec<(T, T)>> {
    if k.is_multiple_of(2) || d.is_multiple_of(2) {
        return Err(Error::Invalid(format!("kernel size {k} and window {d} must be odd")));
    }
    if offsets.len() != k * k {
        return Err(Error::shape(
            "clamp_offsets",
            "offsets",
            format!("expected {} pairs, got {}", k * k, offsets.len()),
        ));
    }
    let r = (k / 2) as isize;
    Ok(offsets
        .iter()
        .enumerate()
        .map(|(i, &(dx, dy))| {
            let qy = p.1 + T::from_isize(i as isize / k as isize - r).unwrap();
            let qx = p.0 + T::from_isize(i as isize % k as isize - r).unwrap();
            (clamp_to_window(qx + dx, p.0, d), clamp_to_window(qy + dy, p.1, d))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[1, h, w], v).unwrap()
    }

    #[test]
    fn tent_weight() {
        assert!((bilinear_g(1.3, 1.0) - 0.7f64).abs() < 1e-15);
        assert_eq!(bilinear_g(2.5, 1.0), 0.0f64);
        for x in [-3.25, 0.0, 7.5f64] {
            assert_eq!(bilinear_g(x, x), 1.0);
        }
    }

    #[test]
    fn integer_position_reads_pixel() {
        let im = Tensor::from_fn(&[1, 7, 6], |i| i as f64 * 0.5);
        assert_eq!(sample_bilinear(&im, 3.0, 5.0).unwrap(), im.at3(0, 5, 3));
    }

    #[test]
    fn half_position_averages_corners() {
        let im = img(2, 2, &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(sample_bilinear(&im, 0.5, 0.5).unwrap(), 1.5);
    }

    #[test]
    fn quarter_position_on_row() {
        let im = img(1, 2, &[0.0, 4.0]);
        assert_eq!(sample_bilinear(&im, 0.25, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn backward_at_center_of_square() {
        let im = img(2, 2, &[0.0, 1.0, 2.0, 3.0]);
        let g = sample_backward(&im, 0.5, 0.5, 1.0).unwrap();
        assert_eq!(g.position, (1.0, 2.0));
        assert_eq!(g.image.len(), 4);
        assert!(g.image.iter().all(|c| c.2 == 0.25));
    }

    #[test]
    fn backward_at_integer_hits_one_corner() {
        let im = Tensor::from_fn(&[1, 4, 4], |i| (i * i) as f64);
        let g = sample_backward(&im, 2.0, 1.0, 3.0).unwrap();
        assert_eq!(g.image, vec![(1, 2, 3.0)]);
        assert_eq!(g.position, (0.0, 0.0));
    }

    #[test]
    fn position_gradient_matches_finite_differences() {
        let im = Tensor::from_fn(&[1, 5, 6], |i| ((i * 37) % 11) as f64 * 0.3 - 1.0);
        for &(x, y) in &[(1.3, 2.7), (0.2, 0.9), (4.6, 3.1), (2.5, 1.5)] {
            let g = sample_backward(&im, x, y, 1.0).unwrap();
            let h = 1e-5;
            let nx = (sample_bilinear(&im, x + h, y).unwrap() - sample_bilinear(&im, x - h, y).unwrap()) / (2.0 * h);
            let ny = (sample_bilinear(&im, x, y + h).unwrap() - sample_bilinear(&im, x, y - h).unwrap()) / (2.0 * h);
            assert!((g.position.0 - nx).abs() < 1e-8, "{x},{y}");
            assert!((g.position.1 - ny).abs() < 1e-8, "{x},{y}");
        }
    }

    #[test]
    fn border_mode_clamps_position() {
        let im = img(1, 3, &[1.0, 2.0, 5.0]);
        assert_eq!(sample_bilinear(&im, -4.0, 0.0).unwrap(), 1.0);
        assert_eq!(sample_bilinear(&im, 9.5, 3.0).unwrap(), 5.0);
        let g = sample_backward(&im, 9.5, 0.0, 1.0).unwrap();
        assert_eq!(g.position.0, 0.0);
    }

    #[test]
    fn zero_mode_fades_out() {
        let im = img(1, 2, &[4.0, 8.0]);
        assert_eq!(sample_bilinear_with(&im, -0.5, 0.0, BorderMode::Zero).unwrap(), 2.0);
        assert_eq!(sample_bilinear_with(&im, 1.25, 0.0, BorderMode::Zero).unwrap(), 6.0);
    }

    #[test]
    fn window_clamping() {
        let p = (10.0f64, 10.0f64);
        let zero = vec![(0.0, 0.0); 9];
        let s = clamp_offsets(p, 3, &zero, 15).unwrap();
        assert_eq!(s[0], (9.0, 9.0));
        assert_eq!(s[4], (10.0, 10.0));
        assert_eq!(s[8], (11.0, 11.0));

        let mut off = zero.clone();
        off[4] = (100.0, 0.0);
        assert_eq!(clamp_offsets(p, 3, &off, 15).unwrap()[4], (17.0, 10.0));

        // q at p - 1 in x, displaced by -6.5 -> p - 7.5 -> clamped to p - 7
        let mut off = zero;
        off[3] = (-6.5, 0.0);
        assert_eq!(clamp_offsets(p, 3, &off, 15).unwrap()[3], (3.0, 10.0));
    }

    #[test]
    fn even_sizes_rejected() {
        assert!(clamp_offsets((0.0f32, 0.0), 2, &[(0.0, 0.0); 4], 15).is_err());
        assert!(clamp_offsets((0.0f32, 0.0), 3, &[(0.0, 0.0); 9], 14).is_err());
    }
}
