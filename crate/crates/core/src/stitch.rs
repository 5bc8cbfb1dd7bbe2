//! Dense inference for the strided DKN by shift-and-stitch, and single-pass inference for FDKN.

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::filter::OutputGrid;
use crate::nets::{Dkn, Fdkn, Mode, Model, Pass};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Every sub-stride phase of a stride-`s` network, row-major in `(y, x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftPlan {
    pub stride: usize,
    pub shifts: Vec<(usize, usize)>,
}

impl ShiftPlan {
    pub fn new(stride: usize) -> Self {
        let shifts = (0..stride)
            .flat_map(|y| (0..stride).map(move |x| (x, y)))
            .collect();
        ShiftPlan { stride, shifts }
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    /// Buffer slot of shift `(x, y)`.
    pub fn slot(&self, x: usize, y: usize) -> usize {
        y * self.stride + x
    }
}

/// Result of filtering one image.
#[derive(Clone, Debug)]
pub struct Inference<T> {
    pub output: Tensor<T>,
    /// Network forward passes executed.
    pub passes: usize,
    /// Extents actually processed after padding to a multiple of the stride.
    pub padded: (usize, usize),
}

/// Translate `x` pixels left and `y` pixels up, repeating the last row/column.
pub fn shift_inputs<T: Scalar>(image: &Tensor<T>, x: usize, y: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = image.chw()?;
    if n != 1 {
        return Err(Error::shape("shift_inputs", "batch", format!("{:?}", image.shape())));
    }
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for i in 0..h {
            let row = &src[(ch * h + (i + y).min(h - 1)) * w..][..w];
            out.extend((0..w).map(|j| row[(j + x).min(w - 1)]));
        }
    }
    Tensor::from_vec(image.shape(), out)
}

/// Inverse of [`stitch_outputs`]: buffer `(x, y)` holds the pixels at positions `≡ (y, x) mod s`.
pub fn split_outputs<T: Scalar>(image: &Tensor<T>, plan: &ShiftPlan) -> Result<Vec<Tensor<T>>> {
    let (_, c, h, w) = image.chw()?;
    let s = plan.stride;
    if c != 1 || h % s != 0 || w % s != 0 {
        return Err(Error::shape(
            "split_outputs",
            "spatial extent",
            format!("{:?} is not a single plane divisible by {s}", image.shape()),
        ));
    }
    Ok(plan
        .shifts
        .iter()
        .map(|&(x, y)| Tensor::from_fn(&[1, h / s, w / s], |k| image.at3(0, y + s * (k / (w / s)), x + s * (k % (w / s)))))
        .collect())
}

/// Interleave per-shift buffers (slots ordered as in `plan`) into one `1 x sH x sW` image.
pub fn stitch_outputs<T: Scalar>(buffers: &[Option<Tensor<T>>], plan: &ShiftPlan) -> Result<Tensor<T>> {
    if buffers.len() != plan.len() {
        return Err(Error::Invalid(format!(
            "expected {} shift buffers, got {}",
            plan.len(),
            buffers.len()
        )));
    }
    let mut dims = None;
    for (slot, b) in buffers.iter().enumerate() {
        let (x, y) = plan.shifts[slot];
        let b = b
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("missing output buffer for shift ({x}, {y})")))?;
        let (_, c, h, w) = b.chw()?;
        if c != 1 || dims.is_some_and(|d| d != (h, w)) {
            return Err(Error::shape(
                "stitch_outputs",
                "buffer extent",
                format!("shift ({x}, {y}) buffer is {:?}", b.shape()),
            ));
        }
        dims = Some((h, w));
    }
    let (h, w) = dims.unwrap_or((0, 0));
    let s = plan.stride;
    let mut out = Tensor::zeros(&[1, h * s, w * s]);
    for (slot, b) in buffers.iter().enumerate() {
        let (x, y) = plan.shifts[slot];
        let b = b.as_ref().expect("checked above");
        for i in 0..h {
            for j in 0..w {
                out.set3(0, s * i + y, s * j + x, b.at3(0, i, j));
            }
        }
    }
    Ok(out)
}

fn padded_extent(n: usize, s: usize) -> usize {
    n.div_ceil(s) * s
}

/// Reflect-pad guidance and target on the bottom/right to multiples of `s`.
fn pad_pair<T: Scalar>(guidance: &Tensor<T>, target: &Tensor<T>, s: usize) -> Result<(Tensor<T>, Tensor<T>, usize, usize)> {
    let (_, _, h, w) = target.chw()?;
    let (gh, gw) = (guidance.chw()?.2, guidance.chw()?.3);
    if (gh, gw) != (h, w) {
        return Err(Error::shape(
            "joint filter",
            "spatial extent",
            format!("guidance is {gh} x {gw}, target is {h} x {w}"),
        ));
    }
    if h == 0 || w == 0 {
        return Err(Error::shape("joint filter", "spatial extent", "empty image"));
    }
    let (ph, pw) = (padded_extent(h, s), padded_extent(w, s));
    Ok((
        guidance.pad_reflect_br(ph - h, pw - w)?,
        target.pad_reflect_br(ph - h, pw - w)?,
        h,
        w,
    ))
}

fn crop_back<T: Scalar>(t: Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (_, _, th, tw) = t.chw()?;
    if (th, tw) == (h, w) {
        Ok(t)
    } else {
        t.crop(0, 0, h, w, T::zero())
    }
}

/// Dense DKN output from one forward pass per sub-stride phase.
///
/// Inputs are zero padded by the receptive-field margin first, so each shifted pass sees
/// exactly the patches a per-pixel evaluation would.
pub fn infer_shift_and_stitch<T: Scalar>(model: &Dkn<T>, guidance: &Tensor<T>, target: &Tensor<T>) -> Result<Inference<T>> {
    let s = model.stride();
    let (guidance, target, h, w) = pad_pair(guidance, target, s)?;
    let (_, _, ph, pw) = target.chw()?;
    let (mh, mw) = (ph / s, pw / s);
    let lead = model.lead_padding();
    let (eh, ew) = (model.input_extent(mh), model.input_extent(mw));
    // enough trailing zeros that the largest shift never reaches the clamped edge
    let (tail_h, tail_w) = (eh + s - 1 - lead - ph, ew + s - 1 - lead - pw);
    let gp = guidance.pad_zero(lead, tail_h, lead, tail_w)?;
    let tp = target.pad_zero(lead, tail_h, lead, tail_w)?;
    let plan = ShiftPlan::new(s);
    let mut buffers: Vec<Option<Tensor<T>>> = vec![None; plan.len()];
    let mut passes = 0;
    for &(x, y) in &plan.shifts {
        let gi = shift_inputs(&gp, x, y)?.crop(0, 0, eh, ew, T::zero())?;
        let ti = shift_inputs(&tp, x, y)?.crop(0, 0, eh, ew, T::zero())?;
        let mut graph = Graph::inference();
        let mut pass = Pass::new(&mut graph, Mode::Eval);
        let sample = pass.graph.constant(target.clone());
        let grid = OutputGrid {
            y0: y,
            x0: x,
            stride: s,
            h: mh,
            w: mw,
        };
        let out = model.forward_inputs(&mut pass, gi, ti, sample, grid)?;
        passes += 1;
        buffers[plan.slot(x, y)] = Some(pass.graph.value(out.filtered).clone());
    }
    let output = crop_back(stitch_outputs(&buffers, &plan)?, h, w)?;
    Ok(Inference {
        output,
        passes,
        padded: (ph, pw),
    })
}

/// Dense FDKN output from a single forward pass.
pub fn infer_single_pass<T: Scalar>(model: &Fdkn<T>, guidance: &Tensor<T>, target: &Tensor<T>) -> Result<Inference<T>> {
    let (guidance, target, h, w) = pad_pair(guidance, target, model.resample_stride())?;
    let (_, _, ph, pw) = target.chw()?;
    let mut graph = Graph::inference();
    let mut pass = Pass::new(&mut graph, Mode::Eval);
    let sample = pass.graph.constant(target.clone());
    let out = model.forward_region(&mut pass, &guidance, &target, sample, OutputGrid::dense(ph, pw))?;
    let output = crop_back(pass.graph.value(out.filtered).clone(), h, w)?;
    Ok(Inference {
        output,
        passes: 1,
        padded: (ph, pw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_has_every_phase_once() {
        let p = ShiftPlan::new(4);
        assert_eq!(p.len(), 16);
        let mut seen = [false; 16];
        for &(x, y) in &p.shifts {
            assert!(!seen[p.slot(x, y)]);
            seen[p.slot(x, y)] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn shift_clamps_vacated_edge() {
        let row = Tensor::<f64>::from_f64(&[1, 1, 3], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(shift_inputs(&row, 0, 0).unwrap(), row);
        assert_eq!(shift_inputs(&row, 1, 0).unwrap().data(), &[2.0, 3.0, 3.0]);
    }

    #[test]
    fn shifts_compose() {
        let t = Tensor::<f64>::from_fn(&[2, 5, 6], |i| (i * 37 % 11) as f64);
        let a = shift_inputs(&shift_inputs(&t, 1, 0).unwrap(), 0, 1).unwrap();
        assert_eq!(a, shift_inputs(&t, 1, 1).unwrap());
    }

    #[test]
    fn stitch_interleaves_by_phase() {
        let plan = ShiftPlan::new(4);
        let bufs: Vec<_> = plan
            .shifts
            .iter()
            .map(|&(x, y)| Some(Tensor::<f64>::full(&[1, 2, 3], (10 * x + y) as f64)))
            .collect();
        let out = stitch_outputs(&bufs, &plan).unwrap();
        assert_eq!(out.shape(), &[1, 8, 12]);
        for r in 0..8 {
            for c in 0..12 {
                assert_eq!(out.at3(0, r, c), (10 * (c % 4) + r % 4) as f64);
            }
        }
    }

    #[test]
    fn constant_buffers_stitch_to_constant() {
        let plan = ShiftPlan::new(4);
        let bufs = vec![Some(Tensor::<f32>::full(&[1, 3, 3], 2.5)); 16];
        assert!(stitch_outputs(&bufs, &plan).unwrap().data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn stitch_inverts_split() {
        let plan = ShiftPlan::new(4);
        let img = Tensor::<f64>::from_fn(&[1, 12, 8], |i| i as f64 * 0.3);
        let bufs: Vec<_> = split_outputs(&img, &plan).unwrap().into_iter().map(Some).collect();
        assert_eq!(stitch_outputs(&bufs, &plan).unwrap(), img);
    }

    #[test]
    fn missing_buffer_is_reported() {
        let plan = ShiftPlan::new(4);
        let mut bufs = vec![Some(Tensor::<f32>::zeros(&[1, 2, 2])); 16];
        bufs[plan.slot(2, 1)] = None;
        let err = stitch_outputs(&bufs, &plan).unwrap_err().to_string();
        assert!(err.contains("(2, 1)"), "{err}");
    }
}
