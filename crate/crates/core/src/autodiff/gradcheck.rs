//! Central finite differences against reverse-mode gradients.

use super::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compare `analytic[i]` with `(f(x + h e_i) - f(x - h e_i)) / 2h` for each `i` in `coords`.
///
/// `eval_shifted(i, delta)` must evaluate the scalar function with coordinate `i`
/// displaced by `delta` and every other coordinate untouched.
pub fn compare_with_central_differences(
    analytic: &[f64],
    coords: &[usize],
    h: f64,
    mut eval_shifted: impl FnMut(usize, f64) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for &i in coords {
        let a = *analytic
            .get(i)
            .ok_or_else(|| Error::Invalid(format!("coordinate {i} out of range")))?;
        let plus = eval_shifted(i, h)?;
        let minus = eval_shifted(i, -h)?;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(a, numeric);
        if err >= report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Check the gradient of a scalar function of one tensor, built by `f` on a fresh graph.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    finite_diff_check_at(f, x, h, &coords)
}

/// As [`finite_diff_check`], restricted to a subset of coordinates.
pub fn finite_diff_check_at<F>(f: F, x: &Tensor<f64>, h: f64, coords: &[usize]) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.input(x.clone(), true);
    let root = f(&mut g, xv)?;
    let grads = g.backward(root)?;
    let analytic = grads
        .wrt(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |i: usize, delta: f64| -> Result<f64> {
        let mut shifted = x.clone();
        shifted.data_mut()[i] += delta;
        let mut g = Graph::inference();
        let xv = g.constant(shifted);
        let root = f(&mut g, xv)?;
        Ok(g.value(root).data()[0])
    };
    compare_with_central_differences(analytic.data(), coords, h, eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_f64(&[3], &[0.3, -1.2, 2.0]).unwrap();
        let w = Tensor::from_f64(&[3], &[1.5, -0.5, 2.25]).unwrap();
        let r = finite_diff_check(
            |g, x| {
                let w = g.constant(w.clone());
                let p = g.mul(w, x)?;
                g.sum(p)
            },
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-10, "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn quadratic_at_three() {
        let x = Tensor::from_f64(&[1], &[3.0]).unwrap();
        let r = finite_diff_check(
            |g, x| {
                let sq = g.mul(x, x)?;
                g.sum(sq)
            },
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert_eq!(r.analytic, 6.0);
        assert!((r.numeric - 6.0).abs() < 1e-6);
    }
}
