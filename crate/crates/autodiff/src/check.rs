use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Compares reverse-mode gradients of `f` at `point` against central
/// differences with the given `step`.
///
/// Returns the worst componentwise relative discrepancy, using
/// `max(|analytic|, |numeric|, 1e-12)` as denominator.
pub fn finite_difference_check<F>(f: F, point: &[Tensor], step: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(AutodiffError::Contract(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }

    let analytic = {
        let graph = Graph::new();
        let params: Vec<_> = point.iter().map(|t| graph.param(t.clone())).collect();
        let out = f(&graph, &params)?;
        graph.backward(out, &params, false)?.tensors()
    };

    let eval = |values: &[Tensor]| -> Result<f64> {
        let graph = Graph::new();
        let params: Vec<_> = values.iter().map(|t| graph.constant(t.clone())).collect();
        let v = f(&graph, &params)?.item()?;
        if !v.is_finite() {
            return Err(AutodiffError::NonFinite {
                op: "finite_difference_check",
            });
        }
        Ok(v)
    };

    let mut worst: f64 = 0.0;
    let mut values = point.to_vec();
    for (p, grad) in analytic.iter().enumerate() {
        for k in 0..point[p].len() {
            let base = point[p].data()[k];
            let mut shifted = point[p].to_vec();
            shifted[k] = base + step;
            values[p] = Tensor::new(point[p].shape().to_vec(), shifted.clone())?;
            let up = eval(&values)?;
            shifted[k] = base - step;
            values[p] = Tensor::new(point[p].shape().to_vec(), shifted)?;
            let down = eval(&values)?;
            values[p] = point[p].clone();

            let numeric = (up - down) / (2.0 * step);
            let exact = grad.data()[k];
            let denom = exact.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
