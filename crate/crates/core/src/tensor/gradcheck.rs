use super::{Graph, Tensor, Var};
use crate::error::Result;

const STEP: f64 = 1e-5;
/// Below this magnitude both gradients are compared absolutely.
const TINY: f64 = 1e-6;
const TINY_ATOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub passed: bool,
    /// Worst relative error over components compared relatively.
    pub worst_rel_error: f64,
    /// Worst absolute error over near-zero components.
    pub worst_abs_error: f64,
    /// `(input index, component, analytic, numeric)` for every failure.
    pub failures: Vec<(usize, usize, f64, f64)>,
}

/// Compares reverse-mode gradients of the scalar function `f` at `points`
/// against central finite differences with step 1e-5.
///
/// `f` receives a fresh graph and one parameter var per point. Any error
/// raised by `f` is returned as-is.
pub fn grad_check<F>(f: F, points: &[Tensor], rtol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |pts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = pts.iter().map(|p| g.param(p)).collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars = points
        .iter()
        .map(|p| g.param(p))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    let analytic = g.backward(out)?.collect(&vars);

    let mut report = GradCheckReport {
        passed: true,
        worst_rel_error: 0.0,
        worst_abs_error: 0.0,
        failures: Vec::new(),
    };
    let mut work = points.to_vec();
    for (pi, point) in points.iter().enumerate() {
        for k in 0..point.len() {
            let x = point.data()[k];
            work[pi].data_mut()[k] = x + STEP;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = x - STEP;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = x;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[pi].data()[k];
            let scale = a.abs().max(numeric.abs());
            let diff = (a - numeric).abs();
            let ok = if scale < TINY {
                report.worst_abs_error = report.worst_abs_error.max(diff);
                diff <= TINY_ATOL
            } else {
                let rel = diff / scale;
                report.worst_rel_error = report.worst_rel_error.max(rel);
                rel <= rtol
            };
            if !ok {
                report.passed = false;
                report.failures.push((pi, k, a, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Axis;

    #[test]
    fn sum_of_squares_passes_tightly() {
        let p = Tensor::vector(vec![0.3, -1.2, 2.5]);
        let r = grad_check(
            |g, v| {
                let s = g.square(v[0])?;
                g.sum(s, Axis::All)
            },
            &[p],
            1e-6,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn corrupted_rule_is_reported() {
        let p = Tensor::vector(vec![0.3, -1.2, 2.5]);
        // derivative of x^3 deliberately given as 2x
        let r = grad_check(
            |g, v| {
                let c = g.custom_elementwise(v[0], |x| x * x * x, |x| 2.0 * x)?;
                g.sum(c, Axis::All)
            },
            &[p],
            1e-4,
        )
        .unwrap();
        assert!(!r.passed);
        assert_eq!(r.failures.len(), 3);
    }
}
