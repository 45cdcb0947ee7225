//! Central finite-difference gradient verification.

use crate::error::Result;

use super::tensor::Tensor;

/// Outcome of a finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error across all parameter elements.
    pub max_rel_err: f64,
    /// (param index, element index) of the worst element.
    pub worst: (usize, usize),
}

/// Relative error with unit floor: |a-n| / max(1, |a|, |n|).
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares analytic gradients against central finite differences.
///
/// `f` evaluates the scalar loss and its analytic gradients at the given
/// parameters. Each element is perturbed by ±h (default callers use
/// 1e-4). Elements whose error exceeds `tol` are re-checked at h/10 and
/// h/100: errors caused by a kink (ReLU) straddling the interval vanish
/// as h shrinks, real gradient bugs do not.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, analytic) = f(params)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
    };
    for (pi, p) in params.iter().enumerate() {
        for ei in 0..p.len() {
            let a = analytic[pi].data()[ei];
            let mut best_err = f64::INFINITY;
            for shrink in [1.0, 0.1, 0.01] {
                let n = central_difference(&f, params, pi, ei, h * shrink)?;
                best_err = best_err.min(rel_err(a, n));
                if best_err <= tol {
                    break;
                }
            }
            if best_err > report.max_rel_err {
                report.max_rel_err = best_err;
                report.worst = (pi, ei);
            }
        }
    }
    Ok(report)
}

fn central_difference<F>(f: &F, params: &[Tensor], pi: usize, ei: usize, h: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let mut plus = params.to_vec();
    plus[pi].data_mut()[ei] += h;
    let (lp, _) = f(&plus)?;
    let mut minus = params.to_vec();
    minus[pi].data_mut()[ei] -= h;
    let (lm, _) = f(&minus)?;
    Ok((lp - lm) / (2.0 * h))
}
