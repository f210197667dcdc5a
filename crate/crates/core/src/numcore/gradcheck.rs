/// Outcome of a central-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate where the largest error occurred.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against `(f(x+δ) − f(x−δ)) / 2δ` at every coordinate.
pub fn grad_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    delta: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut x = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: params.len(),
        tolerance,
        passed: true,
    };
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + delta;
        let up = loss(&x);
        x[k] = orig - delta;
        let down = loss(&x);
        x[k] = orig;
        let numeric = (up - down) / (2.0 * delta);
        let err = relative_error(analytic[k], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = k;
            report.worst_analytic = analytic[k];
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let r = grad_check(|x| x[0] * x[0], &[3.0], &[6.0], 1e-5, 1e-6);
        assert!(r.max_rel_error < 1e-9);
        assert!(r.passed);
    }

    #[test]
    fn doubled_gradient_reports_half() {
        let r = grad_check(|x| x[0] * x[0], &[3.0], &[12.0], 1e-5, 1e-4);
        assert!((r.max_rel_error - 0.5).abs() < 1e-8);
        assert!(!r.passed);
    }
}
