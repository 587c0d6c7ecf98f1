use super::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// ‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂).
    pub relative_error: f64,
    pub max_abs_error: f64,
    pub coordinates: usize,
}

/// Compares `analytic` against central finite differences of `loss` over
/// every coordinate of `params`.
pub fn finite_difference_check(
    params: &ParameterSet,
    analytic: &ParameterSet,
    step: f64,
    mut loss: impl FnMut(&ParameterSet) -> f64,
) -> GradCheckReport {
    let base = params.flatten();
    let exact = analytic.flatten();
    assert_eq!(base.len(), exact.len(), "gradient layout differs from parameters");
    let mut probe = params.clone();
    let (mut diff_sq, mut exact_sq, mut numeric_sq, mut max_abs) = (0.0, 0.0, 0.0, 0.0f64);
    for (i, &value) in base.iter().enumerate() {
        probe.set_flat(i, value + step);
        let hi = loss(&probe);
        probe.set_flat(i, value - step);
        let lo = loss(&probe);
        probe.set_flat(i, value);
        let numeric = (hi - lo) / (2.0 * step);
        let d = numeric - exact[i];
        diff_sq += d * d;
        exact_sq += exact[i] * exact[i];
        numeric_sq += numeric * numeric;
        max_abs = max_abs.max(libm::fabs(d));
    }
    let scale = libm::sqrt(exact_sq).max(libm::sqrt(numeric_sq));
    let relative_error = if scale == 0.0 { 0.0 } else { libm::sqrt(diff_sq) / scale };
    GradCheckReport { relative_error, max_abs_error: max_abs, coordinates: base.len() }
}
