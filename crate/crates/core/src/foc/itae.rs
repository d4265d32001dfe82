use crate::error::{invalid, Result};

/// `∫ t·|e(t)| dt` by the trapezoidal rule.
pub fn itae(errors: &[f64], times: &[f64]) -> Result<f64> {
    if errors.len() != times.len() {
        return invalid(format!(
            "{} error samples for {} time stamps",
            errors.len(),
            times.len()
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("time stamps must be increasing");
    }
    Ok(times
        .windows(2)
        .zip(errors.windows(2))
        .map(|(t, e)| 0.5 * (t[1] - t[0]) * (t[0] * e[0].abs() + t[1] * e[1].abs()))
        .sum())
}
