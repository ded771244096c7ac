use crate::error::{Error, Result};

/// Aitken acceleration stopping rule on the last three log-likelihoods.
///
/// With `c = (l[h+1] - l[h]) / (l[h] - l[h-1])` the projected limit is
/// `l[h] + (l[h+1] - l[h]) / (1 - c)`; the sequence has converged when that
/// projection is within `tol` of `l[h]`. A flat pair counts as converged and a
/// non-contracting step (`c >= 1`) never does.
pub fn aitken_converged(history: &[f64], tol: f64) -> Result<bool> {
    if history.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: history.len(),
        });
    }
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("log-likelihood history is not finite".into()));
    }
    let n = history.len();
    let (prev, cur, next) = (history[n - 3], history[n - 2], history[n - 1]);
    let step_prev = cur - prev;
    let step = next - cur;
    if step_prev == 0.0 {
        return Ok(true);
    }
    // Increments at the rounding floor of the values themselves.
    if step.abs() <= 8.0 * f64::EPSILON * cur.abs() && step_prev.abs() <= 8.0 * f64::EPSILON * cur.abs() {
        return Ok(true);
    }
    let c = step / step_prev;
    if c >= 1.0 {
        return Ok(false);
    }
    let projected = cur + step / (1.0 - c);
    Ok((projected - cur).abs() < tol)
}
