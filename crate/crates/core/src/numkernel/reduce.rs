use crate::error::{Error, Result};

/// `log Σ exp(v_i)` over entries whose `mask` flag is `false`.
///
/// A `true` mask entry excludes the value. The unmasked maximum is subtracted before
/// exponentiating and terms are summed in index order.
pub fn logsumexp(values: &[f64], mask: &[bool]) -> Result<f64> {
    if values.len() != mask.len() {
        return Err(Error::invalid(format!(
            "logsumexp: {} values but {} mask flags",
            values.len(),
            mask.len()
        )));
    }
    logsumexp_by(values.len(), |i| (!mask[i]).then(|| values[i]))
}

/// Logsumexp over the `Some` entries produced by `term(0..n)`.
#[inline]
pub(crate) fn logsumexp_by(n: usize, term: impl Fn(usize) -> Option<f64>) -> Result<f64> {
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for i in 0..n {
        if let Some(v) = term(i) {
            any = true;
            if v > max {
                max = v;
            }
        }
    }
    if !any {
        return Err(Error::EmptyReduction);
    }
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mut acc = 0.0;
    for i in 0..n {
        if let Some(v) = term(i) {
            acc += (v - max).exp();
        }
    }
    Ok(max + acc.ln())
}
