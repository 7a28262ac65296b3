//! Out-of-sample error.

use crate::error::{HarnessError, Result};

/// Root mean squared error in the units of `truths`.
pub fn oos_rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() || truths.is_empty() {
        return Err(HarnessError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let sse: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / truths.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_rejected() {
        assert!(oos_rmse(&[], &[]).is_err());
    }
}
