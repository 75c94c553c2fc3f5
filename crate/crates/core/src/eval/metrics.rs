use crate::error::{Error, Result};

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "metric needs equal non-empty lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    Ok(())
}

/// Root mean squared error `√(Σ(ŷ−y)²/n)`.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let sq: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// Mean absolute error `Σ|ŷ−y|/n`.
pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let abs: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(abs / pred.len() as f64)
}
