use log::warn;

use crate::error::{Error, Result};
use crate::net::NUM_CLASSES;

/// Expected score `sum_k k * p_k` over classes 0..=10.
pub fn predict_score(dist: &[f64; NUM_CLASSES]) -> f64 {
    dist.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// Pearson correlation. A constant prediction vector yields 0 (with a
/// warning); a constant reference is an error.
pub fn pcc(predictions: &[f64], references: &[f64]) -> Result<f64> {
    if predictions.len() != references.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} references",
            predictions.len(),
            references.len()
        )));
    }
    if predictions.len() < 2 {
        return Err(Error::Empty("correlation needs at least two points".into()));
    }
    let n = predictions.len() as f64;
    let mp = predictions.iter().sum::<f64>() / n;
    let mr = references.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vr) = (0.0, 0.0, 0.0);
    for (p, r) in predictions.iter().zip(references) {
        cov += (p - mp) * (r - mr);
        vp += (p - mp).powi(2);
        vr += (r - mr).powi(2);
    }
    if vr == 0.0 {
        return Err(Error::Domain("reference scores are constant".into()));
    }
    if vp == 0.0 {
        warn!("constant predictions; correlation defined as 0");
        return Ok(0.0);
    }
    Ok((cov / (vp.sqrt() * vr.sqrt())).clamp(-1.0, 1.0))
}
