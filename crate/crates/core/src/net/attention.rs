use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Row-wise softmax, stable for large logits.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Single-head scaled dot-product attention with the phone sequence as
/// queries and the contextual frames as keys and values. Returns the
/// attended rows (`L x D`) and the attention weights (`L x T`).
pub fn cross_attention(
    queries: &Array2<f64>,
    context: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if queries.ncols() != context.ncols() {
        return Err(Error::Shape(format!(
            "query width {} vs context width {}",
            queries.ncols(),
            context.ncols()
        )));
    }
    if queries.nrows() == 0 || context.nrows() == 0 {
        return Err(Error::Shape("attention needs at least one query and one frame".into()));
    }
    let scale = 1.0 / (queries.ncols() as f64).sqrt();
    let weights = softmax_rows(&(queries.dot(&context.t()) * scale));
    Ok((weights.dot(context), weights))
}

/// Gradient wrt the queries; the context is an input and receives none.
pub fn cross_attention_backward(
    d_out: &Array2<f64>,
    weights: &Array2<f64>,
    context: &Array2<f64>,
) -> Array2<f64> {
    let scale = 1.0 / (context.ncols() as f64).sqrt();
    let d_weights = d_out.dot(&context.t());
    let inner = (&d_weights * weights).sum_axis(Axis(1)).insert_axis(Axis(1));
    let d_scores = weights * &(&d_weights - &inner);
    d_scores.dot(context) * scale
}
