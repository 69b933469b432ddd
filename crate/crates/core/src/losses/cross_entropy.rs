use crate::error::{Error, Result};
use crate::losses::{LossMeta, LossOutput};
use crate::numerics::Matrix;

/// Mean softmax cross-entropy over the batch. The gradient is returned in
/// `grad_logits` as `(softmax − onehot) / B`; `grad_embeddings` is an empty
/// `B×0` matrix since logits are the only input.
pub fn cross_entropy_loss(logits: &Matrix, labels: &[usize]) -> Result<LossOutput> {
    let (b, c) = logits.shape();
    if labels.len() != b {
        return Err(Error::Shape {
            op: "cross_entropy labels",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if b == 0 {
        return Err(Error::Domain("cross entropy over an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Domain(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = Matrix::zeros(b, c);
    let mut value = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_denom = denom.ln();
        value += log_denom - (row[label] - max);
        let g = grad.row_mut(i);
        for (j, z) in row.iter().enumerate() {
            g[j] = (z - max).exp() / denom / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    Ok(LossOutput {
        value: value / b as f64,
        grad_embeddings: Matrix::zeros(b, 0),
        grad_logits: Some(grad),
        meta: LossMeta {
            terms: b,
            ..Default::default()
        },
    })
}
