//! Loss functions and evaluation metrics.
//!
//! Regression uses mean squared error over all output entries;
//! classification uses softmax cross-entropy on logits with labels given
//! as class indices. Both return the scalar loss and `dL/dy` at the
//! prediction, shaped like the prediction (`n_L x B`).

use ndarray::{Array2, Axis};

/// Mean squared error over every entry: `L = mean((y - t)^2)`.
/// Gradient: `2 (y - t) / (n_L * B)`.
pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    assert_eq!(
        pred.dim(),
        target.dim(),
        "prediction shape {:?} vs target shape {:?}",
        pred.dim(),
        target.dim()
    );
    let n = pred.len() as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.mapv(|d| 2.0 * d / n);
    (loss, grad)
}

/// Scalar MSE without the gradient.
pub fn mse_value(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    assert_eq!(pred.dim(), target.dim());
    let n = pred.len() as f64;
    pred.iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

/// Softmax cross-entropy averaged over the batch.
/// `logits` is `C x B`; `labels[b]` is the class index of column `b`.
/// Gradient: `(softmax(logits) - onehot) / B`.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let (classes, batch) = logits.dim();
    assert_eq!(labels.len(), batch, "label count must equal batch size");
    assert!(
        labels.iter().all(|&c| c < classes),
        "label out of range for {classes} classes"
    );
    let mut grad = Array2::zeros((classes, batch));
    let mut loss = 0.0;
    for (b, mut gcol) in grad.columns_mut().into_iter().enumerate() {
        let col = logits.index_axis(Axis(1), b);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = col.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + max - col[labels[b]];
        for (c, g) in gcol.iter_mut().enumerate() {
            let p = exps[c] / sum;
            *g = (p - if c == labels[b] { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    (loss / batch as f64, grad)
}

/// Scalar cross-entropy without the gradient.
pub fn cross_entropy_value(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let (classes, batch) = logits.dim();
    assert_eq!(labels.len(), batch);
    let mut loss = 0.0;
    for b in 0..batch {
        let col = logits.index_axis(Axis(1), b);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = col.iter().map(|&z| (z - max).exp()).sum();
        debug_assert!(labels[b] < classes);
        loss += sum.ln() + max - col[labels[b]];
    }
    loss / batch as f64
}

/// Fraction of columns whose argmax matches the label. Ties resolve to
/// the lowest class index.
pub fn accuracy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let batch = logits.ncols();
    assert_eq!(labels.len(), batch);
    let mut correct = 0usize;
    for b in 0..batch {
        let col = logits.index_axis(Axis(1), b);
        let mut best = 0usize;
        for (c, &v) in col.iter().enumerate() {
            if v > col[best] {
                best = c;
            }
        }
        if best == labels[b] {
            correct += 1;
        }
    }
    correct as f64 / batch as f64
}
