use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch.
///
/// Returns the loss and `dL/dlogits` (already divided by the batch size).
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.ndim() != 2 || logits.rows() != labels.len() {
        return Err(Error::Shape {
            context: "softmax_xent",
            expected: vec![labels.len(), 0],
            actual: logits.shape().to_vec(),
        });
    }
    let (b, c) = (logits.rows(), logits.row_len());
    let mut grad = Tensor::zeros(&[b, c]);
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for (r, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::config(format!("label {y} out of range for {c} classes")));
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // sum of exp(v - max) with the leading 1 split off for precision
        let am = row.iter().position(|&v| v == max).unwrap_or(0);
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != am)
            .map(|(_, v)| (v - max).exp())
            .sum();
        let lse = rest.ln_1p();
        let log_z = max + lse;
        loss += (max - row[y]) + lse;
        let g = grad.row_mut(r);
        for (j, v) in row.iter().enumerate() {
            g[j] = (v - log_z).exp() * inv_b;
        }
        g[y] -= inv_b;
    }
    Ok((loss * inv_b, grad))
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let l = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        let (loss, g) = softmax_xent(&l, &[0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g.data(), &[-0.5, 0.5]);
    }

    #[test]
    fn confident_logits() {
        let l = Tensor::from_vec(&[1, 2], vec![10.0, -10.0]).unwrap();
        let (loss, _) = softmax_xent(&l, &[0]).unwrap();
        // ln(1 + e^-20)
        let expected = (-20f64).exp().ln_1p();
        assert!((loss - expected).abs() < 1e-22);
        assert!((loss - 2.06e-9).abs() < 1e-11);
    }

    #[test]
    fn mean_reduction_and_zero_row_sums() {
        let one = Tensor::from_vec(&[1, 3], vec![0.3, -1.2, 2.0]).unwrap();
        let two = Tensor::from_vec(&[2, 3], vec![0.3, -1.2, 2.0, 0.3, -1.2, 2.0]).unwrap();
        let (a, _) = softmax_xent(&one, &[1]).unwrap();
        let (b, g) = softmax_xent(&two, &[1, 1]).unwrap();
        assert!((a - b).abs() < 1e-15);
        for r in 0..2 {
            assert!(g.row(r).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn label_out_of_range() {
        let l = Tensor::zeros(&[1, 2]);
        assert!(softmax_xent(&l, &[2]).is_err());
    }
}
