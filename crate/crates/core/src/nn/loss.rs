use alloc::vec::Vec;


// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use super::Tensor;
use crate::error::{bail, Result};

/// `‖estimate − truth‖² / ‖truth‖²` and its gradient with respect to
/// `estimate`. Interleaved real/imaginary pairs give the complex NMSE.
pub fn nmse_loss(estimate: &Tensor, truth: &Tensor) -> Result<(f64, Tensor)> {
    if estimate.shape() != truth.shape() {
        bail!(Usage, "nmse shape mismatch {:?} vs {:?}", estimate.shape(), truth.shape());
    }
    let denom = truth.sum_sq();
    if denom == 0.0 {
        bail!(Domain, "nmse against a zero-norm truth");
    }
    let diff: Vec<f64> = estimate.data().iter().zip(truth.data()).map(|(a, b)| a - b).collect();
    let value = diff.iter().map(|d| d * d).sum::<f64>() / denom;
    let grad = diff.into_iter().map(|d| 2.0 * d / denom).collect();
    Ok((value, Tensor::new(estimate.shape().to_vec(), grad)?))
}

/// Softmax cross-entropy of `logits` against class `label`, with its
/// gradient. Stabilized by subtracting the max logit.
pub fn cross_entropy_loss(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let z = logits.data();
    if label >= z.len() {
        bail!(Usage, "label {label} out of range for {} classes", z.len());
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let value = total.ln() - (z[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    Ok((value.max(0.0), Tensor::new(logits.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn nmse_examples() {
        let h = Tensor::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(nmse_loss(&h, &h).unwrap().0, 0.0);
        assert!((nmse_loss(&Tensor::zeros(&[3]), &h).unwrap().0 - 1.0).abs() < 1e-15);
        let (v, _) = nmse_loss(&Tensor::from_vec(vec![1.1, 1.0]), &Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((v - 0.005).abs() < 1e-12);
        assert!(matches!(nmse_loss(&h, &Tensor::zeros(&[3])), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        let (v, g) = cross_entropy_loss(&Tensor::from_vec(vec![0.3; 5]), 2).unwrap();
        assert!((v - 5f64.ln()).abs() < 1e-12);
        assert!(g.data().iter().sum::<f64>().abs() < 1e-12);
        let (v, _) = cross_entropy_loss(&Tensor::from_vec(vec![0.0, 1000.0, 0.0]), 1).unwrap();
        assert!(v < 1e-6);
        assert!(matches!(cross_entropy_loss(&Tensor::from_vec(vec![0.0; 3]), 3), Err(crate::Error::Usage(_))));
    }
}
