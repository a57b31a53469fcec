//! Elementwise activations, the softmax head and input rescaling.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `max(0, x)` elementwise.
pub fn relu<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Passes the upstream gradient where the cached input is strictly positive.
pub fn relu_backward<T: Element>(upstream: &Tensor<T>, cached_input: &Tensor<T>) -> Result<Tensor<T>> {
    cached_input.ensure_same_shape(upstream, "relu_backward")?;
    let data = upstream
        .as_slice()
        .iter()
        .zip(cached_input.as_slice())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(upstream.dims(), data)
}

/// Numerically stable softmax over a rank-1 logit vector.
pub fn softmax<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.shape().rank() != 1 {
        return Err(Error::InvalidArgument(format!(
            "softmax expects a rank-1 tensor, got {:?}",
            logits.dims()
        )));
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite("softmax logits"));
    }
    let max = logits
        .as_slice()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.as_slice().iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::from_vec(logits.dims(), exps.into_iter().map(|e| e / total).collect())
}

/// Vector-Jacobian product of softmax: `p * (g - <g, p>)`.
pub fn softmax_backward<T: Element>(upstream: &Tensor<T>, probs: &Tensor<T>) -> Result<Tensor<T>> {
    probs.ensure_same_shape(upstream, "softmax_backward")?;
    let dot: T = upstream
        .as_slice()
        .iter()
        .zip(probs.as_slice())
        .map(|(&g, &p)| g * p)
        .sum();
    let data = upstream
        .as_slice()
        .iter()
        .zip(probs.as_slice())
        .map(|(&g, &p)| p * (g - dot))
        .collect();
    Tensor::from_vec(probs.dims(), data)
}

pub fn rescale_forward<T: Element>(input: &Tensor<T>, factor: T) -> Result<Tensor<T>> {
    check_factor(factor)?;
    Ok(input.map(|x| x * factor))
}

pub fn rescale_backward<T: Element>(upstream: &Tensor<T>, factor: T) -> Result<Tensor<T>> {
    check_factor(factor)?;
    Ok(upstream.map(|g| g * factor))
}

fn check_factor<T: Element>(factor: T) -> Result<()> {
    if !(factor > T::zero()) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rescale factor must be positive and finite, got {factor}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::argmax;
    use proptest::prelude::*;

    fn vec1(v: Vec<f32>) -> Tensor {
        Tensor::from_vec(&[v.len()], v).unwrap()
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&vec1(vec![3.0])).as_slice(), &[3.0]);
        assert_eq!(relu(&vec1(vec![-2.0])).as_slice(), &[0.0]);
        assert_eq!(relu(&vec1(vec![0.0])).as_slice(), &[0.0]);
        assert_eq!(relu(&vec1(vec![-1.0, 0.0, 2.0])).as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_backward_examples() {
        let up = vec1(vec![5.0, 7.0]);
        assert_eq!(relu_backward(&up, &vec1(vec![-1.0, 2.0])).unwrap().as_slice(), &[0.0, 7.0]);
        assert_eq!(relu_backward(&up, &vec1(vec![1.0, 2.0])).unwrap(), up);
        assert_eq!(relu_backward(&up, &vec1(vec![-1.0, -2.0])).unwrap().as_slice(), &[0.0, 0.0]);
        // subgradient at exactly zero
        assert_eq!(relu_backward(&up, &vec1(vec![0.0, 0.0])).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(relu_backward(&up, &vec1(vec![1.0])).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&vec1(vec![0.3; 4])).unwrap();
        assert!(p.as_slice().iter().all(|&x| (x - 0.25).abs() < 1e-7));

        let p = softmax(&Tensor::from_vec(&[2], vec![0.0f64, 3f64.ln()]).unwrap()).unwrap();
        assert!((p.as_slice()[0] - 0.25).abs() < 1e-12);
        assert!((p.as_slice()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(softmax(&vec1(vec![1.0, f32::NAN])), Err(Error::NonFinite(_))));
        assert!(softmax(&vec1(vec![f32::INFINITY])).is_err());
    }

    #[test]
    fn softmax_extreme_logits_do_not_overflow() {
        let p = softmax(&vec1(vec![1000.0, 0.0, -1000.0])).unwrap();
        assert!(p.all_finite());
        assert!((p.as_slice()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rescale_examples() {
        let f = 1.0f32 / 255.0;
        let y = rescale_forward(&vec1(vec![255.0, 0.0, 128.0]), f).unwrap();
        assert!((y.as_slice()[0] - 1.0).abs() < 1e-6);
        assert_eq!(y.as_slice()[1], 0.0);
        assert!((y.as_slice()[2] - 0.50196).abs() < 1e-5);
        assert!(rescale_forward(&vec1(vec![1.0]), 0.0).is_err());
        assert!(rescale_forward(&vec1(vec![1.0]), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn softmax_laws(z in prop::collection::vec(-30.0f32..30.0, 1..12), c in -20.0f32..20.0) {
            let p = softmax(&vec1(z.clone())).unwrap();
            let total: f32 = p.as_slice().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-6);
            prop_assert!(p.as_slice().iter().all(|&x| x > 0.0 && x <= 1.0));
            let shifted = softmax(&vec1(z.iter().map(|x| x + c).collect())).unwrap();
            for (a, b) in p.as_slice().iter().zip(shifted.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
            // ties in z make argmax sensitive to rounding, check only strict maxima
            let best = argmax(&z).unwrap();
            if z.iter().enumerate().all(|(i, &v)| i == best || v < z[best] - 1e-3) {
                prop_assert_eq!(argmax(p.as_slice()).unwrap(), best);
            }
        }

        #[test]
        fn relu_idempotent(v in prop::collection::vec(-10.0f32..10.0, 1..32)) {
            let x = vec1(v);
            prop_assert_eq!(relu(&relu(&x)), relu(&x));
        }
    }
}
