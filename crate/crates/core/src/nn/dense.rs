use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Fully connected weights `[out, in]` and bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T = f32> {
    weights: Tensor<T>,
    bias: Tensor<T>,
}

impl<T: Element> DenseParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let &[m, _] = weights.dims() else {
            return Err(Error::InvalidArgument(format!(
                "dense weights must be rank 2, got {:?}",
                weights.dims()
            )));
        };
        if bias.dims() != [m] {
            return Err(Error::ShapeMismatch {
                context: "dense bias",
                expected: vec![m],
                actual: bias.dims().to_vec(),
            });
        }
        Ok(Self { weights, bias })
    }

    pub fn units(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub(crate) fn tensors(&self) -> [&Tensor<T>; 2] {
        [&self.weights, &self.bias]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn cast<U: Element>(&self) -> DenseParams<U> {
        DenseParams {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// `W x + b`.
pub fn dense_forward<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = check_dense(input, weights, bias)?;
    let x = input.as_slice();
    let w = weights.as_slice();
    let out = (0..m)
        .map(|i| {
            let row = &w[i * n..(i + 1) * n];
            row.iter().zip(x).fold(bias.as_slice()[i], |acc, (&a, &b)| acc + a * b)
        })
        .collect();
    Tensor::from_vec(&[m], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Element>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let &[m, n] = weights.dims() else {
        return Err(Error::InvalidArgument("dense weights must be rank 2".into()));
    };
    if upstream.dims() != [m] || input.dims() != [n] {
        return Err(Error::ShapeMismatch {
            context: "dense_backward",
            expected: vec![m, n],
            actual: [upstream.dims(), input.dims()].concat(),
        });
    }
    let g = upstream.as_slice();
    let x = input.as_slice();
    let w = weights.as_slice();
    let mut dx = vec![T::zero(); n];
    let mut dw = Vec::with_capacity(m * n);
    for i in 0..m {
        let gi = g[i];
        dw.extend(x.iter().map(|&xv| gi * xv));
        for (d, &wv) in dx.iter_mut().zip(&w[i * n..(i + 1) * n]) {
            *d += gi * wv;
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(&[n], dx)?,
        weights: Tensor::from_vec(&[m, n], dw)?,
        bias: upstream.clone(),
    })
}

fn check_dense<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize)> {
    let &[m, n] = weights.dims() else {
        return Err(Error::InvalidArgument(format!(
            "dense weights must be rank 2, got {:?}",
            weights.dims()
        )));
    };
    if input.dims() != [n] {
        return Err(Error::ShapeMismatch {
            context: "dense input",
            expected: vec![n],
            actual: input.dims().to_vec(),
        });
    }
    if bias.dims() != [m] {
        return Err(Error::ShapeMismatch {
            context: "dense bias",
            expected: vec![m],
            actual: bias.dims().to_vec(),
        });
    }
    Ok((m, n))
}

/// Row-major flattening to rank 1.
pub fn flatten<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    let n = input.numel();
    input.clone().reshape(&[n]).expect("element count preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_examples() {
        let x = Tensor::from_vec(&[3], vec![1.0f32, -2.0, 0.5]).unwrap();
        let y = dense_forward(&x, &Tensor::eye(3).unwrap(), &Tensor::zeros(&[3]).unwrap()).unwrap();
        assert_eq!(y, x);

        let y = dense_forward(
            &Tensor::from_vec(&[2], vec![1.0f32, 1.0]).unwrap(),
            &Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap(),
            &Tensor::from_vec(&[1], vec![3.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(y.as_slice(), &[6.0]);

        let y = dense_forward(
            &Tensor::<f32>::zeros(&[10]).unwrap(),
            &Tensor::zeros(&[4, 10]).unwrap(),
            &Tensor::zeros(&[4]).unwrap(),
        )
        .unwrap();
        assert_eq!(y.dims(), &[4]);
    }

    #[test]
    fn dense_rejects_mismatch() {
        let r = dense_forward(
            &Tensor::<f32>::zeros(&[3]).unwrap(),
            &Tensor::zeros(&[4, 10]).unwrap(),
            &Tensor::zeros(&[4]).unwrap(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn dense_backward_by_hand() {
        let x = Tensor::from_vec(&[2], vec![1.0f32, 2.0]).unwrap();
        let w = Tensor::from_vec(&[1, 2], vec![3.0f32, 4.0]).unwrap();
        let g = Tensor::from_vec(&[1], vec![0.5f32]).unwrap();
        let d = dense_backward(&g, &x, &w).unwrap();
        assert_eq!(d.weights.as_slice(), &[0.5, 1.0]);
        assert_eq!(d.input.as_slice(), &[1.5, 2.0]);
        assert_eq!(d.bias.as_slice(), &[0.5]);
    }

    #[test]
    fn flatten_examples() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(flatten(&t).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(flatten(&t).dims(), &[4]);
        let v = Tensor::from_vec(&[3], vec![1.0f32, 2.0, 3.0]).unwrap();
        assert_eq!(flatten(&v), v);
        assert_eq!(flatten(&Tensor::<f32>::zeros(&[2, 3, 4]).unwrap()).dims(), &[24]);
    }
}
