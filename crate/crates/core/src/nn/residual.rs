//! Residual block `x + F(x)` with `F = conv1x1 -> relu -> conv1x1`.
//!
//! Convolutions are valid-only, so the residual branch uses 1x1 kernels to
//! keep the spatial extent unchanged. When the block changes the channel
//! count, the skip path goes through a 1x1 projection.

use crate::error::Result;
use crate::nn::activation::{relu, relu_backward};
use crate::nn::conv::{conv2d_backward, conv2d_forward, KernelSpec};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T = f32> {
    pub(crate) inner: KernelSpec<T>,
    pub(crate) outer: KernelSpec<T>,
    pub(crate) projection: Option<KernelSpec<T>>,
}

#[derive(Debug, Clone)]
pub struct ResidualCache<T> {
    input: Tensor<T>,
    pre_act: Tensor<T>,
    act: Tensor<T>,
}

impl<T: Element> ResidualBlock<T> {
    pub fn new(inner: KernelSpec<T>, outer: KernelSpec<T>, projection: Option<KernelSpec<T>>) -> Result<Self> {
        for k in [Some(&inner), Some(&outer), projection.as_ref()].into_iter().flatten() {
            if k.kernel_h() != 1 || k.kernel_w() != 1 {
                return Err(crate::Error::InvalidArgument(
                    "residual block kernels must be 1x1".into(),
                ));
            }
        }
        if outer.in_channels() != inner.out_channels() {
            return Err(crate::Error::ShapeMismatch {
                context: "residual branch channels",
                expected: vec![inner.out_channels()],
                actual: vec![outer.in_channels()],
            });
        }
        let skip_channels = projection.as_ref().map_or(inner.in_channels(), |p| p.out_channels());
        if skip_channels != outer.out_channels() {
            return Err(crate::Error::ShapeMismatch {
                context: "residual skip channels",
                expected: vec![outer.out_channels()],
                actual: vec![skip_channels],
            });
        }
        Ok(Self { inner, outer, projection })
    }

    pub fn in_channels(&self) -> usize {
        self.inner.in_channels()
    }

    pub fn width(&self) -> usize {
        self.outer.out_channels()
    }

    pub(crate) fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v: Vec<&Tensor<T>> = self.inner.tensors().into_iter().chain(self.outer.tensors()).collect();
        if let Some(p) = &self.projection {
            v.extend(p.tensors());
        }
        v
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = self
            .inner
            .tensors_mut()
            .into_iter()
            .chain(self.outer.tensors_mut())
            .collect();
        if let Some(p) = &mut self.projection {
            v.extend(p.tensors_mut());
        }
        v
    }

    pub fn cast<U: Element>(&self) -> ResidualBlock<U> {
        ResidualBlock {
            inner: self.inner.cast(),
            outer: self.outer.cast(),
            projection: self.projection.as_ref().map(KernelSpec::cast),
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_cached(input).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ResidualCache<T>)> {
        let pre_act = conv2d_forward(input, &self.inner)?;
        let act = relu(&pre_act);
        let mut out = conv2d_forward(&act, &self.outer)?;
        match &self.projection {
            Some(p) => out.add_assign(&conv2d_forward(input, p)?)?,
            None => out.add_assign(input)?,
        }
        Ok((
            out,
            ResidualCache {
                input: input.clone(),
                pre_act,
                act,
            },
        ))
    }

    /// Returns the input gradient and parameter gradients in `tensors()` order.
    pub fn backward(&self, upstream: &Tensor<T>, cache: &ResidualCache<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let outer = conv2d_backward(upstream, &cache.act, &self.outer)?;
        let d_pre = relu_backward(&outer.input, &cache.pre_act)?;
        let inner = conv2d_backward(&d_pre, &cache.input, &self.inner)?;
        let mut d_input = inner.input;
        let mut grads = vec![inner.weights, inner.bias, outer.weights, outer.bias];
        match &self.projection {
            Some(p) => {
                let proj = conv2d_backward(upstream, &cache.input, p)?;
                d_input.add_assign(&proj.input)?;
                grads.push(proj.weights);
                grads.push(proj.bias);
            }
            None => d_input.add_assign(upstream)?,
        }
        Ok((d_input, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn zero_branch_is_exact_identity() {
        let block = ResidualBlock::new(
            KernelSpec::<f32>::zeros(3, 3, 1, 1).unwrap(),
            KernelSpec::zeros(3, 3, 1, 1).unwrap(),
            None,
        )
        .unwrap();
        let x = Tensor::seeded_uniform(&[3, 4, 5], -5.0, 5.0, &mut RngState::new(8)).unwrap();
        assert_eq!(block.forward(&x).unwrap(), x);
    }

    #[test]
    fn skip_gradient_passes_through_zero_branch() {
        let block = ResidualBlock::new(
            KernelSpec::<f32>::zeros(2, 2, 1, 1).unwrap(),
            KernelSpec::zeros(2, 2, 1, 1).unwrap(),
            None,
        )
        .unwrap();
        let x = Tensor::fill(&[2, 2, 2], 1.0).unwrap();
        let (_, cache) = block.forward_cached(&x).unwrap();
        let g = Tensor::fill(&[2, 2, 2], 0.25).unwrap();
        let (dx, grads) = block.backward(&g, &cache).unwrap();
        assert_eq!(dx, g);
        assert_eq!(grads.len(), 4);
    }

    #[test]
    fn width_change_requires_projection() {
        let r = ResidualBlock::new(
            KernelSpec::<f32>::zeros(4, 2, 1, 1).unwrap(),
            KernelSpec::zeros(4, 4, 1, 1).unwrap(),
            None,
        );
        assert!(r.is_err());
        let r = ResidualBlock::new(
            KernelSpec::<f32>::zeros(4, 2, 1, 1).unwrap(),
            KernelSpec::zeros(4, 4, 1, 1).unwrap(),
            Some(KernelSpec::zeros(4, 2, 1, 1).unwrap()),
        )
        .unwrap();
        let y = r.forward(&Tensor::zeros(&[2, 3, 3]).unwrap()).unwrap();
        assert_eq!(y.dims(), &[4, 3, 3]);
    }
}
