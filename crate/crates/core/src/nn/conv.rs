//! Valid 2-D convolution, stride 1, no padding.
//!
//! Implemented as cross-correlation (the kernel is not flipped), which is the
//! usual deep-learning convention. For kernels that are symmetric under a
//! 180 degree rotation, including every kernel in the standard filter bank,
//! the two operations coincide.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Weights `[out_channels, in_channels, kernel_h, kernel_w]` and bias `[out_channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec<T = f32> {
    weights: Tensor<T>,
    bias: Tensor<T>,
}

impl<T: Element> KernelSpec<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let &[out_c, _, _, _] = weights.dims() else {
            return Err(Error::InvalidArgument(format!(
                "kernel weights must be rank 4, got {:?}",
                weights.dims()
            )));
        };
        if bias.dims() != [out_c] {
            return Err(Error::ShapeMismatch {
                context: "kernel bias",
                expected: vec![out_c],
                actual: bias.dims().to_vec(),
            });
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[out_channels, in_channels, kernel_h, kernel_w])?,
            Tensor::zeros(&[out_channels])?,
        )
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn kernel_h(&self) -> usize {
        self.weights.dims()[2]
    }

    pub fn kernel_w(&self) -> usize {
        self.weights.dims()[3]
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.bias
    }

    pub(crate) fn tensors(&self) -> [&Tensor<T>; 2] {
        [&self.weights, &self.bias]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn cast<U: Element>(&self) -> KernelSpec<U> {
        KernelSpec {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
        }
    }

    /// Output `[C_out, H - f_h + 1, W - f_w + 1]` for an input `[C_in, H, W]`.
    pub fn output_dims(&self, input: &[usize]) -> Result<[usize; 3]> {
        let &[c, h, w] = input else {
            return Err(Error::InvalidArgument(format!(
                "conv2d expects a [C, H, W] input, got {input:?}"
            )));
        };
        if c != self.in_channels() {
            return Err(Error::ShapeMismatch {
                context: "conv2d input channels",
                expected: vec![self.in_channels()],
                actual: vec![c],
            });
        }
        if h < self.kernel_h() || w < self.kernel_w() {
            return Err(Error::InvalidArgument(format!(
                "kernel {}x{} larger than input {h}x{w}",
                self.kernel_h(),
                self.kernel_w()
            )));
        }
        Ok([self.out_channels(), h - self.kernel_h() + 1, w - self.kernel_w() + 1])
    }
}

pub fn conv2d_forward<T: Element>(input: &Tensor<T>, kernel: &KernelSpec<T>) -> Result<Tensor<T>> {
    let [out_c, oh, ow] = kernel.output_dims(input.dims())?;
    let (in_c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let (kh, kw) = (kernel.kernel_h(), kernel.kernel_w());
    let x = input.as_slice();
    let wt = kernel.weights.as_slice();
    let mut out = Vec::with_capacity(out_c * oh * ow);
    for &b in kernel.bias.as_slice() {
        out.extend(std::iter::repeat_n(b, oh * ow));
    }
    for co in 0..out_c {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..in_c {
            let src = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wt[((co * in_c + ci) * kh + ky) * kw + kx];
                    for oy in 0..oh {
                        let row = &src[(oy + ky) * w + kx..(oy + ky) * w + kx + ow];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for (d, &s) in dst.iter_mut().zip(row) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[out_c, oh, ow], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients of a scalar loss given `upstream = dL/d(output)` and the cached forward input.
pub fn conv2d_backward<T: Element>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    kernel: &KernelSpec<T>,
) -> Result<ConvGrads<T>> {
    let out_dims = kernel.output_dims(input.dims())?;
    if upstream.dims() != out_dims {
        return Err(Error::ShapeMismatch {
            context: "conv2d_backward upstream",
            expected: out_dims.to_vec(),
            actual: upstream.dims().to_vec(),
        });
    }
    let [out_c, oh, ow] = out_dims;
    let (in_c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let (kh, kw) = (kernel.kernel_h(), kernel.kernel_w());
    let x = input.as_slice();
    let g = upstream.as_slice();
    let wt = kernel.weights.as_slice();

    let mut dx = vec![T::zero(); x.len()];
    let mut dw = vec![T::zero(); wt.len()];
    let db: Vec<T> = (0..out_c)
        .map(|co| g[co * oh * ow..(co + 1) * oh * ow].iter().copied().sum())
        .collect();

    for co in 0..out_c {
        let gplane = &g[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..in_c {
            let src = &x[ci * h * w..(ci + 1) * h * w];
            let dsrc = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((co * in_c + ci) * kh + ky) * kw + kx;
                    let wv = wt[widx];
                    let mut acc = T::zero();
                    for oy in 0..oh {
                        let base = (oy + ky) * w + kx;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        for (&gv, &s) in grow.iter().zip(&src[base..base + ow]) {
                            acc += gv * s;
                        }
                        for (d, &gv) in dsrc[base..base + ow].iter_mut().zip(grow) {
                            *d += wv * gv;
                        }
                    }
                    dw[widx] = acc;
                }
            }
        }
    }

    Ok(ConvGrads {
        input: Tensor::from_vec(input.dims(), dx)?,
        weights: Tensor::from_vec(kernel.weights.dims(), dw)?,
        bias: Tensor::from_vec(&[out_c], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use proptest::prelude::*;

    fn kernel_from(rows: &[f32], kh: usize, kw: usize) -> KernelSpec {
        KernelSpec::new(
            Tensor::from_vec(&[1, 1, kh, kw], rows.to_vec()).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn output_shape_follows_valid_formula() {
        let k = KernelSpec::<f32>::zeros(4, 1, 3, 3).unwrap();
        let x = Tensor::zeros(&[1, 5, 5]).unwrap();
        assert_eq!(conv2d_forward(&x, &k).unwrap().dims(), &[4, 3, 3]);
    }

    #[test]
    fn identity_kernel_yields_central_crop() {
        let k = kernel_from(&[0., 0., 0., 0., 1., 0., 0., 0., 0.], 3, 3);
        let x = Tensor::seeded_uniform(&[1, 5, 6], 0.0, 255.0, &mut RngState::new(2)).unwrap();
        let y = conv2d_forward(&x, &k).unwrap();
        assert_eq!(y.dims(), &[1, 3, 4]);
        for r in 0..3 {
            for c in 0..4 {
                assert_eq!(y.as_slice()[r * 4 + c], x.as_slice()[(r + 1) * 6 + c + 1]);
            }
        }
    }

    #[test]
    fn box_blur_of_ones() {
        let k = KernelSpec::new(
            Tensor::fill(&[1, 1, 3, 3], 1.0f64 / 9.0).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        let x = Tensor::fill(&[1, 3, 3], 1.0f64).unwrap();
        let y = conv2d_forward(&x, &k).unwrap();
        assert_eq!(y.dims(), &[1, 1, 1]);
        assert!((y.as_slice()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bias_added_per_output_channel() {
        let k = KernelSpec::new(
            Tensor::<f32>::zeros(&[2, 1, 1, 1]).unwrap(),
            Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap(),
        )
        .unwrap();
        let y = conv2d_forward(&Tensor::zeros(&[1, 2, 2]).unwrap(), &k).unwrap();
        assert_eq!(y.as_slice(), &[0.5, 0.5, 0.5, 0.5, -1.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn rejects_oversized_kernel_and_channel_mismatch() {
        let k = KernelSpec::<f32>::zeros(1, 1, 4, 4).unwrap();
        assert!(conv2d_forward(&Tensor::zeros(&[1, 3, 5]).unwrap(), &k).is_err());
        assert!(conv2d_forward(&Tensor::zeros(&[2, 5, 5]).unwrap(), &k).is_err());
    }

    #[test]
    fn backward_zero_upstream() {
        let mut rng = RngState::new(4);
        let k = KernelSpec::new(
            Tensor::seeded_uniform(&[2, 2, 2, 2], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::zeros(&[2]).unwrap(),
        )
        .unwrap();
        let x = Tensor::seeded_uniform(&[2, 4, 4], -1.0, 1.0, &mut rng).unwrap();
        let g = conv2d_backward(&Tensor::zeros(&[2, 3, 3]).unwrap(), &x, &k).unwrap();
        assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.weights.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.bias.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_scalar_chain_rule() {
        let k = kernel_from(&[0.7], 1, 1);
        let x = Tensor::from_vec(&[1, 1, 1], vec![3.0f32]).unwrap();
        let up = Tensor::from_vec(&[1, 1, 1], vec![2.0f32]).unwrap();
        let g = conv2d_backward(&up, &x, &k).unwrap();
        assert_eq!(g.weights.as_slice(), &[6.0]);
        assert_eq!(g.bias.as_slice(), &[2.0]);
        assert!((g.input.as_slice()[0] - 1.4).abs() < 1e-6);
    }

    #[test]
    fn backward_rejects_wrong_upstream_shape() {
        let k = KernelSpec::<f32>::zeros(1, 1, 2, 2).unwrap();
        let x = Tensor::zeros(&[1, 3, 3]).unwrap();
        assert!(conv2d_backward(&Tensor::zeros(&[1, 3, 3]).unwrap(), &x, &k).is_err());
    }

    proptest! {
        #[test]
        fn output_dims_for_any_fitting_kernel(h in 1usize..10, w in 1usize..10, fh in 1usize..10, fw in 1usize..10) {
            prop_assume!(fh <= h && fw <= w);
            let k = KernelSpec::<f32>::zeros(2, 1, fh, fw).unwrap();
            let y = conv2d_forward(&Tensor::zeros(&[1, h, w]).unwrap(), &k).unwrap();
            prop_assert_eq!(y.dims(), &[2, h - fh + 1, w - fw + 1]);
        }
    }
}
