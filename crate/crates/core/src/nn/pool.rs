//! Spatial pooling: max, average and sum reductions over sliding windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolOp {
    Max,
    Average,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolMode {
    pub op: PoolOp,
    pub window_h: usize,
    pub window_w: usize,
    pub stride: usize,
}

impl PoolMode {
    /// Non-overlapping 2x2 window.
    pub fn new(op: PoolOp) -> Self {
        Self::square(op, 2)
    }

    pub fn square(op: PoolOp, window: usize) -> Self {
        Self {
            op,
            window_h: window,
            window_w: window,
            stride: window,
        }
    }

    pub fn output_dims(&self, input: &[usize]) -> Result<[usize; 3]> {
        let &[c, h, w] = input else {
            return Err(Error::InvalidArgument(format!(
                "pool expects a [C, H, W] input, got {input:?}"
            )));
        };
        if self.window_h == 0 || self.window_w == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("pool window and stride must be >= 1".into()));
        }
        if self.window_h > h || self.window_w > w {
            return Err(Error::InvalidArgument(format!(
                "pool window {}x{} exceeds input {h}x{w}",
                self.window_h, self.window_w
            )));
        }
        Ok([
            c,
            (h - self.window_h) / self.stride + 1,
            (w - self.window_w) / self.stride + 1,
        ])
    }
}

pub fn pool_forward<T: Element>(input: &Tensor<T>, mode: PoolMode) -> Result<Tensor<T>> {
    let [c, oh, ow] = mode.output_dims(input.dims())?;
    let (h, w) = (input.dims()[1], input.dims()[2]);
    let x = input.as_slice();
    let area = T::of((mode.window_h * mode.window_w) as f64);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let (y0, x0) = (oy * mode.stride, ox * mode.stride);
                let window = (y0..y0 + mode.window_h)
                    .flat_map(|y| plane[y * w + x0..y * w + x0 + mode.window_w].iter().copied());
                let v = match mode.op {
                    PoolOp::Max => window.fold(T::neg_infinity(), |m, v| if v > m { v } else { m }),
                    PoolOp::Sum => window.sum(),
                    PoolOp::Average => window.sum::<T>() / area,
                };
                out.push(v);
            }
        }
    }
    Tensor::from_vec(&[c, oh, ow], out)
}

/// Flat index (within its channel plane) of the first maximal cell of every max-pool window.
pub(crate) fn max_positions<T: Element>(input: &Tensor<T>, mode: PoolMode) -> Result<Vec<usize>> {
    let [c, oh, ow] = mode.output_dims(input.dims())?;
    let (h, w) = (input.dims()[1], input.dims()[2]);
    let x = input.as_slice();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let (y0, x0) = (oy * mode.stride, ox * mode.stride);
                let mut best = y0 * w + x0;
                for y in y0..y0 + mode.window_h {
                    for xx in x0..x0 + mode.window_w {
                        if plane[y * w + xx] > plane[best] {
                            best = y * w + xx;
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    Ok(out)
}

/// Gradient w.r.t. the pooled input. Max routes to the first maximal cell of
/// each window; overlapping windows accumulate.
pub fn pool_backward<T: Element>(upstream: &Tensor<T>, input: &Tensor<T>, mode: PoolMode) -> Result<Tensor<T>> {
    let out_dims = mode.output_dims(input.dims())?;
    if upstream.dims() != out_dims {
        return Err(Error::ShapeMismatch {
            context: "pool_backward upstream",
            expected: out_dims.to_vec(),
            actual: upstream.dims().to_vec(),
        });
    }
    let [c, oh, ow] = out_dims;
    let (h, w) = (input.dims()[1], input.dims()[2]);
    let x = input.as_slice();
    let g = upstream.as_slice();
    let area = T::of((mode.window_h * mode.window_w) as f64);
    let mut dx = vec![T::zero(); x.len()];
    for ch in 0..c {
        let off = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let gv = g[(ch * oh + oy) * ow + ox];
                let (y0, x0) = (oy * mode.stride, ox * mode.stride);
                match mode.op {
                    PoolOp::Max => {
                        let mut best = off + y0 * w + x0;
                        for y in y0..y0 + mode.window_h {
                            for xx in x0..x0 + mode.window_w {
                                let i = off + y * w + xx;
                                if x[i] > x[best] {
                                    best = i;
                                }
                            }
                        }
                        dx[best] += gv;
                    }
                    PoolOp::Sum | PoolOp::Average => {
                        let share = if mode.op == PoolOp::Sum { gv } else { gv / area };
                        for y in y0..y0 + mode.window_h {
                            for d in &mut dx[off + y * w + x0..off + y * w + x0 + mode.window_w] {
                                *d += share;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(input.dims(), dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> Tensor {
        Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn forward_examples() {
        let x = square();
        assert_eq!(pool_forward(&x, PoolMode::new(PoolOp::Max)).unwrap().as_slice(), &[4.0]);
        assert_eq!(pool_forward(&x, PoolMode::new(PoolOp::Average)).unwrap().as_slice(), &[2.5]);
        assert_eq!(pool_forward(&x, PoolMode::new(PoolOp::Sum)).unwrap().as_slice(), &[10.0]);
    }

    #[test]
    fn backward_examples() {
        let x = square();
        let one = |v: f32| Tensor::from_vec(&[1, 1, 1], vec![v]).unwrap();
        assert_eq!(
            pool_backward(&one(1.0), &x, PoolMode::new(PoolOp::Max)).unwrap().as_slice(),
            &[0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            pool_backward(&one(4.0), &x, PoolMode::new(PoolOp::Average)).unwrap().as_slice(),
            &[1.0; 4]
        );
        assert_eq!(
            pool_backward(&one(-2.5), &x, PoolMode::new(PoolOp::Sum)).unwrap().as_slice(),
            &[-2.5; 4]
        );
    }

    #[test]
    fn max_ties_route_to_lowest_index() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0f32, 5.0, 5.0, 5.0]).unwrap();
        let g = Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(
            pool_backward(&g, &x, PoolMode::new(PoolOp::Max)).unwrap().as_slice(),
            &[0.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn overlapping_windows_accumulate() {
        let mode = PoolMode {
            op: PoolOp::Sum,
            window_h: 2,
            window_w: 2,
            stride: 1,
        };
        let x = Tensor::<f32>::zeros(&[1, 3, 3]).unwrap();
        let g = Tensor::fill(&[1, 2, 2], 1.0).unwrap();
        let dx = pool_backward(&g, &x, mode).unwrap();
        assert_eq!(dx.as_slice(), &[1., 2., 1., 2., 4., 2., 1., 2., 1.]);
    }

    #[test]
    fn window_larger_than_input_is_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2]).unwrap();
        assert!(pool_forward(&x, PoolMode::square(PoolOp::Max, 3)).is_err());
    }

    #[test]
    fn output_dims_use_floor_rule() {
        let mode = PoolMode::new(PoolOp::Max);
        assert_eq!(mode.output_dims(&[3, 7, 5]).unwrap(), [3, 3, 2]);
    }

    proptest! {
        #[test]
        fn constant_image_laws(v in -50.0f32..50.0, h in 2usize..9, w in 2usize..9, win in 1usize..3) {
            let x = Tensor::fill(&[2, h, w], v).unwrap();
            let max = pool_forward(&x, PoolMode::square(PoolOp::Max, win)).unwrap();
            prop_assert!(max.as_slice().iter().all(|&m| m == v));
            let sum = pool_forward(&x, PoolMode::square(PoolOp::Sum, win)).unwrap();
            let area = (win * win) as f32;
            prop_assert!(sum.as_slice().iter().all(|&s| (s - v * area).abs() <= 1e-4 * (1.0 + s.abs())));
        }
    }
}
