//! Declarative model descriptions and weight initialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseParams, KernelSpec, Layer, LayerNode, Model, PoolMode, ResidualBlock};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Rescale { factor: f32 },
    Conv2d { out_channels: usize, kernel_h: usize, kernel_w: usize },
    Relu,
    Pool(PoolMode),
    Flatten,
    Dense { units: usize },
    Softmax,
    Residual { width: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerDesc {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self { name: name.into(), kind }
    }
}

/// An architecture: input shape `[C, H, W]`, class count and ordered layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerDesc>,
}

fn out_dims(kind: &LayerKind, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
    let spatial = |input: &[usize]| -> std::result::Result<(usize, usize, usize), String> {
        match *input {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(format!("expects a [C, H, W] input, got {input:?}")),
        }
    };
    Ok(match kind {
        LayerKind::Rescale { factor } => {
            if !(*factor > 0.0) {
                return Err(format!("rescale factor must be positive, got {factor}"));
            }
            input.to_vec()
        }
        LayerKind::Relu => input.to_vec(),
        LayerKind::Conv2d {
            out_channels,
            kernel_h,
            kernel_w,
        } => {
            let (_, h, w) = spatial(input)?;
            if *out_channels == 0 || *kernel_h == 0 || *kernel_w == 0 {
                return Err("conv2d sizes must be >= 1".into());
            }
            if h < *kernel_h || w < *kernel_w {
                return Err(format!("input {h}x{w} too small for a {kernel_h}x{kernel_w} kernel"));
            }
            vec![*out_channels, h - kernel_h + 1, w - kernel_w + 1]
        }
        LayerKind::Pool(mode) => {
            spatial(input)?;
            mode.output_dims(input).map_err(|e| e.to_string())?.to_vec()
        }
        LayerKind::Flatten => vec![input.iter().product()],
        LayerKind::Dense { units } => {
            if input.len() != 1 {
                return Err(format!("dense expects a vector input, got {input:?}"));
            }
            if *units == 0 {
                return Err("dense needs at least one unit".into());
            }
            vec![*units]
        }
        LayerKind::Softmax => {
            if input.len() != 1 {
                return Err(format!("softmax expects a vector input, got {input:?}"));
            }
            input.to_vec()
        }
        LayerKind::Residual { width } => {
            let (_, h, w) = spatial(input)?;
            if *width == 0 {
                return Err("residual width must be >= 1".into());
            }
            vec![*width, h, w]
        }
    })
}

impl ModelSpec {
    /// Output dims of every layer. Fails naming the first layer whose input does not fit.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        if self.input.len() != 3 || self.input.contains(&0) {
            return Err(Error::build("input", format!("input must be [C, H, W] with positive extents, got {:?}", self.input)));
        }
        if self.classes == 0 {
            return Err(Error::build("input", "class count must be >= 1"));
        }
        let n = self.layers.len();
        if n < 2 {
            return Err(Error::build(&self.name, "model needs at least a dense head and softmax"));
        }
        let mut dims = self.input.clone();
        let mut all = Vec::with_capacity(n);
        for (i, layer) in self.layers.iter().enumerate() {
            if self.layers[..i].iter().any(|l| l.name == layer.name) {
                return Err(Error::build(&layer.name, "duplicate layer name"));
            }
            dims = out_dims(&layer.kind, &dims).map_err(|reason| Error::build(&layer.name, reason))?;
            all.push(dims.clone());
        }
        match (&self.layers[n - 2].kind, &self.layers[n - 1].kind) {
            (LayerKind::Dense { units }, LayerKind::Softmax) if *units == self.classes => Ok(all),
            _ => Err(Error::build(
                &self.layers[n - 1].name,
                format!("model must end in dense({}) followed by softmax", self.classes),
            )),
        }
    }

    /// Instantiates the layers with Glorot-uniform weights and zero biases.
    pub fn build(&self, rng: &mut RngState) -> Result<Model> {
        let dims = self.validate()?;
        let mut input = self.input.clone();
        let mut nodes = Vec::with_capacity(self.layers.len());
        for (desc, out) in self.layers.iter().zip(dims) {
            let layer = match &desc.kind {
                LayerKind::Rescale { factor } => Layer::Rescale(*factor),
                LayerKind::Relu => Layer::Relu,
                LayerKind::Flatten => Layer::Flatten,
                LayerKind::Softmax => Layer::Softmax,
                LayerKind::Pool(mode) => Layer::Pool(*mode),
                LayerKind::Conv2d {
                    out_channels,
                    kernel_h,
                    kernel_w,
                } => Layer::Conv2d(glorot_kernel(*out_channels, input[0], *kernel_h, *kernel_w, rng)?),
                LayerKind::Dense { units } => Layer::Dense(glorot_dense(*units, input[0], rng)?),
                LayerKind::Residual { width } => {
                    let in_c = input[0];
                    let projection = if in_c != *width {
                        Some(glorot_kernel(*width, in_c, 1, 1, rng)?)
                    } else {
                        None
                    };
                    Layer::Residual(ResidualBlock::new(
                        glorot_kernel(*width, in_c, 1, 1, rng)?,
                        glorot_kernel(*width, *width, 1, 1, rng)?,
                        projection,
                    )?)
                }
            };
            nodes.push(LayerNode::new(desc.name.clone(), layer));
            input = out;
        }
        Model::new(&self.input, nodes)
    }

    /// Describes an existing model's architecture.
    pub fn from_model(name: impl Into<String>, model: &Model) -> Self {
        let layers = model
            .nodes()
            .iter()
            .map(|n| {
                let kind = match &n.layer {
                    Layer::Rescale(f) => LayerKind::Rescale { factor: *f },
                    Layer::Conv2d(k) => LayerKind::Conv2d {
                        out_channels: k.out_channels(),
                        kernel_h: k.kernel_h(),
                        kernel_w: k.kernel_w(),
                    },
                    Layer::Relu => LayerKind::Relu,
                    Layer::Pool(m) => LayerKind::Pool(*m),
                    Layer::Flatten => LayerKind::Flatten,
                    Layer::Dense(d) => LayerKind::Dense { units: d.units() },
                    Layer::Softmax => LayerKind::Softmax,
                    Layer::Residual(b) => LayerKind::Residual { width: b.width() },
                };
                LayerDesc::new(n.name.clone(), kind)
            })
            .collect();
        Self {
            name: name.into(),
            input: model.input_dims().to_vec(),
            classes: model.output_width(),
            layers,
        }
    }

    /// Trainable scalars the built model would hold, computed without allocating it.
    pub fn param_count(&self) -> Result<usize> {
        let dims = self.validate()?;
        let mut input = self.input.clone();
        let mut total = 0;
        for (layer, out) in self.layers.iter().zip(dims) {
            let in_c = input[0];
            total += match layer.kind {
                LayerKind::Conv2d {
                    out_channels,
                    kernel_h,
                    kernel_w,
                } => out_channels * (in_c * kernel_h * kernel_w + 1),
                LayerKind::Dense { units } => units * (in_c + 1),
                LayerKind::Residual { width } => {
                    let projection = if in_c != width { width * (in_c + 1) } else { 0 };
                    width * (in_c + 1) + width * (width + 1) + projection
                }
                _ => 0,
            };
            input = out;
        }
        Ok(total)
    }

    pub fn count(&self, pred: impl Fn(&LayerKind) -> bool) -> usize {
        self.layers.iter().filter(|l| pred(&l.kind)).count()
    }
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f32 {
    (6.0 / (fan_in + fan_out) as f64).sqrt() as f32
}

pub(crate) fn glorot_kernel(out_c: usize, in_c: usize, kh: usize, kw: usize, rng: &mut RngState) -> Result<KernelSpec> {
    let a = glorot_bound(in_c * kh * kw, out_c * kh * kw);
    KernelSpec::new(
        Tensor::seeded_uniform(&[out_c, in_c, kh, kw], -a, a, rng)?,
        Tensor::zeros(&[out_c])?,
    )
}

pub(crate) fn glorot_dense(units: usize, inputs: usize, rng: &mut RngState) -> Result<DenseParams> {
    let a = glorot_bound(inputs, units);
    DenseParams::new(Tensor::seeded_uniform(&[units, inputs], -a, a, rng)?, Tensor::zeros(&[units])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::PoolOp;

    fn spec(layers: Vec<LayerDesc>) -> ModelSpec {
        ModelSpec {
            name: "t".into(),
            input: vec![1, 6, 6],
            classes: 2,
            layers,
        }
    }

    #[test]
    fn json_round_trip_uses_kind_tags() {
        let s = spec(vec![
            LayerDesc::new("c", LayerKind::Conv2d { out_channels: 2, kernel_h: 3, kernel_w: 3 }),
            LayerDesc::new("p", LayerKind::Pool(PoolMode::new(PoolOp::Average))),
            LayerDesc::new("f", LayerKind::Flatten),
            LayerDesc::new("h", LayerKind::Dense { units: 2 }),
            LayerDesc::new("s", LayerKind::Softmax),
        ]);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains(r#""kind":"conv2d""#), "{json}");
        assert!(json.contains(r#""op":"average""#), "{json}");
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn head_contract_is_enforced() {
        let s = spec(vec![
            LayerDesc::new("f", LayerKind::Flatten),
            LayerDesc::new("h", LayerKind::Dense { units: 3 }),
            LayerDesc::new("s", LayerKind::Softmax),
        ]);
        assert!(s.validate().is_err());
        let s = spec(vec![LayerDesc::new("f", LayerKind::Flatten), LayerDesc::new("h", LayerKind::Dense { units: 2 })]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn too_small_input_names_the_layer() {
        let s = spec(vec![
            LayerDesc::new("big_conv", LayerKind::Conv2d { out_channels: 1, kernel_h: 7, kernel_w: 7 }),
            LayerDesc::new("f", LayerKind::Flatten),
            LayerDesc::new("h", LayerKind::Dense { units: 2 }),
            LayerDesc::new("s", LayerKind::Softmax),
        ]);
        let err = s.validate().unwrap_err();
        assert!(matches!(err, Error::Build { ref layer, .. } if layer == "big_conv"), "{err}");
    }

    #[test]
    fn build_round_trips_through_from_model() {
        let s = spec(vec![
            LayerDesc::new("c", LayerKind::Conv2d { out_channels: 2, kernel_h: 3, kernel_w: 3 }),
            LayerDesc::new("r", LayerKind::Residual { width: 3 }),
            LayerDesc::new("f", LayerKind::Flatten),
            LayerDesc::new("h", LayerKind::Dense { units: 2 }),
            LayerDesc::new("s", LayerKind::Softmax),
        ]);
        let m = s.build(&mut RngState::new(1)).unwrap();
        assert_eq!(ModelSpec::from_model("t", &m), s);
        assert_eq!(s.param_count().unwrap(), m.param_count());
    }

    #[test]
    fn glorot_weights_respect_bound() {
        let mut rng = RngState::new(3);
        let d = glorot_dense(10, 20, &mut rng).unwrap();
        let a = (6.0f32 / 30.0).sqrt();
        assert!(d.weights().as_slice().iter().all(|w| w.abs() <= a));
        assert!(d.bias().as_slice().iter().all(|&b| b == 0.0));
    }
}
