//! Sequential layer pipelines with cached forward traces and reverse-mode gradients.

use crate::error::{Error, Result};
use crate::nn::activation::{relu, relu_backward, rescale_backward, rescale_forward, softmax, softmax_backward};
use crate::nn::conv::{conv2d_backward, conv2d_forward, KernelSpec};
use crate::nn::dense::{dense_backward, dense_forward, flatten, DenseParams};
use crate::nn::pool::{pool_backward, pool_forward, PoolMode};
use crate::nn::residual::{ResidualBlock, ResidualCache};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Rescale(T),
    Conv2d(KernelSpec<T>),
    Relu,
    Pool(PoolMode),
    Flatten,
    Dense(DenseParams<T>),
    Softmax,
    Residual(ResidualBlock<T>),
}

impl<T: Element> Layer<T> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Rescale(_) => "rescale",
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::Pool(_) => "pool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
            Layer::Residual(_) => "residual",
        }
    }

    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(match self {
            Layer::Rescale(_) | Layer::Relu => input.to_vec(),
            Layer::Conv2d(k) => k.output_dims(input)?.to_vec(),
            Layer::Pool(mode) => mode.output_dims(input)?.to_vec(),
            Layer::Flatten => vec![input.iter().product()],
            Layer::Dense(d) => {
                if input != [d.inputs()] {
                    return Err(Error::ShapeMismatch {
                        context: "dense input",
                        expected: vec![d.inputs()],
                        actual: input.to_vec(),
                    });
                }
                vec![d.units()]
            }
            Layer::Softmax => {
                if input.len() != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "softmax expects a vector, got {input:?}"
                    )));
                }
                input.to_vec()
            }
            Layer::Residual(b) => {
                if input.len() != 3 || input[0] != b.in_channels() {
                    return Err(Error::ShapeMismatch {
                        context: "residual input channels",
                        expected: vec![b.in_channels()],
                        actual: input.to_vec(),
                    });
                }
                vec![b.width(), input[1], input[2]]
            }
        })
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(k) => k.tensors().to_vec(),
            Layer::Dense(d) => d.tensors().to_vec(),
            Layer::Residual(b) => b.tensors(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(k) => k.tensors_mut().into_iter().collect(),
            Layer::Dense(d) => d.tensors_mut().into_iter().collect(),
            Layer::Residual(b) => b.tensors_mut(),
            _ => Vec::new(),
        }
    }

    pub fn cast<U: Element>(&self) -> Layer<U> {
        match self {
            Layer::Rescale(f) => Layer::Rescale(U::of(f.widen())),
            Layer::Conv2d(k) => Layer::Conv2d(k.cast()),
            Layer::Relu => Layer::Relu,
            Layer::Pool(m) => Layer::Pool(*m),
            Layer::Flatten => Layer::Flatten,
            Layer::Dense(d) => Layer::Dense(d.cast()),
            Layer::Softmax => Layer::Softmax,
            Layer::Residual(b) => Layer::Residual(b.cast()),
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Rescale(f) => rescale_forward(input, *f),
            Layer::Conv2d(k) => conv2d_forward(input, k),
            Layer::Relu => Ok(relu(input)),
            Layer::Pool(m) => pool_forward(input, *m),
            Layer::Flatten => Ok(flatten(input)),
            Layer::Dense(d) => dense_forward(input, d.weights(), d.bias()),
            Layer::Softmax => softmax(input),
            Layer::Residual(b) => b.forward(input),
        }
    }

    fn forward_cached(&self, input: &Tensor<T>) -> Result<(Tensor<T>, NodeCache<T>)> {
        match self {
            Layer::Residual(b) => {
                let (out, cache) = b.forward_cached(input)?;
                Ok((out, NodeCache::Residual(cache)))
            }
            Layer::Softmax => {
                let out = softmax(input)?;
                Ok((out.clone(), NodeCache::Probs(out)))
            }
            _ => Ok((self.forward(input)?, NodeCache::Input(input.clone()))),
        }
    }

    fn backward(&self, upstream: &Tensor<T>, cache: &NodeCache<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        match (self, cache) {
            (Layer::Residual(b), NodeCache::Residual(c)) => b.backward(upstream, c),
            (Layer::Softmax, NodeCache::Probs(p)) => Ok((softmax_backward(upstream, p)?, Vec::new())),
            (Layer::Rescale(f), NodeCache::Input(_)) => Ok((rescale_backward(upstream, *f)?, Vec::new())),
            (Layer::Conv2d(k), NodeCache::Input(x)) => {
                let g = conv2d_backward(upstream, x, k)?;
                Ok((g.input, vec![g.weights, g.bias]))
            }
            (Layer::Relu, NodeCache::Input(x)) => Ok((relu_backward(upstream, x)?, Vec::new())),
            (Layer::Pool(m), NodeCache::Input(x)) => Ok((pool_backward(upstream, x, *m)?, Vec::new())),
            (Layer::Flatten, NodeCache::Input(x)) => Ok((upstream.clone().reshape(x.dims())?, Vec::new())),
            (Layer::Dense(d), NodeCache::Input(x)) => {
                let g = dense_backward(upstream, x, d.weights())?;
                Ok((g.input, vec![g.weights, g.bias]))
            }
            _ => Err(Error::InvalidArgument("cache does not belong to this layer".into())),
        }
    }
}

/// A named pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode<T = f32> {
    pub name: String,
    pub layer: Layer<T>,
    /// Frozen nodes receive zero parameter gradients and are skipped by optimizers.
    pub frozen: bool,
}

impl<T: Element> LayerNode<T> {
    pub fn new(name: impl Into<String>, layer: Layer<T>) -> Self {
        Self {
            name: name.into(),
            layer,
            frozen: false,
        }
    }
}

#[derive(Debug, Clone)]
enum NodeCache<T> {
    Input(Tensor<T>),
    Probs(Tensor<T>),
    Residual(ResidualCache<T>),
}

/// Activations recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    caches: Vec<NodeCache<T>>,
    outputs: Vec<Tensor<T>>,
}

impl<T: Element> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.outputs.last().expect("trace of a non-empty model")
    }

    /// Output of node `index`.
    pub fn node_output(&self, index: usize) -> &Tensor<T> {
        &self.outputs[index]
    }
}

/// Parameter gradients, one list per node in `LayerNode::layer.params()` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub per_node: Vec<Vec<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn zeros_for(model: &Model<T>) -> Self {
        Self {
            per_node: model
                .nodes
                .iter()
                .map(|n| n.layer.params().into_iter().map(Tensor::zeros_like).collect())
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        for (a, b) in self.per_node.iter_mut().zip(&other.per_node) {
            for (x, y) in a.iter_mut().zip(b) {
                x.add_assign(y)?;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.per_node.iter_mut().flatten() {
            t.scale(factor);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Backward<T> {
    pub input_grad: Tensor<T>,
    pub grads: Gradients<T>,
}

/// An ordered stack of layers with a fixed `[C, H, W]` input.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    input_dims: Vec<usize>,
    nodes: Vec<LayerNode<T>>,
}

impl<T: Element> Model<T> {
    /// Checks that the layer shapes compose and names are unique.
    pub fn new(input_dims: &[usize], nodes: Vec<LayerNode<T>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("model has no layers".into()));
        }
        let mut dims = input_dims.to_vec();
        for (i, node) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|n| n.name == node.name) {
                return Err(Error::build(&node.name, "duplicate layer name"));
            }
            dims = node
                .layer
                .output_dims(&dims)
                .map_err(|e| Error::build(&node.name, e.to_string()))?;
        }
        Ok(Self {
            input_dims: input_dims.to_vec(),
            nodes,
        })
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn nodes(&self) -> &[LayerNode<T>] {
        &self.nodes
    }

    /// Mutable access for optimizers and surgery. Callers must keep layer shapes intact.
    pub fn nodes_mut(&mut self) -> &mut [LayerNode<T>] {
        &mut self.nodes
    }

    pub(crate) fn nodes_vec_mut(&mut self) -> &mut Vec<LayerNode<T>> {
        &mut self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Output dims of every node, in order.
    pub fn layer_dims(&self) -> Vec<Vec<usize>> {
        let mut dims = self.input_dims.clone();
        self.nodes
            .iter()
            .map(|n| {
                dims = n.layer.output_dims(&dims).expect("validated at construction");
                dims.clone()
            })
            .collect()
    }

    pub fn output_width(&self) -> usize {
        self.layer_dims().last().map_or(0, |d| d.iter().product())
    }

    pub fn param_count(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| n.layer.params())
            .map(Tensor::numel)
            .sum()
    }

    pub fn cast<U: Element>(&self) -> Model<U> {
        Model {
            input_dims: self.input_dims.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| LayerNode {
                    name: n.name.clone(),
                    layer: n.layer.cast(),
                    frozen: n.frozen,
                })
                .collect(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.dims() != self.input_dims.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "model input",
                expected: self.input_dims.clone(),
                actual: input.dims().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for node in &self.nodes {
            x = node.layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &Tensor<T>) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.nodes.len());
        let mut outputs = Vec::with_capacity(self.nodes.len());
        let mut x = input.clone();
        for node in &self.nodes {
            let (out, cache) = node.layer.forward_cached(&x)?;
            caches.push(cache);
            outputs.push(out.clone());
            x = out;
        }
        Ok(Trace { caches, outputs })
    }

    /// Backpropagates `upstream`, the gradient w.r.t. the output of node
    /// `end - 1`, through nodes `end - 1` down to `0`.
    pub fn backward_from(&self, trace: &Trace<T>, end: usize, upstream: Tensor<T>) -> Result<Backward<T>> {
        if end == 0 || end > self.nodes.len() || trace.caches.len() != self.nodes.len() {
            return Err(Error::InvalidArgument(format!("invalid backward range end {end}")));
        }
        let expected = trace.node_output(end - 1).dims();
        if upstream.dims() != expected {
            return Err(Error::ShapeMismatch {
                context: "backward upstream",
                expected: expected.to_vec(),
                actual: upstream.dims().to_vec(),
            });
        }
        let mut grads = Gradients::zeros_for(self);
        let mut g = upstream;
        for i in (0..end).rev() {
            let node = &self.nodes[i];
            let (input_grad, param_grads) = node.layer.backward(&g, &trace.caches[i])?;
            if !node.frozen {
                grads.per_node[i] = param_grads;
            }
            g = input_grad;
        }
        Ok(Backward { input_grad: g, grads })
    }

    pub fn backward(&self, trace: &Trace<T>, upstream: Tensor<T>) -> Result<Backward<T>> {
        self.backward_from(trace, self.nodes.len(), upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::pool::PoolOp;

    fn tiny() -> Model {
        Model::new(
            &[1, 4, 4],
            vec![
                LayerNode::new("scale", Layer::Rescale(0.5)),
                LayerNode::new("conv", Layer::Conv2d(KernelSpec::zeros(2, 1, 3, 3).unwrap())),
                LayerNode::new("relu", Layer::Relu),
                LayerNode::new("pool", Layer::Pool(PoolMode::new(PoolOp::Max))),
                LayerNode::new("flat", Layer::Flatten),
                LayerNode::new(
                    "head",
                    Layer::Dense(DenseParams::new(Tensor::zeros(&[3, 2]).unwrap(), Tensor::zeros(&[3]).unwrap()).unwrap()),
                ),
                LayerNode::new("softmax", Layer::Softmax),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shapes_compose() {
        let m = tiny();
        assert_eq!(
            m.layer_dims(),
            vec![vec![1, 4, 4], vec![2, 2, 2], vec![2, 2, 2], vec![2, 1, 1], vec![2], vec![3], vec![3]]
        );
        assert_eq!(m.output_width(), 3);
        assert_eq!(m.param_count(), 2 * 9 + 2 + 3 * 2 + 3);
    }

    #[test]
    fn incompatible_layers_are_rejected_with_layer_name() {
        let err = Model::<f32>::new(
            &[1, 4, 4],
            vec![
                LayerNode::new("flat", Layer::Flatten),
                LayerNode::new(
                    "head",
                    Layer::Dense(DenseParams::new(Tensor::zeros(&[3, 5]).unwrap(), Tensor::zeros(&[3]).unwrap()).unwrap()),
                ),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("head"), "{err}");
    }

    #[test]
    fn forward_gives_distribution() {
        let m = tiny();
        let y = m.forward(&Tensor::fill(&[1, 4, 4], 1.0).unwrap()).unwrap();
        assert_eq!(y.dims(), &[3]);
        assert!((y.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn backward_grad_shapes_match_params() {
        let m = tiny();
        let x = Tensor::fill(&[1, 4, 4], 1.0).unwrap();
        let trace = m.forward_trace(&x).unwrap();
        let back = m.backward(&trace, Tensor::fill(&[3], 1.0).unwrap()).unwrap();
        assert_eq!(back.input_grad.dims(), x.dims());
        for (node, grads) in m.nodes().iter().zip(&back.grads.per_node) {
            let shapes: Vec<_> = node.layer.params().iter().map(|t| t.dims().to_vec()).collect();
            let gshapes: Vec<_> = grads.iter().map(|t| t.dims().to_vec()).collect();
            assert_eq!(shapes, gshapes);
        }
    }

    #[test]
    fn wrong_input_shape_is_an_error() {
        assert!(tiny().forward(&Tensor::zeros(&[1, 5, 5]).unwrap()).is_err());
    }
}
