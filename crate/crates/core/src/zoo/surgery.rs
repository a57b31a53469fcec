//! Transfer-learning surgery: head replacement and layer freezing.

use crate::error::{Error, Result};
use crate::nn::{Layer, LayerNode, Model};
use crate::rng::RngState;
use crate::zoo::spec::glorot_dense;

/// Swaps the final dense layer for a freshly initialized one with `classes`
/// outputs. Every other tensor is left untouched.
pub fn replace_head(mut model: Model, classes: usize, rng: &mut RngState) -> Result<Model> {
    let n = model.nodes().len();
    let has_head = n >= 2
        && matches!(model.nodes()[n - 1].layer, Layer::Softmax)
        && matches!(model.nodes()[n - 2].layer, Layer::Dense(_));
    if !has_head {
        return Err(Error::InvalidArgument("model does not end in a dense + softmax head".into()));
    }
    if classes == 0 {
        return Err(Error::InvalidArgument("head needs at least one class".into()));
    }
    let inputs = match &model.nodes()[n - 2].layer {
        Layer::Dense(d) => d.inputs(),
        _ => unreachable!(),
    };
    let input_dims = model.input_dims().to_vec();
    let nodes = model.nodes_vec_mut();
    let old = &nodes[n - 2];
    nodes[n - 2] = LayerNode::new(old.name.clone(), Layer::Dense(glorot_dense(classes, inputs, rng)?));
    Model::new(&input_dims, std::mem::take(nodes))
}

/// Marks every layer up to and including `boundary` as frozen.
pub fn freeze_features(mut model: Model, boundary: &str) -> Result<Model> {
    let idx = model
        .node_index(boundary)
        .ok_or_else(|| Error::UnknownLayer(boundary.to_string()))?;
    for node in &mut model.nodes_mut()[..=idx] {
        node.frozen = true;
    }
    Ok(model)
}

pub fn unfreeze_all(mut model: Model) -> Model {
    for node in model.nodes_mut() {
        node.frozen = false;
    }
    model
}
