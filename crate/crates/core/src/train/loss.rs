//! Sparse categorical cross-entropy and the fused softmax gradient.

use crate::error::{Error, Result};
use crate::nn::{softmax, Gradients, Layer, Model};
use crate::tensor::{Element, Tensor};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln(probs[label])`, with the probability clamped at [`PROB_FLOOR`].
pub fn sparse_ce_loss<T: Element>(probs: &Tensor<T>, label: usize) -> Result<T> {
    let p = *probs.as_slice().get(label).ok_or(Error::LabelOutOfRange {
        label,
        classes: probs.numel(),
    })?;
    Ok(-(p.max(T::of(PROB_FLOOR))).ln())
}

/// Gradient of `sparse_ce_loss(softmax(logits), label)` w.r.t. the logits: `softmax(logits) - onehot(label)`.
///
/// The label component `p[label] - 1` is formed as minus the sum of the other
/// probabilities, which keeps its relative precision when `p[label]` is close to 1.
pub fn sparse_ce_softmax_grad<T: Element>(logits: &Tensor<T>, label: usize) -> Result<Tensor<T>> {
    if label >= logits.numel() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.numel(),
        });
    }
    let mut g = softmax(logits)?;
    let rest = g
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != label)
        .fold(T::zero(), |acc, (_, &p)| acc + p);
    g.as_mut_slice()[label] = -rest;
    Ok(g)
}

/// Loss, prediction and gradients for one labelled sample.
#[derive(Debug, Clone)]
pub struct SampleOutcome<T = f32> {
    pub loss: T,
    pub probs: Tensor<T>,
    pub grads: Gradients<T>,
    pub input_grad: Tensor<T>,
}

/// Forward and backward pass for one sample. The model must end in softmax;
/// the softmax/cross-entropy pair is differentiated jointly.
pub fn sample_gradients<T: Element>(model: &Model<T>, input: &Tensor<T>, label: usize) -> Result<SampleOutcome<T>> {
    let n = model.nodes().len();
    if !matches!(model.nodes()[n - 1].layer, Layer::Softmax) {
        return Err(Error::InvalidArgument("model must end in a softmax layer".into()));
    }
    let trace = model.forward_trace(input)?;
    let probs = trace.output().clone();
    let loss = sparse_ce_loss(&probs, label)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let logits = if n >= 2 { trace.node_output(n - 2) } else { input };
    let upstream = sparse_ce_softmax_grad(logits, label)?;
    let (input_grad, grads) = if n >= 2 {
        let back = model.backward_from(&trace, n - 1, upstream)?;
        (back.input_grad, back.grads)
    } else {
        (upstream, Gradients::zeros_for(model))
    };
    Ok(SampleOutcome {
        loss,
        probs,
        grads,
        input_grad,
    })
}
