//! Central finite-difference verification of analytic gradients.
//!
//! Every trainable parameter and every input element is nudged by `±h` and
//! the loss difference is compared against the backward pass. The relative
//! error of a single entry is `|a - n| / max(|a|, |n|, 1e-8)`.
//!
//! A perturbation that flips a ReLU input across zero or changes which cell
//! wins a max-pool window moves the loss onto a different linear piece, and
//! the difference quotient then measures neither one-sided slope. Such
//! entries are detected by comparing activation patterns and are counted in
//! [`FdReport::kinks_skipped`] rather than compared.

use crate::error::{Error, Result};
use crate::nn::{conv2d_forward, Layer, Model, PoolOp};
use crate::nn::pool::max_positions;
use crate::tensor::{Element, Tensor};
use crate::train::loss::{sample_gradients, sparse_ce_loss};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

/// Finite-difference formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error `O(h^2)`.
    Second,
    /// `(f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h`, error `O(h^4)`.
    Fourth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    /// Central-difference step.
    pub h: f64,
    /// Precision of the backward pass under test.
    pub analytic: Precision,
    /// Precision in which the perturbed losses are evaluated.
    pub reference: Precision,
    pub stencil: Stencil,
}

impl FdOptions {
    /// The `f32` engine against `f64` differences, `h = 1e-3`.
    pub fn single() -> Self {
        Self {
            h: 1e-3,
            analytic: Precision::Single,
            reference: Precision::Double,
            stencil: Stencil::Second,
        }
    }

    /// Both sides recomputed in `f64`, `h = 1e-5`.
    pub fn double() -> Self {
        Self {
            h: 1e-5,
            analytic: Precision::Double,
            reference: Precision::Double,
            stencil: Stencil::Second,
        }
    }

    /// Both sides in `f64` with the fourth-order stencil at `h = 2e-3`.
    ///
    /// The second-order quotient at `h = 1e-5` carries an absolute rounding
    /// error near `1e-11`, so its relative error exceeds `1e-6` on any entry
    /// smaller than about `1e-5`. This stencil lowers that floor by two orders
    /// of magnitude.
    pub fn double_precise() -> Self {
        Self {
            h: 2e-3,
            analytic: Precision::Double,
            reference: Precision::Double,
            stencil: Stencil::Fourth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Where the worst entry sits, e.g. `conv1[0][5]` or `input[3]`.
    pub worst_at: String,
    /// Analytic and numeric values at `worst_at`.
    pub worst_pair: (f64, f64),
    pub entries_checked: usize,
    /// Whether every frozen layer reported an all-zero parameter gradient.
    pub frozen_grads_zero: bool,
    /// Entries whose `±h` perturbation changed the activation pattern.
    pub kinks_skipped: usize,
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Which side of every ReLU kink each unit sits on, and every max-pool winner.
fn activation_pattern<U: Element>(model: &Model<U>, input: &Tensor<U>, outputs: &[&Tensor<U>]) -> Result<Vec<u32>> {
    let mut pattern = Vec::new();
    for (i, node) in model.nodes().iter().enumerate() {
        let x = if i == 0 { input } else { outputs[i - 1] };
        match &node.layer {
            Layer::Relu => pattern.extend(x.as_slice().iter().map(|&v| u32::from(v > U::zero()))),
            Layer::Pool(mode) if mode.op == PoolOp::Max => {
                pattern.extend(max_positions(x, *mode)?.into_iter().map(|p| p as u32));
            }
            Layer::Residual(block) => {
                let pre = conv2d_forward(x, &block.inner)?;
                pattern.extend(pre.as_slice().iter().map(|&v| u32::from(v > U::zero())));
            }
            _ => {}
        }
    }
    Ok(pattern)
}

fn loss_of<U: Element>(model: &Model<U>, input: &Tensor<U>, label: usize) -> Result<(f64, Vec<u32>)> {
    let trace = model.forward_trace(input)?;
    let l = sparse_ce_loss(trace.output(), label)?.widen();
    if !l.is_finite() {
        return Err(Error::NonFinite("finite-difference loss"));
    }
    let outputs: Vec<&Tensor<U>> = (0..model.nodes().len()).map(|i| trace.node_output(i)).collect();
    Ok((l, activation_pattern(model, input, &outputs)?))
}

struct Analytic {
    grads: Vec<Vec<Vec<f64>>>,
    input_grad: Vec<f64>,
}

fn analytic_grads<U: Element>(model: &Model<U>, input: &Tensor<U>, label: usize) -> Result<Analytic> {
    let out = sample_gradients(model, input, label)?;
    Ok(Analytic {
        grads: out
            .grads
            .per_node
            .iter()
            .map(|node| node.iter().map(|t| t.as_slice().iter().map(|x| x.widen()).collect()).collect())
            .collect(),
        input_grad: out.input_grad.as_slice().iter().map(|x| x.widen()).collect(),
    })
}

/// `(k, w_k)` pairs of a central stencil: `f'(x) ~ sum w_k (f(x+kh) - f(x-kh)) / (d h)`,
/// with the common denominator `d`. Differencing symmetric pairs first keeps
/// the estimate exactly zero when the loss does not move.
fn stencil_terms(stencil: Stencil) -> (&'static [(f64, f64)], f64) {
    match stencil {
        Stencil::Second => (&[(1.0, 1.0)], 2.0),
        Stencil::Fourth => (&[(1.0, 8.0), (2.0, -1.0)], 12.0),
    }
}

fn central_differences<U: Element>(
    model: &Model<U>,
    input: &Tensor<U>,
    label: usize,
    options: FdOptions,
    analytic: &Analytic,
) -> Result<FdReport> {
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst_at: String::new(),
        worst_pair: (0.0, 0.0),
        entries_checked: 0,
        frozen_grads_zero: true,
        kinks_skipped: 0,
    };
    let (_, base) = loss_of(model, input, label)?;
    let (terms, denom) = stencil_terms(options.stencil);
    let h = options.h;

    // `eval(offset)` moves one entry to `original + offset * h` and returns the loss there.
    let mut estimate = |at: String, a: f64, eval: &mut dyn FnMut(f64) -> Result<(f64, Vec<u32>)>| -> Result<()> {
        let mut numeric = 0.0;
        for &(k, weight) in terms {
            let (plus, plus_pattern) = eval(k)?;
            let (minus, minus_pattern) = eval(-k)?;
            if plus_pattern != base || minus_pattern != base {
                report.kinks_skipped += 1;
                return Ok(());
            }
            numeric += weight * (plus - minus);
        }
        let n = numeric / (denom * h);
        let e = rel_error(a, n);
        report.entries_checked += 1;
        if e > report.max_rel_error || report.worst_at.is_empty() {
            report.max_rel_error = e.max(report.max_rel_error);
            report.worst_at = at;
            report.worst_pair = (a, n);
        }
        Ok(())
    };

    let mut probe = model.clone();
    for (ni, node) in model.nodes().iter().enumerate() {
        if node.frozen {
            continue;
        }
        for (pi, param) in node.layer.params().iter().enumerate() {
            for k in 0..param.numel() {
                let original = param.as_slice()[k];
                let mut eval = |offset: f64| {
                    probe.nodes_mut()[ni].layer.params_mut()[pi].as_mut_slice()[k] = original + U::of(offset * h);
                    let r = loss_of(&probe, input, label);
                    probe.nodes_mut()[ni].layer.params_mut()[pi].as_mut_slice()[k] = original;
                    r
                };
                estimate(format!("{}[{pi}][{k}]", node.name), analytic.grads[ni][pi][k], &mut eval)?;
            }
        }
    }

    let mut x = input.clone();
    for k in 0..x.numel() {
        let original = x.as_slice()[k];
        let mut eval = |offset: f64| {
            x.as_mut_slice()[k] = original + U::of(offset * h);
            let r = loss_of(model, &x, label);
            x.as_mut_slice()[k] = original;
            r
        };
        estimate(format!("input[{k}]"), analytic.input_grad[k], &mut eval)?;
    }

    report.frozen_grads_zero = model
        .nodes()
        .iter()
        .zip(&analytic.grads)
        .filter(|(n, _)| n.frozen)
        .all(|(_, g)| g.iter().flatten().all(|&v| v == 0.0));
    Ok(report)
}

/// Worst relative error between backward-pass gradients and central
/// differences of the cross-entropy loss, over all non-frozen parameters and
/// the input.
pub fn finite_diff_check(model: &Model, input: &Tensor, label: usize, options: FdOptions) -> Result<FdReport> {
    if !(options.h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {}", options.h)));
    }
    let analytic = match options.analytic {
        Precision::Single => analytic_grads(model, input, label)?,
        Precision::Double => analytic_grads(&model.cast::<f64>(), &input.cast(), label)?,
    };
    match options.reference {
        Precision::Single => central_differences(model, input, label, options, &analytic),
        Precision::Double => central_differences(&model.cast::<f64>(), &input.cast(), label, options, &analytic),
    }
}
