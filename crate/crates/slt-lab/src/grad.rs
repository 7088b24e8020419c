//! Manual backward passes.
//!
//! Two gradient flavors share one backpropagation core:
//!
//! - [`backward_train`] — true gradients of the loss with respect to
//!   weights and biases, used by the dense SGD baseline trainer.
//!   Gradients of masked (pruned) parameters are exactly zero.
//! - [`backward_scores`] — straight-through popup-score gradients used by
//!   the edge-popup search. The score of weight `(l, i, j)` receives
//!   `dL/dh_i^(l) * w_ij * x_j^(l-1)` and the score of bias `(l, i)`
//!   receives `dL/dh_i^(l) * b_i`, where `w`/`b` are the *raw* (unmasked)
//!   parameter values and `dL/dh` is backpropagated through the masked
//!   network that actually ran forward. Every parameter gets a score
//!   gradient, pruned or not — that is what lets pruned parameters
//!   re-enter the mask.
//!
//! `loss_grad` is `dL/dy` evaluated at the trace's output, shape
//! `n_L x B`.

use ndarray::{Array2, Axis};

use crate::net::{ForwardTrace, Mask, Network, ParamTensors};

/// Backpropagates `dL/dh^(l)` for every layer through the masked network.
///
/// The nonlinearity derivative is the relu step `1[h > 0]` on hidden
/// layers (and the output layer unless it is linear); the convention at
/// exactly `h = 0` is derivative 0.
fn backprop_dh(
    net: &Network,
    mask: Option<&Mask>,
    trace: &ForwardTrace,
    loss_grad: &Array2<f64>,
) -> Vec<Array2<f64>> {
    let depth = net.depth();
    assert_eq!(
        trace.preactivations.len(),
        depth,
        "trace depth {} does not match network depth {depth}",
        trace.preactivations.len()
    );
    assert_eq!(
        loss_grad.dim(),
        trace.output().dim(),
        "loss gradient shape {:?} does not match output shape {:?}",
        loss_grad.dim(),
        trace.output().dim()
    );

    let step = |h: &Array2<f64>, g: Array2<f64>| -> Array2<f64> {
        let mut g = g;
        g.zip_mut_with(h, |gv, &hv| {
            if hv <= 0.0 {
                *gv = 0.0;
            }
        });
        g
    };

    let mut dhs = vec![Array2::zeros((0, 0)); depth];
    let top = if net.arch.output_linear {
        loss_grad.clone()
    } else {
        step(&trace.preactivations[depth - 1], loss_grad.clone())
    };
    dhs[depth - 1] = top;
    for l in (0..depth.saturating_sub(1)).rev() {
        let dx = match mask {
            Some(m) => {
                let wm = &net.weights[l + 1] * &m.weight_masks[l + 1];
                wm.t().dot(&dhs[l + 1])
            }
            None => net.weights[l + 1].t().dot(&dhs[l + 1]),
        };
        dhs[l] = step(&trace.preactivations[l], dx);
    }
    dhs
}

/// True parameter gradients for the masked network.
///
/// Returns `dL/dW^(l) = (dH^(l) x^(l-1)^T) * M_w` and
/// `dL/db^(l) = rowsum(dH^(l)) * M_b`; pruned entries are exactly zero.
///
/// Panics when the trace or the loss gradient does not match the network.
pub fn backward_train(
    net: &Network,
    mask: Option<&Mask>,
    trace: &ForwardTrace,
    loss_grad: &Array2<f64>,
) -> ParamTensors {
    let dhs = backprop_dh(net, mask, trace, loss_grad);
    let depth = net.depth();
    let mut grads = ParamTensors::zeros(&net.arch);
    for l in 0..depth {
        let mut dw = dhs[l].dot(&trace.input_of(l).t());
        let mut db = dhs[l].sum_axis(Axis(1));
        if let Some(m) = mask {
            dw *= &m.weight_masks[l];
            db *= &m.bias_masks[l];
        }
        grads.weights[l] = dw;
        grads.biases[l] = db;
    }
    grads
}

/// Straight-through popup-score gradients (see module docs).
///
/// `mask` is the mask that produced `trace`; it shapes the backpropagated
/// `dL/dh` but is deliberately ignored when forming the per-parameter
/// products, so pruned parameters receive gradients too.
pub fn backward_scores(
    net: &Network,
    mask: &Mask,
    trace: &ForwardTrace,
    loss_grad: &Array2<f64>,
) -> ParamTensors {
    let dhs = backprop_dh(net, Some(mask), trace, loss_grad);
    let depth = net.depth();
    let mut grads = ParamTensors::zeros(&net.arch);
    for l in 0..depth {
        let outer = dhs[l].dot(&trace.input_of(l).t());
        grads.weights[l] = &outer * &net.weights[l];
        grads.biases[l] = &dhs[l].sum_axis(Axis(1)) * &net.biases[l];
    }
    grads
}
