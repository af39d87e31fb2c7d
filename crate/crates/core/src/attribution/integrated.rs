//! Integrated Gradients on the input and on hidden layers.
//!
//! The hidden-layer version never forms the Jacobian of the layer with
//! respect to the input: it pairs the gradient at each interpolation point
//! with the change of the layer's own activations over that step,
//! `Σ_i ∂F(x⁽ⁱ⁾)/∂y · (y(x⁽ⁱ⁾) − y(x⁽ⁱ⁻¹⁾))`, so its cost is the same as
//! input Integrated Gradients.

use rayon::prelude::*;

use super::{finish, resolve_all, AttributionResult, Method, PathSpec, Probe, Rule};
use crate::error::Result;
use crate::net::{ForwardTrace, Network, INPUT_LAYER};
use crate::target::{LogitFunctional, TargetSpec};
use crate::tensor::Tensor;

/// Interpolation points evaluated together before their results are folded
/// into the running sums (in step order).
const STEP_BATCH: usize = 32;

struct StepEval {
    activation: Tensor,
    grads: Vec<Tensor>,
    logits: Tensor,
}

/// Evaluates every interpolation point once and hands the results to
/// `visit` in order `0..=n`. The actual input is evaluated first because
/// it fixes the targets; it is still exactly one of the `n + 1` forward
/// passes.
fn sweep(
    probe: &Probe<'_>,
    path: &PathSpec,
    position: usize,
    targets: &[TargetSpec],
    mut visit: impl FnMut(usize, &StepEval, &[LogitFunctional]),
) -> Result<Vec<LogitFunctional>> {
    let n = path.steps;
    let wants_gradient = |i: usize| i > 0 || path.rule == Rule::Trapezoid;
    let trace_x = probe.forward(&path.input)?;
    let fns = resolve_all(targets, trace_x.logits())?;
    let evaluate = |i: usize, trace: ForwardTrace| StepEval {
        grads: if wants_gradient(i) {
            fns.iter()
                .map(|f| probe.gradient(&trace, f, position))
                .collect()
        } else {
            Vec::new()
        },
        activation: trace.at(position).clone(),
        logits: trace.logits().clone(),
    };
    let last = evaluate(n, trace_x);
    let mut start = 0;
    while start < n {
        let end = (start + STEP_BATCH).min(n);
        let batch: Vec<StepEval> = (start..end)
            .into_par_iter()
            .map(|i| Ok(evaluate(i, probe.forward(&path.interpolate(i)?)?)))
            .collect::<Result<_>>()?;
        for (offset, step) in batch.iter().enumerate() {
            visit(start + offset, step, &fns);
        }
        start = end;
    }
    visit(n, &last, &fns);
    Ok(fns)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum StepIncrement {
    ActivationDifference,
    /// Fault injection for the verification suite: uses the activation at
    /// each point instead of its change over the step.
    RawActivation,
}

fn nig_impl(
    net: &Network,
    path: &PathSpec,
    layer: &str,
    targets: &[TargetSpec],
    increment: StepIncrement,
) -> Result<Vec<AttributionResult>> {
    path.check(net)?;
    let position = net.position(layer)?;
    let probe = Probe::new(net);
    let size = net.shape_at(position).iter().product();
    let n = path.steps;
    let mut scores = vec![vec![0.0; size]; targets.len()];
    let mut prev: Option<(Tensor, Vec<Tensor>)> = None;
    let mut logits_ref = None;
    let mut logits_x = None;
    let fns = sweep(&probe, path, position, targets, |i, step, _| {
        if i == 0 {
            logits_ref = Some(step.logits.clone());
        }
        if i == n {
            logits_x = Some(step.logits.clone());
        }
        if let Some((prev_act, prev_grads)) = &prev {
            let y = step.activation.data();
            let y0 = prev_act.data();
            for (t, acc) in scores.iter_mut().enumerate() {
                let g = step.grads[t].data();
                match (path.rule, increment) {
                    (_, StepIncrement::RawActivation) => {
                        let w = 1.0 / n as f64;
                        for j in 0..size {
                            acc[j] += g[j] * y[j] * w;
                        }
                    }
                    (Rule::RightRiemann, _) => {
                        for j in 0..size {
                            acc[j] += g[j] * (y[j] - y0[j]);
                        }
                    }
                    (Rule::Trapezoid, _) => {
                        let g0 = prev_grads[t].data();
                        for j in 0..size {
                            acc[j] += 0.5 * (g0[j] + g[j]) * (y[j] - y0[j]);
                        }
                    }
                }
            }
        }
        prev = Some((step.activation.clone(), step.grads.clone()));
    })?;
    let (logits_ref, logits_x) = (logits_ref.unwrap(), logits_x.unwrap());
    let meta = probe.meta(n, targets.len());
    let shape = net.shape_at(position).to_vec();
    Ok(fns
        .iter()
        .zip(scores)
        .map(|(f, s)| {
            finish(
                Method::NeuronIntegratedGradients,
                layer,
                f,
                Tensor::from_parts(shape.clone(), s),
                f.eval(&logits_x) - f.eval(&logits_ref),
                meta.clone(),
            )
        })
        .collect())
}

/// Integrated Gradients on the activations of `layer` (conductance of each
/// neuron in that layer). Costs `n + 1` forward passes and `n` gradient
/// passes per target with the right Riemann rule, `n + 1` with the
/// trapezoid rule.
pub fn neuron_integrated_gradients(
    net: &Network,
    path: &PathSpec,
    layer: &str,
    target: TargetSpec,
) -> Result<AttributionResult> {
    Ok(neuron_integrated_gradients_multi(net, path, layer, &[target])?.remove(0))
}

/// As [`neuron_integrated_gradients`] for several targets, sharing the
/// forward passes.
pub fn neuron_integrated_gradients_multi(
    net: &Network,
    path: &PathSpec,
    layer: &str,
    targets: &[TargetSpec],
) -> Result<Vec<AttributionResult>> {
    nig_impl(
        net,
        path,
        layer,
        targets,
        StepIncrement::ActivationDifference,
    )
}

pub(crate) fn nig_without_differencing(
    net: &Network,
    path: &PathSpec,
    layer: &str,
    target: TargetSpec,
) -> Result<AttributionResult> {
    Ok(nig_impl(net, path, layer, &[target], StepIncrement::RawActivation)?.remove(0))
}

/// Input Integrated Gradients: `(x − x′) ⊙` the path-averaged input gradient.
pub fn integrated_gradients(
    net: &Network,
    path: &PathSpec,
    target: TargetSpec,
) -> Result<AttributionResult> {
    Ok(integrated_gradients_multi(net, path, &[target])?.remove(0))
}

pub fn integrated_gradients_multi(
    net: &Network,
    path: &PathSpec,
    targets: &[TargetSpec],
) -> Result<Vec<AttributionResult>> {
    path.check(net)?;
    let probe = Probe::new(net);
    let size = path.input.len();
    let mut mean_grad = vec![vec![0.0; size]; targets.len()];
    let mut logits_ref = None;
    let mut logits_x = None;
    let fns = sweep(&probe, path, 0, targets, |i, step, _| {
        if i == 0 {
            logits_ref = Some(step.logits.clone());
        }
        if i == path.steps {
            logits_x = Some(step.logits.clone());
        }
        let w = path.gradient_weight(i);
        if w == 0.0 {
            return;
        }
        for (acc, g) in mean_grad.iter_mut().zip(&step.grads) {
            for (a, &v) in acc.iter_mut().zip(g.data()) {
                *a += w * v;
            }
        }
    })?;
    let (logits_ref, logits_x) = (logits_ref.unwrap(), logits_x.unwrap());
    let meta = probe.meta(path.steps, targets.len());
    let delta: Vec<f64> = path
        .input
        .data()
        .iter()
        .zip(path.reference.data())
        .map(|(x, r)| x - r)
        .collect();
    Ok(fns
        .iter()
        .zip(mean_grad)
        .map(|(f, g)| {
            let scores = g.iter().zip(&delta).map(|(g, d)| d * g).collect();
            finish(
                Method::IntegratedGradients,
                INPUT_LAYER,
                f,
                Tensor::from_parts(path.input.shape().to_vec(), scores),
                f.eval(&logits_x) - f.eval(&logits_ref),
                meta.clone(),
            )
        })
        .collect())
}
