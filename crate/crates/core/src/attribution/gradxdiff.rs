use super::{finish, resolve_all, AttributionResult, Method, PathSpec, Probe};
use crate::error::Result;
use crate::net::Network;
use crate::target::TargetSpec;
use crate::tensor::Tensor;

/// Gradient at the actual input times the activation difference from the
/// reference. Ignores `path.steps`.
pub fn grad_x_diff(
    net: &Network,
    path: &PathSpec,
    layer: &str,
    target: TargetSpec,
) -> Result<AttributionResult> {
    Ok(grad_x_diff_multi(net, path, layer, &[target])?.remove(0))
}

pub fn grad_x_diff_multi(
    net: &Network,
    path: &PathSpec,
    layer: &str,
    targets: &[TargetSpec],
) -> Result<Vec<AttributionResult>> {
    path.check(net)?;
    let position = net.position(layer)?;
    let probe = Probe::new(net);
    let trace_x = probe.forward(&path.input)?;
    let trace_ref = probe.forward(&path.reference)?;
    let fns = resolve_all(targets, trace_x.logits())?;
    let diff = trace_x.at(position).sub(trace_ref.at(position))?;
    let grads: Vec<Tensor> = fns
        .iter()
        .map(|f| probe.gradient(&trace_x, f, position))
        .collect();
    let meta = probe.meta(1, targets.len());
    fns.iter()
        .zip(grads)
        .map(|(f, g)| {
            Ok(finish(
                Method::GradTimesDiff,
                layer,
                f,
                g.mul(&diff)?,
                f.eval(trace_x.logits()) - f.eval(trace_ref.logits()),
                meta.clone(),
            ))
        })
        .collect()
}
