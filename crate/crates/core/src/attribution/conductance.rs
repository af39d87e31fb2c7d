//! Brute-force total conductance.
//!
//! Evaluates `Σ_i (x_i − x′_i) · ∫ ∂F/∂y · ∂y/∂x_i dα` literally: at every
//! interpolation point the Jacobian of the layer with respect to the input
//! is built one column at a time with forward-mode tangents, so the cost
//! grows with the input dimension. Meant as an independent check on
//! [`neuron_integrated_gradients`](super::neuron_integrated_gradients) for
//! small networks.

use super::{finish, resolve_all, AttributionResult, Method, PathSpec, Probe};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::target::TargetSpec;
use crate::tensor::Tensor;

pub const DEFAULT_SIZE_CAP: usize = 64;

pub fn total_conductance_direct(
    net: &Network,
    path: &PathSpec,
    layer: &str,
    target: TargetSpec,
    size_cap: usize,
) -> Result<AttributionResult> {
    path.check(net)?;
    let dims = path.input.len();
    if dims > size_cap {
        return Err(Error::SizeCap {
            dims,
            cap: size_cap,
        });
    }
    let position = net.position(layer)?;
    let probe = Probe::new(net);
    let size: usize = net.shape_at(position).iter().product();
    let delta: Vec<f64> = path
        .input
        .data()
        .iter()
        .zip(path.reference.data())
        .map(|(x, r)| x - r)
        .collect();

    let trace_x = probe.forward(&path.input)?;
    let f = resolve_all(&[target], trace_x.logits())?.remove(0);
    let trace_ref = probe.forward(&path.reference)?;
    let target_delta = f.eval(trace_x.logits()) - f.eval(trace_ref.logits());

    let mut scores = vec![0.0; size];
    let mut column = vec![0.0; dims];
    for k in 0..=path.steps {
        let weight = path.gradient_weight(k);
        if weight == 0.0 {
            continue;
        }
        let trace = if k == path.steps {
            trace_x.clone()
        } else if k == 0 {
            trace_ref.clone()
        } else {
            probe.forward(&path.interpolate(k)?)?
        };
        let grad = probe.gradient(&trace, &f, position);
        // Σ_i (x_i − x′_i) ∂y/∂x_i, one Jacobian column per input
        let mut directional = vec![0.0; size];
        for i in 0..dims {
            if delta[i] == 0.0 {
                continue;
            }
            column.iter_mut().for_each(|c| *c = 0.0);
            column[i] = 1.0;
            let jac_col = probe.jvp(&trace, &column, position);
            for (d, &j) in directional.iter_mut().zip(jac_col.data()) {
                *d += delta[i] * j;
            }
        }
        for ((s, &g), &d) in scores.iter_mut().zip(grad.data()).zip(&directional) {
            *s += weight * g * d;
        }
    }
    let meta = probe.meta(path.steps, 1);
    Ok(finish(
        Method::ConductanceOracle,
        layer,
        &f,
        Tensor::from_parts(net.shape_at(position).to_vec(), scores),
        target_delta,
        meta,
    ))
}
