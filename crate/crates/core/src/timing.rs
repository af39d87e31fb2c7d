//! Wall-clock and evaluation-count measurements for the attribution methods.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{CostMeta, MethodSpec};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::target::TargetSpec;
use crate::tensor::Tensor;

/// Least-squares line `y = slope·x + intercept` with its coefficient of
/// determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "a line fit needs at least two paired points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "line fit needs distinct x values".into(),
        ));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Per-example evaluation counts plus total wall time for one method over
/// a set of examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: String,
    pub examples: usize,
    /// Counts of the first example; every example costs the same.
    pub per_example: CostMeta,
    pub wall_time_secs: f64,
}

/// Runs `method` on every example against `reference`. Examples run one
/// after another unless `parallel_examples` is set; each path-based call
/// already spreads its interpolation points over the worker pool.
pub fn time_method(
    net: &Network,
    reference: &Tensor,
    examples: &[Tensor],
    layer: &str,
    method: &MethodSpec,
    target: TargetSpec,
    parallel_examples: bool,
) -> Result<Timing> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument(
            "timing needs at least one example".into(),
        ));
    }
    let run = |x: &Tensor| -> Result<CostMeta> {
        Ok(method
            .attribute(net, reference, x, layer, &[target])?
            .remove(0)
            .meta)
    };
    let started = Instant::now();
    let metas: Vec<CostMeta> = if parallel_examples {
        examples.par_iter().map(run).collect::<Result<_>>()?
    } else {
        examples.iter().map(run).collect::<Result<_>>()?
    };
    let wall_time_secs = started.elapsed().as_secs_f64();
    Ok(Timing {
        method: method.label(),
        examples: examples.len(),
        per_example: metas[0].clone(),
        wall_time_secs,
    })
}
