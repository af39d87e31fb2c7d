//! Attribution methods for hidden neurons and inputs.
//!
//! All methods explain the change of a scalar logit functional between a
//! reference input and an actual input. Each returns an
//! [`AttributionResult`] carrying the scores, the completeness residual
//! `Σ scores − (target(x) − target(x′))` and the number of network
//! evaluations it spent.

mod conductance;
mod deeplift;
mod gradxdiff;
mod integrated;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ForwardTrace, Network};
use crate::target::{LogitFunctional, TargetSpec};
use crate::tensor::Tensor;

pub use conductance::{total_conductance_direct, DEFAULT_SIZE_CAP};
pub use deeplift::{
    deeplift_attribute, deeplift_multi, deeplift_multipliers, DeepLiftRules, LayerMultipliers,
    MultiplierStack, NonlinearRule, RESCALE_EPSILON,
};
pub use gradxdiff::{grad_x_diff, grad_x_diff_multi};
pub(crate) use integrated::nig_without_differencing;
pub use integrated::{
    integrated_gradients, integrated_gradients_multi, neuron_integrated_gradients,
    neuron_integrated_gradients_multi,
};

/// Quadrature rule along the straight-line path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Gradient at the right end of each step, as in the plain Riemann sum.
    #[default]
    RightRiemann,
    /// Average of the gradients at both ends of each step.
    Trapezoid,
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right" | "right_riemann" => Ok(Rule::RightRiemann),
            "trapezoid" => Ok(Rule::Trapezoid),
            other => Err(Error::InvalidArgument(format!(
                "unknown rule '{other}' (expected right or trapezoid)"
            ))),
        }
    }
}

/// Straight-line path from `reference` to `input` discretised into `steps`
/// equal steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub reference: Tensor,
    pub input: Tensor,
    pub steps: usize,
    pub rule: Rule,
}

impl PathSpec {
    pub fn new(reference: Tensor, input: Tensor, steps: usize, rule: Rule) -> Result<Self> {
        reference.check_same_shape(&input)?;
        if steps == 0 {
            return Err(Error::ZeroSteps);
        }
        Ok(Self {
            reference,
            input,
            steps,
            rule,
        })
    }

    /// `x′ + (i/n)(x − x′)`; the endpoints are returned exactly.
    pub fn interpolate(&self, i: usize) -> Result<Tensor> {
        let n = self.steps;
        if i > n {
            return Err(Error::StepOutOfRange { index: i, steps: n });
        }
        if i == 0 {
            return Ok(self.reference.clone());
        }
        if i == n {
            return Ok(self.input.clone());
        }
        let alpha = i as f64 / n as f64;
        let data = self
            .reference
            .data()
            .iter()
            .zip(self.input.data())
            .map(|(&r, &x)| r + alpha * (x - r))
            .collect();
        Ok(Tensor::from_parts(self.input.shape().to_vec(), data))
    }

    pub(crate) fn check(&self, net: &Network) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::ZeroSteps);
        }
        net.check_input(&self.reference)?;
        net.check_input(&self.input)
    }

    /// Weight of the gradient at point `i` in the input-gradient average.
    pub(crate) fn gradient_weight(&self, i: usize) -> f64 {
        let n = self.steps as f64;
        match self.rule {
            Rule::RightRiemann if i == 0 => 0.0,
            Rule::RightRiemann => 1.0 / n,
            Rule::Trapezoid if i == 0 || i == self.steps => 0.5 / n,
            Rule::Trapezoid => 1.0 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    IntegratedGradients,
    NeuronIntegratedGradients,
    ConductanceOracle,
    DeepLift(DeepLiftRules),
    GradTimesDiff,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::IntegratedGradients => "ig",
            Method::NeuronIntegratedGradients => "nig",
            Method::ConductanceOracle => "conductance",
            Method::DeepLift(DeepLiftRules::DefaultMixed) => "deeplift-default",
            Method::DeepLift(DeepLiftRules::RescaleAll) => "deeplift-rescale",
            Method::GradTimesDiff => "gradxdiff",
        };
        f.write_str(s)
    }
}

/// Evaluation counts and timing for one attribution call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostMeta {
    pub steps: usize,
    pub forward_passes: usize,
    pub gradient_passes: usize,
    pub multiplier_passes: usize,
    pub jvp_passes: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult {
    pub method: Method,
    pub layer: String,
    /// Class of the target functional, when it was resolved from one.
    pub class: Option<usize>,
    pub scores: Tensor,
    /// `target(x) − target(x′)`.
    pub target_delta: f64,
    pub completeness_residual: f64,
    pub meta: CostMeta,
}

impl AttributionResult {
    /// |residual| / |Δtarget|, or the absolute residual when Δtarget is 0.
    pub fn relative_residual(&self) -> f64 {
        let denom = self.target_delta.abs();
        if denom > 0.0 {
            self.completeness_residual.abs() / denom
        } else {
            self.completeness_residual.abs()
        }
    }
}

/// Counting wrapper through which every attribution method reaches the
/// network; the counts end up in [`CostMeta`].
pub(crate) struct Probe<'a> {
    pub net: &'a Network,
    forwards: AtomicUsize,
    gradients: AtomicUsize,
    multipliers: AtomicUsize,
    jvps: AtomicUsize,
    started: Instant,
}

impl<'a> Probe<'a> {
    pub fn new(net: &'a Network) -> Self {
        Self {
            net,
            forwards: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
            multipliers: AtomicUsize::new(0),
            jvps: AtomicUsize::new(0),
            started: Instant::now(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardTrace> {
        self.forwards.fetch_add(1, Ordering::Relaxed);
        self.net.forward(x)
    }

    pub fn gradient(
        &self,
        trace: &ForwardTrace,
        target: &LogitFunctional,
        position: usize,
    ) -> Tensor {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.net.backward(trace, target.weights(), position)
    }

    pub fn jvp(&self, trace: &ForwardTrace, tangent: &[f64], to: usize) -> Tensor {
        self.jvps.fetch_add(1, Ordering::Relaxed);
        self.net.jvp(trace, 0, tangent, to)
    }

    pub fn count_multiplier_pass(&self) {
        self.multipliers.fetch_add(1, Ordering::Relaxed);
    }

    /// Cost snapshot. Gradient and multiplier passes are divided evenly
    /// among `targets` results that shared the same forward passes.
    pub fn meta(&self, steps: usize, targets: usize) -> CostMeta {
        let per = |c: &AtomicUsize| c.load(Ordering::Relaxed) / targets.max(1);
        CostMeta {
            steps,
            forward_passes: self.forwards.load(Ordering::Relaxed),
            gradient_passes: per(&self.gradients),
            multiplier_passes: per(&self.multipliers),
            jvp_passes: per(&self.jvps),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        }
    }
}

/// A method plus its own parameters, as selected on the command line or in
/// an ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    Ig {
        steps: usize,
        rule: Rule,
    },
    Nig {
        steps: usize,
        rule: Rule,
    },
    Conductance {
        steps: usize,
        rule: Rule,
        size_cap: usize,
    },
    DeepLift {
        rules: DeepLiftRules,
    },
    GradXDiff,
}

impl MethodSpec {
    /// Stable label used in reports, e.g. `nig-n10` or `deeplift-default`.
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Ig { steps, .. } => format!("ig-n{steps}"),
            MethodSpec::Nig { steps, .. } => format!("nig-n{steps}"),
            MethodSpec::Conductance { steps, .. } => format!("conductance-n{steps}"),
            MethodSpec::DeepLift { rules } => Method::DeepLift(*rules).to_string(),
            MethodSpec::GradXDiff => Method::GradTimesDiff.to_string(),
        }
    }

    /// Parses a method name; path-based methods take `steps` and `rule`.
    pub fn parse(name: &str, steps: usize, rule: Rule) -> Result<Self> {
        Ok(match name {
            "nig" => MethodSpec::Nig { steps, rule },
            "ig" => MethodSpec::Ig { steps, rule },
            "conductance" => MethodSpec::Conductance {
                steps,
                rule,
                size_cap: DEFAULT_SIZE_CAP,
            },
            "deeplift-default" | "deeplift" => MethodSpec::DeepLift {
                rules: DeepLiftRules::DefaultMixed,
            },
            "deeplift-rescale" => MethodSpec::DeepLift {
                rules: DeepLiftRules::RescaleAll,
            },
            "gradxdiff" => MethodSpec::GradXDiff,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown method '{other}' (expected one of: {})",
                    METHOD_NAMES.join(", ")
                )))
            }
        })
    }

    /// Runs the method for several targets, sharing forward passes. IG
    /// always attributes to the input and ignores `layer`.
    pub fn attribute(
        &self,
        net: &Network,
        reference: &Tensor,
        input: &Tensor,
        layer: &str,
        targets: &[TargetSpec],
    ) -> Result<Vec<AttributionResult>> {
        let path = |steps, rule| PathSpec::new(reference.clone(), input.clone(), steps, rule);
        match *self {
            MethodSpec::Ig { steps, rule } => {
                integrated_gradients_multi(net, &path(steps, rule)?, targets)
            }
            MethodSpec::Nig { steps, rule } => {
                neuron_integrated_gradients_multi(net, &path(steps, rule)?, layer, targets)
            }
            MethodSpec::Conductance {
                steps,
                rule,
                size_cap,
            } => targets
                .iter()
                .map(|t| total_conductance_direct(net, &path(steps, rule)?, layer, *t, size_cap))
                .collect(),
            MethodSpec::DeepLift { rules } => {
                deeplift_multi(net, reference, input, layer, targets, rules)
            }
            MethodSpec::GradXDiff => {
                grad_x_diff_multi(net, &path(1, Rule::RightRiemann)?, layer, targets)
            }
        }
    }
}

/// Names accepted by [`MethodSpec::parse`].
pub const METHOD_NAMES: &[&str] = &[
    "nig",
    "ig",
    "conductance",
    "deeplift-default",
    "deeplift-rescale",
    "gradxdiff",
];

/// What `--method all` expands to.
pub const ALL_METHODS: &[&str] = &[
    "nig",
    "ig",
    "deeplift-default",
    "deeplift-rescale",
    "gradxdiff",
];

/// Subtracts, for every neuron, the mean score across classes:
/// `out[c][j] = in[c][j] − mean_c in[·][j]`.
pub fn normalize_across_classes(scores: &Tensor) -> Result<Tensor> {
    let &[classes, neurons] = scores.shape() else {
        return Err(Error::InvalidArgument(format!(
            "expected a classes × neurons matrix, got shape {:?}",
            scores.shape()
        )));
    };
    if classes < 2 {
        return Err(Error::InvalidArgument(
            "normalizing across classes needs at least two classes".into(),
        ));
    }
    let means = scores.reduce_axis(crate::tensor::Reduction::Mean, 0)?;
    let mut out = scores.clone();
    for row in out.data_mut().chunks_exact_mut(neurons) {
        for (v, m) in row.iter_mut().zip(means.data()) {
            *v -= m;
        }
    }
    Ok(out)
}

/// Stacks per-class results (all for the same layer) into a
/// classes × neurons matrix.
pub fn class_matrix(results: &[AttributionResult]) -> Result<Tensor> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidArgument("no per-class results".into()))?;
    let neurons = first.scores.len();
    let mut data = Vec::with_capacity(results.len() * neurons);
    for r in results {
        if r.scores.len() != neurons {
            return Err(Error::ShapeMismatch {
                left: first.scores.shape().to_vec(),
                right: r.scores.shape().to_vec(),
            });
        }
        data.extend_from_slice(r.scores.data());
    }
    Tensor::new(vec![results.len(), neurons], data)
}

pub(crate) fn finish(
    method: Method,
    layer: &str,
    target: &LogitFunctional,
    scores: Tensor,
    target_delta: f64,
    meta: CostMeta,
) -> AttributionResult {
    let completeness_residual = scores.sum() - target_delta;
    AttributionResult {
        method,
        layer: layer.to_string(),
        class: target.class(),
        scores,
        target_delta,
        completeness_residual,
        meta,
    }
}

pub(crate) fn resolve_all(targets: &[TargetSpec], logits: &Tensor) -> Result<Vec<LogitFunctional>> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no targets requested".into()));
    }
    targets.iter().map(|t| t.resolve(logits)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_points() {
        let p = PathSpec::new(
            Tensor::vector(vec![0.0, 0.0]),
            Tensor::vector(vec![2.0, 4.0]),
            4,
            Rule::RightRiemann,
        )
        .unwrap();
        assert_eq!(p.interpolate(1).unwrap().data(), &[0.5, 1.0]);
        assert_eq!(p.interpolate(0).unwrap(), p.reference);
        assert_eq!(p.interpolate(4).unwrap(), p.input);
        assert!(matches!(
            p.interpolate(5),
            Err(Error::StepOutOfRange { index: 5, steps: 4 })
        ));
    }

    #[test]
    fn endpoints_exact_for_awkward_values() {
        let r = Tensor::vector(vec![0.1, -3.3, 1e-17]);
        let x = Tensor::vector(vec![0.7, 2.9, 1e17]);
        let p = PathSpec::new(r.clone(), x.clone(), 3, Rule::Trapezoid).unwrap();
        assert_eq!(p.interpolate(3).unwrap(), x);
        assert_eq!(p.interpolate(0).unwrap(), r);
    }

    #[test]
    fn zero_steps_rejected() {
        let t = Tensor::vector(vec![1.0]);
        assert!(matches!(
            PathSpec::new(t.clone(), t, 0, Rule::RightRiemann),
            Err(Error::ZeroSteps)
        ));
    }

    #[test]
    fn normalization() {
        let equal = Tensor::new(vec![3, 2], vec![1.5, -2.0, 1.5, -2.0, 1.5, -2.0]).unwrap();
        assert!(normalize_across_classes(&equal)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let two = Tensor::new(vec![2, 1], vec![4.0, 0.0]).unwrap();
        assert_eq!(normalize_across_classes(&two).unwrap().data(), &[2.0, -2.0]);
        let one = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(normalize_across_classes(&one).is_err());
    }

    #[test]
    fn normalized_columns_have_zero_mean() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let m = Tensor::new(
            vec![10, 7],
            (0..70).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        )
        .unwrap();
        let out = normalize_across_classes(&m).unwrap();
        for j in 0..7 {
            let mean: f64 = (0..10).map(|c| out.data()[c * 7 + j]).sum::<f64>() / 10.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!(
            MethodSpec::parse("nig", 10, Rule::RightRiemann)
                .unwrap()
                .label(),
            "nig-n10"
        );
        let err = MethodSpec::parse("lrp", 1, Rule::RightRiemann)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("deeplift-rescale") && err.contains("gradxdiff"),
            "{err}"
        );
        assert_eq!("trapezoid".parse::<Rule>().unwrap(), Rule::Trapezoid);
    }
}
