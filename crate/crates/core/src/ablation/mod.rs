//! Ablation evaluation of neuron attributions.
//!
//! For each example, the neurons of a layer that move furthest from their
//! reference activation are clamped back to the reference, and the actual
//! change of the target is compared with the change predicted by the sum
//! of their attribution scores.

mod ranksum;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ranksum::{exact_rank_sum_p, rank_sum_test, RankSumOutcome};

use crate::attribution::{class_matrix, normalize_across_classes, MethodSpec};
use crate::error::{Error, Result};
use crate::net::{ForwardTrace, Network};
use crate::target::TargetSpec;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Largest |activation(x) − activation(x′)|.
    #[default]
    AbsActivationDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub layer: String,
    pub fraction: f64,
    pub target: TargetSpec,
    pub selection: Selection,
}

impl AblationSpec {
    pub fn new(layer: impl Into<String>) -> Self {
        Self {
            layer: layer.into(),
            fraction: 0.10,
            target: TargetSpec::TopLogitMinusMean,
            selection: Selection::AbsActivationDiff,
        }
    }

    /// `floor(fraction × size)`, with a small allowance so that e.g.
    /// 0.29 × 100 counts as 29.
    pub fn selection_size(&self, layer_size: usize) -> Result<usize> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fraction must lie in (0, 1], got {}",
                self.fraction
            )));
        }
        let k = ((self.fraction * layer_size as f64) + 1e-9).floor() as usize;
        if k == 0 {
            return Err(Error::EmptySelection {
                fraction: self.fraction,
                size: layer_size,
            });
        }
        Ok(k.min(layer_size))
    }
}

/// Flat indices of the `floor(fraction × size)` neurons with the largest
/// activation change, ties broken towards the lower index. Returned in
/// ascending index order.
pub fn select_neurons(
    net: &Network,
    trace_x: &ForwardTrace,
    trace_ref: &ForwardTrace,
    spec: &AblationSpec,
) -> Result<Vec<usize>> {
    let position = net.position(&spec.layer)?;
    let (act, reference) = (trace_x.at(position), trace_ref.at(position));
    act.check_same_shape(reference)?;
    let k = spec.selection_size(act.len())?;
    let diffs: Vec<f64> = act
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, r)| (a - r).abs())
        .collect();
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    // stable: equal differences keep ascending index order
    order.sort_by(|&a, &b| diffs[b].total_cmp(&diffs[a]));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Logits after overwriting the listed neurons of `layer` during the forward
/// pass on `x`.
pub fn ablate_forward(
    net: &Network,
    x: &Tensor,
    layer: &str,
    clamped: &[(usize, f64)],
) -> Result<Tensor> {
    let position = net.position(layer)?;
    Ok(net.forward_clamped(x, position, clamped)?.logits().clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub predicted_delta: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub example_id: usize,
    pub class: usize,
    pub selected: usize,
    pub actual_delta: f64,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleFailure {
    pub example_id: usize,
    pub method: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub mae: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub method_a: String,
    pub method_b: String,
    pub u: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub spec: AblationSpec,
    pub methods: Vec<String>,
    pub records: Vec<ExampleRecord>,
    pub failures: Vec<ExampleFailure>,
    pub aggregates: Vec<MethodAggregate>,
    pub pairwise: Vec<PairwiseTest>,
}

impl AblationReport {
    pub fn mae(&self, method: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.method == method)
            .map(|a| a.mae)
    }

    pub fn errors(&self, method: &str) -> Vec<f64> {
        self.records
            .iter()
            .flat_map(|r| r.outcomes.iter().filter(|o| o.method == method))
            .map(|o| o.abs_error)
            .collect()
    }
}

/// One example through the full protocol.
fn study_example(
    net: &Network,
    example_id: usize,
    x: &Tensor,
    reference: &Tensor,
    spec: &AblationSpec,
    methods: &[MethodSpec],
) -> std::result::Result<ExampleRecord, ExampleFailure> {
    let fail = |method: &str, e: Error| ExampleFailure {
        example_id,
        method: method.to_string(),
        message: e.to_string(),
    };
    let setup = || -> Result<_> {
        let trace_x = net.forward(x)?;
        let trace_ref = net.forward(reference)?;
        let target = spec.target.resolve(trace_x.logits())?;
        let class = target.class().expect("targets resolve to a class");
        let selected = select_neurons(net, &trace_x, &trace_ref, spec)?;
        let position = net.position(&spec.layer)?;
        let clamp: Vec<(usize, f64)> = selected
            .iter()
            .map(|&i| (i, trace_ref.at(position).data()[i]))
            .collect();
        let ablated = net.forward_clamped(x, position, &clamp)?;
        let actual_delta = target.eval(ablated.logits()) - target.eval(trace_x.logits());
        Ok((class, selected, actual_delta))
    };
    let (class, selected, actual_delta) = setup().map_err(|e| fail("setup", e))?;
    let centred = !matches!(spec.target, TargetSpec::Logit(_));
    let classes = net.output_dim();
    let per_class: Vec<TargetSpec> = (0..classes).map(TargetSpec::Logit).collect();
    let mut outcomes = Vec::with_capacity(methods.len());
    for method in methods {
        let label = method.label();
        let row = (|| -> Result<Vec<f64>> {
            let results = method.attribute(net, reference, x, &spec.layer, &per_class)?;
            let matrix = class_matrix(&results)?;
            let matrix = if centred {
                normalize_across_classes(&matrix)?
            } else {
                matrix
            };
            let n = matrix.shape()[1];
            Ok(matrix.data()[class * n..(class + 1) * n].to_vec())
        })()
        .map_err(|e| fail(&label, e))?;
        if selected.iter().any(|&i| i >= row.len()) {
            return Err(fail(
                &label,
                Error::InvalidArgument(format!(
                    "method scores {} neurons, not layer '{}'",
                    row.len(),
                    spec.layer
                )),
            ));
        }
        let predicted_delta = -selected.iter().map(|&i| row[i]).sum::<f64>();
        outcomes.push(MethodOutcome {
            method: label,
            predicted_delta,
            abs_error: (actual_delta - predicted_delta).abs(),
        });
    }
    Ok(ExampleRecord {
        example_id,
        class,
        selected: selected.len(),
        actual_delta,
        outcomes,
    })
}

/// Runs the ablation protocol over `examples` (id, input) against a single
/// reference input. Examples are processed in parallel and merged by id.
pub fn run_ablation_study(
    net: &Network,
    examples: &[(usize, Tensor)],
    reference: &Tensor,
    spec: &AblationSpec,
    methods: &[MethodSpec],
) -> Result<AblationReport> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation study needs examples".into(),
        ));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation study needs methods".into(),
        ));
    }
    let position = net.position(&spec.layer)?;
    spec.selection_size(net.shape_at(position).iter().product())?;
    net.check_input(reference)?;
    let labels: Vec<String> = methods.iter().map(MethodSpec::label).collect();
    let mut outcomes: Vec<_> = examples
        .par_iter()
        .map(|(id, x)| (*id, study_example(net, *id, x, reference, spec, methods)))
        .collect();
    outcomes.sort_by_key(|(id, _)| *id);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (_, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let mut errors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in &records {
        for o in &r.outcomes {
            errors
                .entry(o.method.as_str())
                .or_default()
                .push(o.abs_error);
        }
    }
    let aggregates = labels
        .iter()
        .map(|m| {
            let e = errors.get(m.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            MethodAggregate {
                method: m.clone(),
                mae: if e.is_empty() {
                    f64::NAN
                } else {
                    e.iter().sum::<f64>() / e.len() as f64
                },
                count: e.len(),
            }
        })
        .collect();
    let mut pairwise = Vec::new();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            let (ea, eb) = (&errors.get(a.as_str()), &errors.get(b.as_str()));
            if let (Some(ea), Some(eb)) = (ea, eb) {
                let t = rank_sum_test(ea, eb)?;
                pairwise.push(PairwiseTest {
                    method_a: a.clone(),
                    method_b: b.clone(),
                    u: t.u,
                    p_value: t.p_value,
                });
            }
        }
    }
    Ok(AblationReport {
        spec: spec.clone(),
        methods: labels,
        records,
        failures,
        aggregates,
        pairwise,
    })
}
