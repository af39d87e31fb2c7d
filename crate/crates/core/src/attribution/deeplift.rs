//! DeepLIFT multiplier back-propagation with the Rescale and RevealCancel
//! nonlinearity rules.
//!
//! Multipliers flow from the target back to the requested layer using only
//! the reference and actual activations, so the method needs two forward
//! passes and one backward sweep per target, independent of any step count.
//!
//! Every position keeps the invariant `Σ_j contribution_j = Δtarget`, where a
//! neuron's contribution is `m_j Δa_j`, or `m⁺_j Δ⁺_j + m⁻_j Δ⁻_j` at the
//! input of a RevealCancel nonlinearity.
//!
//! Rules:
//! - dense / conv: multipliers pull back through the weights. When the layer
//!   output carries split multipliers, the term `W_ji Δx_i` uses `m⁺_j` if it
//!   is positive and `m⁻_j` if it is negative.
//! - Rescale: `m = Δy/Δa`, or the derivative at the actual pre-activation
//!   when `|Δa| ≤ ε`.
//! - RevealCancel: `Δ⁺`/`Δ⁻` are the sums of the positive and negative terms
//!   `W_ji Δx_i` feeding the neuron; `Δy⁺` and `Δy⁻` average the effect of
//!   applying each part first and second, and `m± = Δy±/Δ±` with the same
//!   ε fallback.
//! - max-pool: the pooled delta is routed to the window element that wins
//!   on the actual input, scaled by `Δy/Δx` of that element.

use serde::{Deserialize, Serialize};

use super::{finish, resolve_all, AttributionResult, Method, Probe};
use crate::error::{Error, Result};
use crate::net::{kernels, pool_geometry, ForwardTrace, LayerKind, Network};
use crate::target::{LogitFunctional, TargetSpec};
use crate::tensor::Tensor;

pub const RESCALE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeepLiftRules {
    /// Rescale at every nonlinearity.
    RescaleAll,
    /// RevealCancel at nonlinearities fed by dense layers, Rescale elsewhere.
    DefaultMixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearRule {
    Rescale,
    RevealCancel,
}

/// Positive/negative decomposition at the input of a RevealCancel unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMultipliers {
    pub pos_multiplier: Vec<f64>,
    pub neg_multiplier: Vec<f64>,
    pub pos_delta: Vec<f64>,
    pub neg_delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Multipliers {
    Single(Vec<f64>),
    Split(SplitMultipliers),
}

/// Multipliers and deltas recorded at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMultipliers {
    pub position: usize,
    pub layer: String,
    pub delta: Tensor,
    /// Contribution of each neuron to Δtarget.
    pub contributions: Tensor,
    /// Single multiplier per neuron; at split positions this is
    /// contribution / Δa (0 where Δa is 0).
    pub multipliers: Tensor,
    pub split: Option<SplitMultipliers>,
}

/// Per-position multipliers from the logits down to the requested layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierStack {
    pub target_delta: f64,
    /// Ordered from the logits downwards.
    pub layers: Vec<LayerMultipliers>,
}

impl MultiplierStack {
    /// Largest `|Σ contributions − Δtarget|` over the recorded positions.
    pub fn worst_conservation_error(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| (l.contributions.sum() - self.target_delta).abs())
            .fold(0.0, f64::max)
    }
}

fn nonlinear_rule(net: &Network, relu_index: usize, rules: DeepLiftRules) -> NonlinearRule {
    let fed_by_dense =
        relu_index > 0 && matches!(net.layers()[relu_index - 1].kind, LayerKind::Dense { .. });
    match rules {
        DeepLiftRules::DefaultMixed if fed_by_dense => NonlinearRule::RevealCancel,
        _ => NonlinearRule::Rescale,
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

#[inline]
fn relu_slope(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn ratio_or_slope(dy: f64, da: f64, actual_pre: f64) -> f64 {
    if da.abs() > RESCALE_EPSILON {
        dy / da
    } else {
        relu_slope(actual_pre)
    }
}

fn sub(a: &Tensor, b: &Tensor) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect()
}

/// Sums of the positive and of the negative terms `W_ji Δx_i` of a dense layer.
fn dense_term_split(weight: &Tensor, dx: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cols = dx.len();
    weight
        .data()
        .chunks_exact(cols)
        .map(|row| {
            let (mut pos, mut neg) = (0.0, 0.0);
            for (&w, &d) in row.iter().zip(dx) {
                let t = w * d;
                if t > 0.0 {
                    pos += t;
                } else {
                    neg += t;
                }
            }
            (pos, neg)
        })
        .unzip()
}

struct Sweep<'a> {
    net: &'a Network,
    reference: &'a ForwardTrace,
    actual: &'a ForwardTrace,
    rules: DeepLiftRules,
}

impl Sweep<'_> {
    /// Pulls multipliers at position `k + 1` back through layer `k`.
    fn back(&self, k: usize, m_out: &Multipliers) -> Result<Multipliers> {
        let layer = &self.net.layers()[k];
        let x_ref = self.reference.at(k);
        let x_act = self.actual.at(k);
        let single = |m: &Multipliers| -> Result<Vec<f64>> {
            match m {
                Multipliers::Single(v) => Ok(v.clone()),
                Multipliers::Split(_) => Err(Error::InvalidArgument(format!(
                    "split multipliers cannot pass through {} layer '{}'",
                    layer.kind_name(),
                    layer.name
                ))),
            }
        };
        Ok(match &layer.kind {
            LayerKind::Dense { weight, .. } => match m_out {
                Multipliers::Single(m) => {
                    Multipliers::Single(kernels::matvec_transposed(weight.data(), m, x_act.len()))
                }
                Multipliers::Split(s) => {
                    let dx = sub(x_act, x_ref);
                    let cols = dx.len();
                    let mut m_in = vec![0.0; cols];
                    for (j, row) in weight.data().chunks_exact(cols).enumerate() {
                        let (mp, mn) = (s.pos_multiplier[j], s.neg_multiplier[j]);
                        for ((acc, &w), &d) in m_in.iter_mut().zip(row).zip(&dx) {
                            let t = w * d;
                            let m = if t > 0.0 {
                                mp
                            } else if t < 0.0 {
                                mn
                            } else {
                                0.5 * (mp + mn)
                            };
                            *acc += w * m;
                        }
                    }
                    Multipliers::Single(m_in)
                }
            },
            LayerKind::Conv2d {
                kernels: k_oihw, ..
            } => {
                let m = single(m_out)?;
                let g = crate::net::conv_geometry(
                    layer,
                    self.net.shape_at(k),
                    self.net.shape_at(k + 1),
                );
                let packed = kernels::repack_kernels(k_oihw.data(), &g);
                Multipliers::Single(kernels::conv_backward_input(&m, &packed, &g))
            }
            LayerKind::Relu => {
                let m = single(m_out)?;
                match nonlinear_rule(self.net, k, self.rules) {
                    NonlinearRule::Rescale => Multipliers::Single(
                        x_act
                            .data()
                            .iter()
                            .zip(x_ref.data())
                            .zip(&m)
                            .map(|((&a, &a0), &mo)| {
                                let dy = relu(a) - relu(a0);
                                mo * ratio_or_slope(dy, a - a0, a)
                            })
                            .collect(),
                    ),
                    NonlinearRule::RevealCancel => {
                        let LayerKind::Dense { weight, .. } = &self.net.layers()[k - 1].kind else {
                            unreachable!("RevealCancel is only chosen after dense layers")
                        };
                        let dx = sub(self.actual.at(k - 1), self.reference.at(k - 1));
                        let (pos_delta, neg_delta) = dense_term_split(weight, &dx);
                        let mut pos_multiplier = Vec::with_capacity(m.len());
                        let mut neg_multiplier = Vec::with_capacity(m.len());
                        for j in 0..m.len() {
                            let a0 = x_ref.data()[j];
                            let a = x_act.data()[j];
                            let (dp, dn) = (pos_delta[j], neg_delta[j]);
                            let dy_pos = 0.5
                                * ((relu(a0 + dp) - relu(a0))
                                    + (relu(a0 + dn + dp) - relu(a0 + dn)));
                            let dy_neg = 0.5
                                * ((relu(a0 + dn) - relu(a0))
                                    + (relu(a0 + dp + dn) - relu(a0 + dp)));
                            pos_multiplier.push(m[j] * ratio_or_slope(dy_pos, dp, a));
                            neg_multiplier.push(m[j] * ratio_or_slope(dy_neg, dn, a));
                        }
                        Multipliers::Split(SplitMultipliers {
                            pos_multiplier,
                            neg_multiplier,
                            pos_delta,
                            neg_delta,
                        })
                    }
                }
            }
            LayerKind::MaxPool { .. } => {
                let m = single(m_out)?;
                let g = pool_geometry(layer, self.net.shape_at(k), self.net.shape_at(k + 1));
                let xa = x_act.data();
                let xr = x_ref.data();
                let y_act = self.actual.at(k + 1).data();
                let y_ref = self.reference.at(k + 1).data();
                let mut m_in = vec![0.0; xa.len()];
                for (o, winner) in kernels::pool_argmax(xa, &g).into_iter().enumerate() {
                    let dy = y_act[o] - y_ref[o];
                    let dx = xa[winner] - xr[winner];
                    if dx.abs() > RESCALE_EPSILON {
                        m_in[winner] += m[o] * dy / dx;
                        continue;
                    }
                    // the winner barely moved: send the delta through the
                    // window element that moved most instead
                    let (best, best_dx) = kernels::pool_window(o, &g)
                        .map(|i| (i, xa[i] - xr[i]))
                        .fold((winner, dx), |acc, cur| {
                            if cur.1.abs() > acc.1.abs() {
                                cur
                            } else {
                                acc
                            }
                        });
                    if best_dx.abs() > RESCALE_EPSILON {
                        m_in[best] += m[o] * dy / best_dx;
                    } else {
                        m_in[winner] += m[o];
                    }
                }
                Multipliers::Single(m_in)
            }
            LayerKind::Flatten => Multipliers::Single(single(m_out)?),
        })
    }

    fn record(&self, position: usize, m: &Multipliers) -> LayerMultipliers {
        let shape = self.net.shape_at(position).to_vec();
        let delta = sub(self.actual.at(position), self.reference.at(position));
        let (contrib, effective, split) = match m {
            Multipliers::Single(v) => (
                v.iter().zip(&delta).map(|(m, d)| m * d).collect::<Vec<_>>(),
                v.clone(),
                None,
            ),
            Multipliers::Split(s) => {
                let contrib: Vec<f64> = (0..delta.len())
                    .map(|j| {
                        s.pos_multiplier[j] * s.pos_delta[j] + s.neg_multiplier[j] * s.neg_delta[j]
                    })
                    .collect();
                let effective = contrib
                    .iter()
                    .zip(&delta)
                    .map(|(c, d)| if *d != 0.0 { c / d } else { 0.0 })
                    .collect();
                (contrib, effective, Some(s.clone()))
            }
        };
        LayerMultipliers {
            position,
            layer: if position == 0 {
                crate::net::INPUT_LAYER.to_string()
            } else {
                self.net.layers()[position - 1].name.clone()
            },
            delta: Tensor::from_parts(shape.clone(), delta),
            contributions: Tensor::from_parts(shape.clone(), contrib),
            multipliers: Tensor::from_parts(shape, effective),
            split,
        }
    }

    fn run(&self, target: &LogitFunctional, stop: usize) -> Result<MultiplierStack> {
        let last = self.net.layers().len();
        let mut m = Multipliers::Single(target.weights().to_vec());
        let mut layers = vec![self.record(last, &m)];
        for k in (stop..last).rev() {
            m = self.back(k, &m)?;
            layers.push(self.record(k, &m));
        }
        Ok(MultiplierStack {
            target_delta: target.eval(self.actual.logits()) - target.eval(self.reference.logits()),
            layers,
        })
    }
}

/// Full multiplier stack from the logits down to `layer`.
pub fn deeplift_multipliers(
    net: &Network,
    reference: &Tensor,
    input: &Tensor,
    layer: &str,
    target: TargetSpec,
    rules: DeepLiftRules,
) -> Result<MultiplierStack> {
    let stop = net.position(layer)?;
    let actual = net.forward(input)?;
    let reference = net.forward(reference)?;
    let f = target.resolve(actual.logits())?;
    Sweep {
        net,
        reference: &reference,
        actual: &actual,
        rules,
    }
    .run(&f, stop)
}

pub fn deeplift_attribute(
    net: &Network,
    reference: &Tensor,
    input: &Tensor,
    layer: &str,
    target: TargetSpec,
    rules: DeepLiftRules,
) -> Result<AttributionResult> {
    Ok(deeplift_multi(net, reference, input, layer, &[target], rules)?.remove(0))
}

/// DeepLIFT scores for several targets: two forward passes in total and one
/// multiplier sweep per target.
pub fn deeplift_multi(
    net: &Network,
    reference: &Tensor,
    input: &Tensor,
    layer: &str,
    targets: &[TargetSpec],
    rules: DeepLiftRules,
) -> Result<Vec<AttributionResult>> {
    net.check_input(reference)?;
    net.check_input(input)?;
    let stop = net.position(layer)?;
    let probe = Probe::new(net);
    let actual = probe.forward(input)?;
    let reference = probe.forward(reference)?;
    let fns = resolve_all(targets, actual.logits())?;
    let sweep = Sweep {
        net,
        reference: &reference,
        actual: &actual,
        rules,
    };
    let mut stacks = Vec::with_capacity(fns.len());
    for f in &fns {
        probe.count_multiplier_pass();
        stacks.push(sweep.run(f, stop)?);
    }
    let meta = probe.meta(0, fns.len());
    Ok(fns
        .iter()
        .zip(stacks)
        .map(|(f, mut stack)| {
            let bottom = stack.layers.pop().expect("stack holds the requested layer");
            finish(
                Method::DeepLift(rules),
                layer,
                f,
                bottom.contributions,
                stack.target_delta,
                meta.clone(),
            )
        })
        .collect())
}
