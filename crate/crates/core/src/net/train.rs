use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{conv_geometry, kernels, ForwardTrace, LayerKind, Network};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Rescales the batch-mean gradient to at most this global L2 norm.
    /// `f64::INFINITY` disables clipping.
    pub max_grad_norm: f64,
    /// The learning rate decays linearly over all batches to this fraction
    /// of its initial value.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
            max_grad_norm: 5.0,
            final_lr_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
}

/// Parameter gradients for one layer; empty for parameter-free layers.
#[derive(Debug, Clone)]
struct LayerGrad {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

/// Minibatch SGD on softmax cross-entropy over the logits. The shuffle
/// stream is ChaCha8 seeded from `config.seed`, and per-example gradients
/// are summed in example order, so results do not depend on the worker
/// count.
pub fn train_sgd(
    net: &Network,
    data: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and non-negative, got {}",
            config.learning_rate
        )));
    }
    if config.max_grad_norm.is_nan() || config.max_grad_norm <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gradient norm bound must be positive, got {}",
            config.max_grad_norm
        )));
    }
    if !(0.0..=1.0).contains(&config.final_lr_fraction) {
        return Err(Error::InvalidArgument(format!(
            "final learning-rate fraction must lie in [0, 1], got {}",
            config.final_lr_fraction
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    data.check_shape(net.input_shape())?;
    let mut net = net.clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let batches_per_epoch = data.len().div_ceil(config.batch_size);
    let total_batches = (config.epochs * batches_per_epoch).max(1) as f64;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let per_example: Vec<(f64, Vec<LayerGrad>)> = idx
                .par_iter()
                .map(|&i| example_gradient(&net, &data.inputs()[i], data.labels()[i]))
                .collect::<Result<_>>()?;
            let mut sum = zero_grads(&net);
            let mut loss = 0.0;
            for (l, grads) in &per_example {
                loss += l;
                for (acc, g) in sum.iter_mut().zip(grads) {
                    add_into(&mut acc.weight, &g.weight);
                    add_into(&mut acc.bias, &g.bias);
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss });
            }
            total += loss;
            let norm = sum
                .iter()
                .flat_map(|g| g.weight.iter().chain(&g.bias))
                .map(|d| d * d)
                .sum::<f64>()
                .sqrt()
                / idx.len() as f64;
            let clip = if norm > config.max_grad_norm {
                config.max_grad_norm / norm
            } else {
                1.0
            };
            let progress = (epoch * batches_per_epoch + batch) as f64 / total_batches;
            let lr = config.learning_rate * (1.0 - (1.0 - config.final_lr_fraction) * progress);
            let step = clip * lr / idx.len() as f64;
            apply_step(&mut net, &sum, step);
        }
        epoch_loss.push(total / data.len() as f64);
    }
    let train_accuracy = accuracy(&net, data)?;
    Ok((
        net,
        TrainReport {
            epoch_loss,
            train_accuracy,
        },
    ))
}

/// Fraction of examples whose top logit (lowest index on ties) matches the label.
pub fn accuracy(net: &Network, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let hits: Vec<bool> = data
        .inputs()
        .par_iter()
        .zip(data.labels())
        .map(|(x, &y)| Ok(net.forward(x)?.logits().argmax()? == y))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn zero_grads(net: &Network) -> Vec<LayerGrad> {
    net.layers()
        .iter()
        .map(|l| match &l.kind {
            LayerKind::Dense { weight, bias } => LayerGrad {
                weight: vec![0.0; weight.len()],
                bias: vec![0.0; bias.len()],
            },
            LayerKind::Conv2d { kernels, bias, .. } => LayerGrad {
                weight: vec![0.0; kernels.len()],
                bias: vec![0.0; bias.len()],
            },
            _ => LayerGrad {
                weight: Vec::new(),
                bias: Vec::new(),
            },
        })
        .collect()
}

fn example_gradient(
    net: &Network,
    x: &crate::tensor::Tensor,
    label: usize,
) -> Result<(f64, Vec<LayerGrad>)> {
    let trace = net.forward(x)?;
    let (loss, dlogits) = softmax_cross_entropy(trace.logits().data(), label);
    Ok((loss, parameter_gradients(net, &trace, &dlogits)))
}

/// Returns the loss and its gradient with respect to the logits.
fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

fn parameter_gradients(net: &Network, trace: &ForwardTrace, cotangent: &[f64]) -> Vec<LayerGrad> {
    let mut grads = zero_grads(net);
    let mut grad = cotangent.to_vec();
    for k in (0..net.layers().len()).rev() {
        let layer = &net.layers()[k];
        let input = trace.at(k).data();
        match &layer.kind {
            LayerKind::Dense { .. } => {
                let g = &mut grads[k];
                for (row, &gr) in g.weight.chunks_exact_mut(input.len()).zip(&grad) {
                    for (w, &x) in row.iter_mut().zip(input) {
                        *w += gr * x;
                    }
                }
                add_into(&mut g.bias, &grad);
            }
            LayerKind::Conv2d { .. } => {
                let geo = conv_geometry(layer, net.shape_at(k), net.shape_at(k + 1));
                let mut packed = vec![0.0; grads[k].weight.len()];
                kernels::conv_backward_params(input, &grad, &geo, &mut packed, &mut grads[k].bias);
                grads[k].weight = kernels::unpack_kernels(&packed, &geo);
            }
            _ => {}
        }
        if k > 0 {
            grad = net.layer_backward(k, trace, &grad);
        }
    }
    grads
}

fn apply_step(net: &mut Network, grads: &[LayerGrad], step: f64) {
    for (layer, g) in net.layers_mut().iter_mut().zip(grads) {
        let (w, b) = match &mut layer.kind {
            LayerKind::Dense { weight, bias } => (weight, bias),
            LayerKind::Conv2d { kernels, bias, .. } => (kernels, bias),
            _ => continue,
        };
        for (p, d) in w.data_mut().iter_mut().zip(&g.weight) {
            *p -= step * d;
        }
        for (p, d) in b.data_mut().iter_mut().zip(&g.bias) {
            *p -= step * d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{random_mlp, reference_architecture};
    use crate::tensor::Tensor;

    /// Central differences of the loss with respect to every parameter of a
    /// small conv net.
    #[test]
    fn parameter_gradients_match_finite_differences() {
        use crate::net::{Layer, LayerKind};
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let net = Network::new(
            vec![5, 5, 2],
            vec![
                Layer::new("c", LayerKind::conv2d(2, 3, 3, 1, 1, &mut rng)),
                Layer::new("r", LayerKind::Relu),
                Layer::new("f", LayerKind::Flatten),
                Layer::new("d", LayerKind::dense(75, 4, &mut rng)),
            ],
        )
        .unwrap();
        let x = Tensor::new(
            vec![5, 5, 2],
            (0..50)
                .map(|i| ((i * 37 % 17) as f64 - 8.0) / 7.0)
                .collect(),
        )
        .unwrap();
        let label = 2;
        let (_, analytic) = example_gradient(&net, &x, label).unwrap();
        let loss = |n: &Network| {
            let t = n.forward(&x).unwrap();
            softmax_cross_entropy(t.logits().data(), label).0
        };
        let h = 1e-6;
        for (k, g) in analytic.iter().enumerate() {
            for which in 0..2 {
                let count = if which == 0 {
                    g.weight.len()
                } else {
                    g.bias.len()
                };
                for i in 0..count {
                    let bump = |delta: f64| {
                        let mut n = net.clone();
                        let (w, b) = match &mut n.layers_mut()[k].kind {
                            LayerKind::Dense { weight, bias } => (weight, bias),
                            LayerKind::Conv2d { kernels, bias, .. } => (kernels, bias),
                            _ => unreachable!(),
                        };
                        let t = if which == 0 { w } else { b };
                        t.data_mut()[i] += delta;
                        loss(&n)
                    };
                    let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                    let exact = if which == 0 { g.weight[i] } else { g.bias[i] };
                    assert!(
                        (numeric - exact).abs() <= 1e-6 * (1.0 + exact.abs()),
                        "layer {k} param {i}: {numeric} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let net = reference_architecture(3);
        let data = LabeledDataset::new(
            vec![28, 28, 1],
            (0..4)
                .map(|i| Tensor::filled(&[28, 28, 1], i as f64 / 4.0))
                .collect(),
            vec![0, 1, 2, 3],
            10,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            batch_size: 2,
            seed: 1,
            ..TrainConfig::default()
        };
        let (trained, _) = train_sgd(&net, &data, &cfg).unwrap();
        assert_eq!(trained, net);
    }

    #[test]
    fn divergence_is_reported() {
        let net = random_mlp(&[2, 4, 2], 0.1, 2);
        let data = crate::data::synth_blobs(1, 20, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            batch_size: 4,
            seed: 1,
            max_grad_norm: f64::INFINITY,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_sgd(&net, &data, &cfg),
            Err(Error::Diverged { .. })
        ));
    }
}
