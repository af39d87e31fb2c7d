//! A minimal sequential network with forward tracing, reverse-mode
//! gradients to any layer, forward-mode tangents, training and a binary
//! model format.

pub(crate) mod kernels;
mod model_io;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::target::LogitFunctional;
use crate::tensor::Tensor;
use kernels::{ConvGeometry, PoolGeometry};

pub use model_io::{load_model, save_model, MODEL_MAGIC};
pub use train::{accuracy, train_sgd, TrainConfig, TrainReport};

/// Name under which the network input can be addressed as a layer.
pub const INPUT_LAYER: &str = "input";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// `weight` is out × in, `bias` has length out.
    Dense {
        weight: Tensor,
        bias: Tensor,
    },
    /// `kernels` is out_ch × in_ch × kh × kw over height × width × channel images.
    Conv2d {
        kernels: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
}

impl Layer {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::Flatten => "flatten",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. }
        )
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::LayerShape {
            layer: self.name.clone(),
            expected,
            actual: input.to_vec(),
        };
        let invalid = |reason: &str| Error::InvalidLayer {
            layer: self.name.clone(),
            reason: reason.to_string(),
        };
        match &self.kind {
            LayerKind::Dense { weight, bias } => {
                let &[out, inp] = weight.shape() else {
                    return Err(invalid("dense weight must be rank 2"));
                };
                if bias.shape() != [out] {
                    return Err(invalid("dense bias length differs from weight rows"));
                }
                if input != [inp] {
                    return Err(mismatch(vec![inp]));
                }
                Ok(vec![out])
            }
            LayerKind::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            } => {
                let &[oc, ic, kh, kw] = kernels.shape() else {
                    return Err(invalid("conv kernels must be rank 4"));
                };
                if bias.shape() != [oc] {
                    return Err(invalid("conv bias length differs from output channels"));
                }
                if *stride == 0 {
                    return Err(invalid("stride must be positive"));
                }
                let &[h, w, c] = input else {
                    return Err(mismatch(vec![kh, kw, ic]));
                };
                if c != ic || h + 2 * padding < kh || w + 2 * padding < kw {
                    return Err(mismatch(vec![h.max(kh), w.max(kw), ic]));
                }
                Ok(vec![
                    (h + 2 * padding - kh) / stride + 1,
                    (w + 2 * padding - kw) / stride + 1,
                    oc,
                ])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::MaxPool { window, stride } => {
                if *window == 0 || *stride == 0 {
                    return Err(invalid("pool window and stride must be positive"));
                }
                let &[h, w, c] = input else {
                    return Err(mismatch(vec![*window, *window, 1]));
                };
                if h < *window || w < *window {
                    return Err(mismatch(vec![*window, *window, c]));
                }
                Ok(vec![
                    (h - window) / stride + 1,
                    (w - window) / stride + 1,
                    c,
                ])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match &self.kind {
            LayerKind::Dense { weight, bias } => weight.len() + bias.len(),
            LayerKind::Conv2d { kernels, bias, .. } => kernels.len() + bias.len(),
            _ => 0,
        }
    }
}

pub(crate) fn conv_geometry(layer: &Layer, input: &[usize], output: &[usize]) -> ConvGeometry {
    let LayerKind::Conv2d {
        kernels,
        stride,
        padding,
        ..
    } = &layer.kind
    else {
        unreachable!("conv geometry requested for {}", layer.kind_name())
    };
    let k = kernels.shape();
    ConvGeometry {
        in_h: input[0],
        in_w: input[1],
        in_c: input[2],
        out_h: output[0],
        out_w: output[1],
        out_c: output[2],
        kh: k[2],
        kw: k[3],
        stride: *stride,
        padding: *padding,
    }
}

pub(crate) fn pool_geometry(layer: &Layer, input: &[usize], output: &[usize]) -> PoolGeometry {
    let LayerKind::MaxPool { window, stride } = layer.kind else {
        unreachable!("pool geometry requested for {}", layer.kind_name())
    };
    PoolGeometry {
        in_w: input[1],
        channels: input[2],
        out_h: output[0],
        out_w: output[1],
        window,
        stride,
    }
}

/// Ordered layers plus the activation shape at every position. Position 0
/// is the input, position `k` is the output of layer `k - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
}

/// Activations recorded at every position for a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    activations: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("trace holds the input")
    }

    pub fn at(&self, position: usize) -> &Tensor {
        &self.activations[position]
    }

    pub fn activation(&self, net: &Network, layer: &str) -> Result<&Tensor> {
        Ok(self.at(net.position(layer)?))
    }

    pub fn positions(&self) -> usize {
        self.activations.len()
    }
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "input shape {input_shape:?} must have positive extents"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for layer in &layers {
            if layer.name == INPUT_LAYER || !seen.insert(layer.name.as_str()) {
                return Err(Error::DuplicateLayer(layer.name.clone()));
            }
        }
        let mut shapes = vec![input_shape.clone()];
        for layer in &layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        if shapes.last().unwrap().len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "final layer must produce a logit vector, got shape {:?}",
                shapes.last().unwrap()
            )));
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().unwrap()[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Activation shape at a position (0 = input).
    pub fn shape_at(&self, position: usize) -> &[usize] {
        &self.shapes[position]
    }

    pub fn position(&self, layer: &str) -> Result<usize> {
        if layer == INPUT_LAYER {
            return Ok(0);
        }
        self.layers
            .iter()
            .position(|l| l.name == layer)
            .map(|i| i + 1)
            .ok_or_else(|| Error::UnknownLayer {
                name: layer.to_string(),
                available: self.layer_names().join(", "),
            })
    }

    /// `input` followed by every layer name, in order.
    pub fn layer_names(&self) -> Vec<String> {
        std::iter::once(INPUT_LAYER.to_string())
            .chain(self.layers.iter().map(|l| l.name.clone()))
            .collect()
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                left: self.input_shape.clone(),
                right: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardTrace> {
        self.forward_clamped(x, 0, &[])
    }

    /// Forward pass in which, once position `position` has been computed,
    /// the listed flat entries are overwritten before later layers run.
    pub fn forward_clamped(
        &self,
        x: &Tensor,
        position: usize,
        clamp: &[(usize, f64)],
    ) -> Result<ForwardTrace> {
        self.check_input(x)?;
        if position > self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "position {position} beyond {} layers",
                self.layers.len()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut current = x.clone();
        for k in 0..=self.layers.len() {
            if k == position && !clamp.is_empty() {
                let size = current.len();
                let data = current.data_mut();
                for &(index, value) in clamp {
                    *data
                        .get_mut(index)
                        .ok_or(Error::NeuronOutOfRange { index, size })? = value;
                }
            }
            if k == self.layers.len() {
                activations.push(current);
                break;
            }
            let next = self.layer_forward(k, &current);
            activations.push(current);
            current = next;
        }
        Ok(ForwardTrace { activations })
    }

    /// Applies layer `k` to an activation at position `k`.
    pub(crate) fn layer_forward(&self, k: usize, input: &Tensor) -> Tensor {
        let layer = &self.layers[k];
        let out_shape = self.shapes[k + 1].clone();
        let data = match &layer.kind {
            LayerKind::Dense { weight, bias } => {
                kernels::matvec(weight.data(), input.data(), Some(bias.data()), out_shape[0])
            }
            LayerKind::Conv2d { kernels, bias, .. } => {
                let g = conv_geometry(layer, &self.shapes[k], &out_shape);
                let packed = kernels::repack_kernels(kernels.data(), &g);
                kernels::conv_forward(input.data(), &packed, Some(bias.data()), &g)
            }
            LayerKind::Relu => input.data().iter().map(|&v| v.max(0.0)).collect(),
            LayerKind::MaxPool { .. } => {
                let g = pool_geometry(layer, &self.shapes[k], &out_shape);
                kernels::pool_argmax(input.data(), &g)
                    .into_iter()
                    .map(|i| input.data()[i])
                    .collect()
            }
            LayerKind::Flatten => input.data().to_vec(),
        };
        Tensor::from_parts(out_shape, data)
    }

    /// Pulls a cotangent at position `k + 1` back through layer `k`.
    pub(crate) fn layer_backward(
        &self,
        k: usize,
        trace: &ForwardTrace,
        grad_out: &[f64],
    ) -> Vec<f64> {
        let layer = &self.layers[k];
        let input = trace.at(k).data();
        match &layer.kind {
            LayerKind::Dense { weight, .. } => {
                kernels::matvec_transposed(weight.data(), grad_out, input.len())
            }
            LayerKind::Conv2d { kernels, .. } => {
                let g = conv_geometry(layer, &self.shapes[k], &self.shapes[k + 1]);
                let packed = kernels::repack_kernels(kernels.data(), &g);
                kernels::conv_backward_input(grad_out, &packed, &g)
            }
            // subgradient at exactly zero is zero
            LayerKind::Relu => input
                .iter()
                .zip(grad_out)
                .map(|(&a, &g)| if a > 0.0 { g } else { 0.0 })
                .collect(),
            LayerKind::MaxPool { .. } => {
                let g = pool_geometry(layer, &self.shapes[k], &self.shapes[k + 1]);
                let mut grad_in = vec![0.0; input.len()];
                for (src, &go) in kernels::pool_argmax(input, &g).into_iter().zip(grad_out) {
                    grad_in[src] += go;
                }
                grad_in
            }
            LayerKind::Flatten => grad_out.to_vec(),
        }
    }

    /// Reverse-mode gradient of `cotangent · logits` with respect to the
    /// activation at `position`.
    pub fn backward(&self, trace: &ForwardTrace, cotangent: &[f64], position: usize) -> Tensor {
        assert_eq!(cotangent.len(), self.output_dim(), "cotangent length");
        let mut grad = cotangent.to_vec();
        for k in (position..self.layers.len()).rev() {
            grad = self.layer_backward(k, trace, &grad);
        }
        Tensor::from_parts(self.shapes[position].clone(), grad)
    }

    /// Gradient of a scalar logit functional with respect to a named layer's
    /// activations, using the ReLU gates and pooling winners recorded in
    /// `trace`.
    pub fn grad_wrt_layer(
        &self,
        trace: &ForwardTrace,
        layer: &str,
        target: &LogitFunctional,
    ) -> Result<Tensor> {
        let position = self.position(layer)?;
        target.check_dim(self.output_dim())?;
        Ok(self.backward(trace, target.weights(), position))
    }

    /// Forward-mode directional derivative: pushes `tangent` (shaped like the
    /// activation at `from`) through layers `from..to`, linearised at `trace`.
    pub fn jvp(&self, trace: &ForwardTrace, from: usize, tangent: &[f64], to: usize) -> Tensor {
        assert!(from <= to && to <= self.layers.len());
        let mut t = tangent.to_vec();
        for k in from..to {
            let layer = &self.layers[k];
            let input = trace.at(k).data();
            t = match &layer.kind {
                LayerKind::Dense { weight, .. } => {
                    kernels::matvec(weight.data(), &t, None, self.shapes[k + 1][0])
                }
                LayerKind::Conv2d { kernels, .. } => {
                    let g = conv_geometry(layer, &self.shapes[k], &self.shapes[k + 1]);
                    let packed = kernels::repack_kernels(kernels.data(), &g);
                    kernels::conv_forward(&t, &packed, None, &g)
                }
                LayerKind::Relu => input
                    .iter()
                    .zip(&t)
                    .map(|(&a, &d)| if a > 0.0 { d } else { 0.0 })
                    .collect(),
                LayerKind::MaxPool { .. } => {
                    let g = pool_geometry(layer, &self.shapes[k], &self.shapes[k + 1]);
                    kernels::pool_argmax(input, &g)
                        .into_iter()
                        .map(|i| t[i])
                        .collect()
                }
                LayerKind::Flatten => t,
            };
        }
        Tensor::from_parts(self.shapes[to].clone(), t)
    }
}

/// Uniform initialisation on ±sqrt(6 / fan_in): each weight is
/// `(2u - 1) * bound` with `u` from `Rng::gen::<f64>()`, drawn in row-major
/// order. Biases start at zero.
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| (2.0 * rng.gen::<f64>() - 1.0) * bound)
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

impl LayerKind {
    pub fn dense(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        LayerKind::Dense {
            weight: kaiming_uniform(&[outputs, inputs], inputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        LayerKind::Conv2d {
            kernels: kaiming_uniform(
                &[out_channels, in_channels, kernel, kernel],
                in_channels * kernel * kernel,
                rng,
            ),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            padding,
        }
    }
}

/// The experiment network for 28×28×1 images:
/// conv1 (3×3×8) → relu1 → conv2 (3×3×16) → relu2 → pool (2×2/2) → flatten
/// → dense1 (32) → relu3 → logits (10).
pub fn reference_architecture(seed: u64) -> Network {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        Layer::new("conv1", LayerKind::conv2d(1, 8, 3, 1, 0, &mut rng)),
        Layer::new("relu1", LayerKind::Relu),
        Layer::new("conv2", LayerKind::conv2d(8, 16, 3, 1, 0, &mut rng)),
        Layer::new("relu2", LayerKind::Relu),
        Layer::new(
            "pool",
            LayerKind::MaxPool {
                window: 2,
                stride: 2,
            },
        ),
        Layer::new("flatten", LayerKind::Flatten),
        Layer::new("dense1", LayerKind::dense(12 * 12 * 16, 32, &mut rng)),
        Layer::new("relu3", LayerKind::Relu),
        Layer::new("logits", LayerKind::dense(32, 10, &mut rng)),
    ];
    Network::new(vec![28, 28, 1], layers).expect("reference architecture is consistent")
}

/// Fully connected ReLU network `widths[0] → … → widths[last]`, with
/// hidden layers named `dense{i}` / `relu{i}` and the output layer `logits`.
/// Biases are drawn uniformly from ±`bias_scale` so kinks land inside the
/// input range.
pub fn random_mlp(widths: &[usize], bias_scale: f64, seed: u64) -> Network {
    use rand::SeedableRng;
    assert!(widths.len() >= 2, "an MLP needs input and output widths");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let hidden = widths.len() - 2;
    for (i, pair) in widths.windows(2).enumerate() {
        let mut kind = LayerKind::dense(pair[0], pair[1], &mut rng);
        if let LayerKind::Dense { bias, .. } = &mut kind {
            for b in bias.data_mut() {
                *b = (2.0 * rng.gen::<f64>() - 1.0) * bias_scale;
            }
        }
        if i < hidden {
            layers.push(Layer::new(format!("dense{}", i + 1), kind));
            layers.push(Layer::new(format!("relu{}", i + 1), LayerKind::Relu));
        } else {
            layers.push(Layer::new("logits", kind));
        }
    }
    Network::new(vec![widths[0]], layers).expect("mlp widths compose")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(w: &[f64], out: usize, inp: usize, b: &[f64]) -> LayerKind {
        LayerKind::Dense {
            weight: Tensor::new(vec![out, inp], w.to_vec()).unwrap(),
            bias: Tensor::vector(b.to_vec()),
        }
    }

    fn sum_target(n: usize) -> LogitFunctional {
        LogitFunctional::new(vec![1.0; n])
    }

    #[test]
    fn identity_dense_forward() {
        let net = Network::new(
            vec![2],
            vec![Layer::new(
                "id",
                dense(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0.0, 0.0]),
            )],
        )
        .unwrap();
        let trace = net.forward(&Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert_eq!(trace.logits().data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_forward_and_gate() {
        let net = Network::new(vec![2], vec![Layer::new("r", LayerKind::Relu)]).unwrap();
        let trace = net.forward(&Tensor::vector(vec![-1.0, 3.0])).unwrap();
        assert_eq!(trace.logits().data(), &[0.0, 3.0]);
        let g = net
            .grad_wrt_layer(&trace, INPUT_LAYER, &sum_target(2))
            .unwrap();
        assert_eq!(g.data(), &[0.0, 1.0]);
    }

    #[test]
    fn conv_window_sums() {
        let net = Network::new(
            vec![3, 3, 1],
            vec![
                Layer::new(
                    "c",
                    LayerKind::Conv2d {
                        kernels: Tensor::filled(&[1, 1, 2, 2], 1.0),
                        bias: Tensor::zeros(&[1]),
                        stride: 1,
                        padding: 0,
                    },
                ),
                Layer::new("f", LayerKind::Flatten),
            ],
        )
        .unwrap();
        let pixels = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let x = Tensor::new(vec![3, 3, 1], pixels.to_vec()).unwrap();
        let out = net.forward(&x).unwrap();
        let mut expected = Vec::new();
        for y in 0..2 {
            for xx in 0..2 {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += pixels[(y + dy) * 3 + xx + dx];
                    }
                }
                expected.push(s);
            }
        }
        assert_eq!(out.logits().data(), expected.as_slice());
    }

    #[test]
    fn linear_gradient_is_constant() {
        let net = Network::new(
            vec![3],
            vec![
                Layer::new(
                    "y",
                    dense(&[1.0, -2.0, 0.5, 3.0, 0.0, 1.0], 2, 3, &[0.1, -0.4]),
                ),
                Layer::new("out", dense(&[2.0, -1.5], 1, 2, &[0.3])),
            ],
        )
        .unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -5.0, 2.0], [7.0, 3.0, -1.0]] {
            let trace = net.forward(&Tensor::vector(x.to_vec())).unwrap();
            let g = net.grad_wrt_layer(&trace, "y", &sum_target(1)).unwrap();
            assert_eq!(g.data(), &[2.0, -1.5]);
        }
    }

    #[test]
    fn rejects_bad_structure() {
        let dup = Network::new(
            vec![2],
            vec![
                Layer::new("a", LayerKind::Relu),
                Layer::new("a", LayerKind::Relu),
            ],
        );
        assert!(matches!(dup, Err(Error::DuplicateLayer(_))));
        let reserved = Network::new(vec![2], vec![Layer::new(INPUT_LAYER, LayerKind::Relu)]);
        assert!(matches!(reserved, Err(Error::DuplicateLayer(_))));
        let bad = Network::new(
            vec![5],
            vec![Layer::new("d", dense(&[0.0; 12], 3, 4, &[0.0; 3]))],
        );
        match bad {
            Err(Error::LayerShape {
                expected, actual, ..
            }) => {
                assert_eq!(expected, vec![4]);
                assert_eq!(actual, vec![5]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_layer_lists_names() {
        let net = random_mlp(&[4, 3, 2], 0.5, 1);
        let err = net.position("nope").unwrap_err().to_string();
        assert!(err.contains("dense1") && err.contains("logits"), "{err}");
    }

    #[test]
    fn wrong_target_dim_rejected() {
        let net = random_mlp(&[4, 3, 2], 0.5, 1);
        let trace = net.forward(&Tensor::vector(vec![0.1; 4])).unwrap();
        assert!(net
            .grad_wrt_layer(&trace, "dense1", &sum_target(3))
            .is_err());
    }

    #[test]
    fn clamping_overwrites_and_propagates() {
        let net = random_mlp(&[4, 5, 3], 0.5, 9);
        let x = Tensor::vector(vec![0.3, -0.2, 0.9, 0.4]);
        let plain = net.forward(&x).unwrap();
        assert_eq!(net.forward_clamped(&x, 2, &[]).unwrap(), plain);
        let clamped = net.forward_clamped(&x, 2, &[(1, 7.0)]).unwrap();
        assert_eq!(clamped.at(2).data()[1], 7.0);
        assert_eq!(clamped.at(1), plain.at(1));
        assert!(matches!(
            net.forward_clamped(&x, 2, &[(5, 0.0)]),
            Err(Error::NeuronOutOfRange { index: 5, size: 5 })
        ));
    }

    #[test]
    fn reference_architecture_shapes() {
        let net = reference_architecture(0);
        assert_eq!(net.shape_at(net.position("conv1").unwrap()), &[26, 26, 8]);
        assert_eq!(net.shape_at(net.position("conv2").unwrap()), &[24, 24, 16]);
        assert_eq!(net.shape_at(net.position("pool").unwrap()), &[12, 12, 16]);
        assert_eq!(net.output_dim(), 10);
    }
}
