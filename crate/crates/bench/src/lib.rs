//! Shared fixtures for the criterion benchmarks.

use nattr_core::net::reference_architecture;
use nattr_core::{Network, Tensor};

/// Untrained reference network and a deterministic image pair
/// (black reference, smooth gradient input).
pub fn fixture() -> (Network, Tensor, Tensor) {
    let net = reference_architecture(0);
    let shape = net.input_shape().to_vec();
    let n: usize = shape.iter().product();
    let input = (0..n).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    let input = Tensor::new(shape.clone(), input).expect("shape matches");
    (net, Tensor::zeros(&shape), input)
}
