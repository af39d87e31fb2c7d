use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SIGMA: f64 = 0.5;
const OFFSET: f64 = 2.0;

/// Two Gaussian blobs in `dims` dimensions with means `±2·u`, `u` the unit
/// diagonal vector, and standard deviation 0.5. Even examples belong to
/// class 0 (mean `−2·u`), odd examples to class 1.
pub fn synth_blobs(seed: u64, count: usize, dims: usize) -> Result<LabeledDataset> {
    if !count.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "blob count must be even, got {count}"
        )));
    }
    if dims == 0 {
        return Err(Error::InvalidArgument(
            "blob dimension must be positive".into(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SIGMA).expect("valid sigma");
    let component = OFFSET / (dims as f64).sqrt();
    let mut inputs = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let mean = if label == 0 { -component } else { component };
        let x = (0..dims).map(|_| mean + noise.sample(&mut rng)).collect();
        inputs.push(Tensor::vector(x));
        labels.push(label);
    }
    LabeledDataset::new(vec![dims], inputs, labels, 2)
}
