use nattr_core::attribution::{
    deeplift_multipliers, grad_x_diff, integrated_gradients, neuron_integrated_gradients,
    total_conductance_direct,
};
use nattr_core::net::random_mlp;
use nattr_core::verify::{linear_collapse_error, linear_network, mixed_network, relative_error};
use nattr_core::{DeepLiftRules, Layer, LayerKind, Network, PathSpec, Rule, TargetSpec, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn dense(rows: usize, cols: usize, w: &[f64], b: &[f64]) -> LayerKind {
    LayerKind::Dense {
        weight: Tensor::new(vec![rows, cols], w.to_vec()).unwrap(),
        bias: Tensor::new(vec![rows], b.to_vec()).unwrap(),
    }
}

fn path(reference: Vec<f64>, input: Vec<f64>, steps: usize) -> PathSpec {
    PathSpec::new(
        Tensor::vector(reference),
        Tensor::vector(input),
        steps,
        Rule::RightRiemann,
    )
    .unwrap()
}

/// F = ReLU(y) − ReLU(y − 1) = min(y, 1) on y ≥ 0, with y = 5x.
fn saturating_net() -> Network {
    Network::new(
        vec![1],
        vec![
            Layer::new("y", dense(1, 1, &[5.0], &[0.0])),
            Layer::new("h", dense(2, 1, &[1.0, 1.0], &[0.0, -1.0])),
            Layer::new("r", LayerKind::Relu),
            Layer::new("out", dense(1, 2, &[1.0, -1.0], &[0.0])),
        ],
    )
    .unwrap()
}

#[test]
fn saturation_defeats_gradient_times_difference() {
    let net = saturating_net();
    let p = path(vec![0.0], vec![1.0], 1000);
    let gxd = grad_x_diff(&net, &p, "y", TargetSpec::Logit(0)).unwrap();
    assert_eq!(gxd.scores.data(), &[0.0]);
    let nig = neuron_integrated_gradients(&net, &p, "y", TargetSpec::Logit(0)).unwrap();
    // the integral of 1[y < 1] dy over y ∈ [0, 5]
    assert!(
        (nig.scores.data()[0] - 1.0).abs() < 1e-2,
        "{:?}",
        nig.scores
    );
    assert_eq!(nig.target_delta, 1.0);
}

fn small_case() -> (Network, PathSpec) {
    let net = random_mlp(&[4, 3, 2], 0.5, 42);
    (net, path(vec![0.0; 4], vec![0.8, -0.6, 0.9, 0.35], 2000))
}

/// Σ scores against F(x) − F(x′) computed by two plain forward passes.
#[test]
fn small_mlp_completeness() {
    let (net, p) = small_case();
    let f = |x: &Tensor| net.forward(x).unwrap().logits().data()[1];
    let delta = f(&p.input) - f(&p.reference);
    for layer in ["dense1", "relu1"] {
        let r = neuron_integrated_gradients(&net, &p, layer, TargetSpec::Logit(1)).unwrap();
        assert!(
            relative_error(r.scores.sum(), delta, 1e-6) <= 1e-4,
            "{layer}: {} vs {delta}",
            r.scores.sum()
        );
    }
}

#[test]
fn small_mlp_conductance_agrees() {
    let (net, p) = small_case();
    for layer in ["dense1", "relu1"] {
        let fast = neuron_integrated_gradients(&net, &p, layer, TargetSpec::Logit(1)).unwrap();
        let oracle = total_conductance_direct(&net, &p, layer, TargetSpec::Logit(1), 64).unwrap();
        for (a, b) in fast.scores.data().iter().zip(oracle.scores.data()) {
            assert!(relative_error(*a, *b, 1e-6) <= 1e-4, "{layer}: {a} vs {b}");
        }
    }
}

/// Mean completeness residual over 50 inputs shrinks (10% slack) as the
/// step count doubles.
#[test]
fn riemann_convergence() {
    let net = random_mlp(&[8, 16, 16, 10], 0.3, 9);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let inputs: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mean_residual = |steps| {
        inputs
            .iter()
            .map(|x| {
                let p = path(vec![0.0; 8], x.clone(), steps);
                neuron_integrated_gradients(&net, &p, "relu1", TargetSpec::TopLogitMinusMean)
                    .unwrap()
                    .completeness_residual
                    .abs()
            })
            .sum::<f64>()
            / inputs.len() as f64
    };
    for k in [10, 50, 250] {
        let (coarse, fine) = (mean_residual(k), mean_residual(2 * k));
        assert!(fine <= 1.1 * coarse, "n={k}: {coarse}, n={}: {fine}", 2 * k);
    }
}

#[test]
fn cost_counts_for_input_methods() {
    let net = random_mlp(&[3, 5, 2], 0.4, 1);
    let p = path(vec![0.0; 3], vec![0.4, 0.5, -0.2], 12);
    let ig = integrated_gradients(&net, &p, TargetSpec::Logit(0)).unwrap();
    assert_eq!((ig.meta.forward_passes, ig.meta.gradient_passes), (13, 12));
    let gxd = grad_x_diff(&net, &p, "relu1", TargetSpec::Logit(0)).unwrap();
    assert_eq!((gxd.meta.forward_passes, gxd.meta.gradient_passes), (2, 1));
}

fn random_input(net: &Network, seed: u64) -> Tensor {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = net.input_shape().iter().product();
    Tensor::new(
        net.input_shape().to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn input_layer_reduces_to_ig(seed in 0u64..10_000, steps in 1usize..60, trapezoid in any::<bool>()) {
        let net = random_mlp(&[5, 7, 4, 3], 0.4, seed);
        let rule = if trapezoid { Rule::Trapezoid } else { Rule::RightRiemann };
        let p = PathSpec::new(random_input(&net, seed + 1), random_input(&net, seed + 2), steps, rule).unwrap();
        let nig = neuron_integrated_gradients(&net, &p, "input", TargetSpec::TopLogitMinusMean).unwrap();
        let ig = integrated_gradients(&net, &p, TargetSpec::TopLogitMinusMean).unwrap();
        for (a, b) in nig.scores.data().iter().zip(ig.scores.data()) {
            prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn deeplift_conserves_at_every_layer(seed in 0u64..10_000, conv in any::<bool>(), reveal in any::<bool>()) {
        let net = if conv { mixed_network(seed) } else { random_mlp(&[6, 8, 5, 4], 0.5, seed) };
        let rules = if reveal { DeepLiftRules::DefaultMixed } else { DeepLiftRules::RescaleAll };
        let (x, r) = (random_input(&net, seed), random_input(&net, seed ^ 0xabc));
        let stack = deeplift_multipliers(&net, &r, &x, "input", TargetSpec::TopLogitMinusMean, rules).unwrap();
        prop_assert_eq!(stack.layers.len(), net.layers().len() + 1);
        prop_assert!(stack.worst_conservation_error() <= 1e-8 * stack.target_delta.abs().max(1.0));
    }

    #[test]
    fn linear_networks_collapse(seed in 0u64..10_000, conv in any::<bool>()) {
        let err = linear_collapse_error(&linear_network(seed, conv), seed).unwrap();
        prop_assert!(err <= 1e-9, "{}", err);
    }
}
