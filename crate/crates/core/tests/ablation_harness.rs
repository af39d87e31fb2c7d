use nattr_core::ablation::{run_ablation_study, AblationSpec};
use nattr_core::attribution::neuron_integrated_gradients;
use nattr_core::data::{report_rows, write_report, Format};
use nattr_core::net::random_mlp;
use nattr_core::verify::linear_network;
use nattr_core::{DeepLiftRules, MethodSpec, Network, PathSpec, Rule, TargetSpec, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn examples(net: &Network, count: usize, seed: u64) -> Vec<(usize, Tensor)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = net.input_shape().iter().product();
    (0..count)
        .map(|i| {
            let x = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (i, Tensor::new(net.input_shape().to_vec(), x).unwrap())
        })
        .collect()
}

fn all_methods(steps: usize) -> Vec<MethodSpec> {
    vec![
        MethodSpec::Nig {
            steps,
            rule: Rule::RightRiemann,
        },
        MethodSpec::DeepLift {
            rules: DeepLiftRules::DefaultMixed,
        },
        MethodSpec::DeepLift {
            rules: DeepLiftRules::RescaleAll,
        },
        MethodSpec::GradXDiff,
    ]
}

/// With every neuron clamped, the actual change is −Δtarget and the
/// prediction is −Σ scores, so the error is the completeness residual.
#[test]
fn full_ablation_error_is_completeness_residual() {
    let net = random_mlp(&[6, 10, 8, 4], 0.4, 3);
    let reference = Tensor::zeros(&[6]);
    let ex = examples(&net, 8, 1);
    let spec = AblationSpec {
        fraction: 1.0,
        ..AblationSpec::new("relu1")
    };
    let methods = [MethodSpec::Nig {
        steps: 500,
        rule: Rule::RightRiemann,
    }];
    let report = run_ablation_study(&net, &ex, &reference, &spec, &methods).unwrap();
    assert!(report.failures.is_empty());
    for (record, (_, x)) in report.records.iter().zip(&ex) {
        let path = PathSpec::new(reference.clone(), x.clone(), 500, Rule::RightRiemann).unwrap();
        let direct =
            neuron_integrated_gradients(&net, &path, "relu1", TargetSpec::TopLogitMinusMean)
                .unwrap();
        let err = record.outcomes[0].abs_error;
        assert!(
            (err - direct.completeness_residual.abs()).abs() <= 1e-10,
            "{err} vs {}",
            direct.completeness_residual
        );
    }
}

#[test]
fn linear_network_predictions_are_exact() {
    for conv in [false, true] {
        let net = linear_network(8, conv);
        let n: usize = net.input_shape().iter().product();
        let reference = Tensor::new(net.input_shape().to_vec(), vec![0.1; n]).unwrap();
        let layer = if conv { "conv" } else { "hidden_a" };
        let spec = AblationSpec {
            fraction: 0.3,
            ..AblationSpec::new(layer)
        };
        let report = run_ablation_study(
            &net,
            &examples(&net, 5, 2),
            &reference,
            &spec,
            &all_methods(7),
        )
        .unwrap();
        for r in &report.records {
            for o in &r.outcomes {
                assert!(
                    o.abs_error <= 1e-10 * r.actual_delta.abs().max(1.0),
                    "{o:?}"
                );
            }
        }
    }
}

#[test]
fn raw_logit_target_uses_unnormalized_scores() {
    let net = linear_network(2, false);
    let spec = AblationSpec {
        fraction: 0.4,
        target: TargetSpec::Logit(1),
        ..AblationSpec::new("hidden_b")
    };
    let report = run_ablation_study(
        &net,
        &examples(&net, 3, 5),
        &Tensor::zeros(&[6]),
        &spec,
        &all_methods(4),
    )
    .unwrap();
    assert!(report.records.iter().all(|r| r.class == 1));
    assert!(report
        .records
        .iter()
        .flat_map(|r| &r.outcomes)
        .all(|o| o.abs_error < 1e-10));
}

#[test]
fn unknown_layer_is_an_error_and_bad_example_a_failure() {
    let net = random_mlp(&[3, 4, 3], 0.2, 0);
    let reference = Tensor::zeros(&[3]);
    let methods = all_methods(3);
    assert!(run_ablation_study(
        &net,
        &examples(&net, 2, 0),
        &reference,
        &AblationSpec::new("conv9"),
        &methods
    )
    .is_err());
    let mut ex = examples(&net, 2, 0);
    ex.push((2, Tensor::zeros(&[4])));
    let spec = AblationSpec {
        fraction: 0.5,
        ..AblationSpec::new("relu1")
    };
    let report = run_ablation_study(&net, &ex, &reference, &spec, &methods).unwrap();
    assert_eq!(report.records.len(), 2);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].example_id, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn aggregates_match_records(seed in 0u64..1000, fraction in 0.17f64..1.0) {
        let net = random_mlp(&[5, 9, 6, 3], 0.4, seed);
        let spec = AblationSpec { fraction, ..AblationSpec::new("dense2") };
        let report = run_ablation_study(&net, &examples(&net, 7, seed), &Tensor::zeros(&[5]), &spec, &all_methods(8)).unwrap();
        for agg in &report.aggregates {
            let errors = report.errors(&agg.method);
            let mae = errors.iter().sum::<f64>() / errors.len() as f64;
            prop_assert!((mae - agg.mae).abs() <= 1e-12);
            prop_assert_eq!(errors.len(), agg.count);
        }
        prop_assert_eq!(report.pairwise.len(), 6);
    }

    #[test]
    fn reruns_give_identical_bytes(seed in 0u64..1000) {
        let net = random_mlp(&[4, 8, 5, 3], 0.4, seed);
        let spec = AblationSpec { fraction: 0.25, ..AblationSpec::new("relu2") };
        let dir = tempfile::tempdir().unwrap();
        let mut files = Vec::new();
        for run in 0..2 {
            let report = run_ablation_study(&net, &examples(&net, 5, seed), &Tensor::zeros(&[4]), &spec, &all_methods(6)).unwrap();
            let path = dir.path().join(format!("r{run}.json"));
            write_report(&report_rows(&report), &path, Format::Json).unwrap();
            files.push(std::fs::read(&path).unwrap());
        }
        prop_assert_eq!(&files[0], &files[1]);
    }
}

#[test]
fn empty_selection_rejected_up_front() {
    let net = random_mlp(&[3, 4, 3], 0.2, 0);
    let spec = AblationSpec {
        fraction: 0.1,
        ..AblationSpec::new("relu1")
    };
    assert!(matches!(
        run_ablation_study(
            &net,
            &examples(&net, 2, 0),
            &Tensor::zeros(&[3]),
            &spec,
            &all_methods(2)
        ),
        Err(nattr_core::Error::EmptySelection { .. })
    ));
}
