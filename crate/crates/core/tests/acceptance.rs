//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Criteria that need MNIST read it from `NATTR_MNIST_DIR`, falling back
//! to `data/mnist` at the workspace root. The run exits 0 after reporting
//! so the rest of the workspace suite still runs; set
//! `NATTR_ACCEPTANCE_STRICT=1` to exit 1 on any FAIL line.

use std::path::PathBuf;
use std::time::Instant;

use nattr_core::ablation::{run_ablation_study, AblationSpec};
use nattr_core::attribution::DEFAULT_SIZE_CAP;
use nattr_core::data::{load_mnist, LabeledDataset, MnistSplit};
use nattr_core::net::{accuracy, reference_architecture, train_sgd, TrainConfig};
use nattr_core::timing::{linear_fit, time_method};
use nattr_core::verify::{
    conductance_agreement, equivalence_suite, finite_difference_suite, linear_collapse_suite,
    mlp_case, VerifyConfig, MLP_HIDDEN_LAYERS,
};
use nattr_core::{DeepLiftRules, MethodSpec, Network, PathSpec, Rule, TargetSpec, Tensor};
use rayon::prelude::*;

type Outcome = Result<(bool, String), String>;

fn mnist_dir() -> PathBuf {
    std::env::var_os("NATTR_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Mnist {
    train: LabeledDataset,
    test: LabeledDataset,
}

fn load() -> Result<Mnist, String> {
    let dir = mnist_dir();
    let train =
        load_mnist(&dir, MnistSplit::Train).map_err(|e| format!("MNIST unavailable: {e}"))?;
    let test = load_mnist(&dir, MnistSplit::Test).map_err(|e| format!("MNIST unavailable: {e}"))?;
    Ok(Mnist { train, test })
}

fn nig(steps: usize) -> MethodSpec {
    MethodSpec::Nig {
        steps,
        rule: Rule::RightRiemann,
    }
}

fn zero_like(net: &Network) -> Tensor {
    Tensor::zeros(net.input_shape())
}

fn equivalence() -> Outcome {
    let cfg = VerifyConfig::default();
    let per_net: Vec<f64> = (0..cfg.networks)
        .into_par_iter()
        .map(|i| {
            let case = mlp_case(cfg.seed, i);
            let path = PathSpec::new(
                case.reference.clone(),
                case.input.clone(),
                cfg.steps,
                Rule::RightRiemann,
            )?;
            let mut worst: f64 = 0.0;
            for layer in MLP_HIDDEN_LAYERS {
                let a = conductance_agreement(
                    &case.net,
                    &path,
                    layer,
                    TargetSpec::TopLogitMinusMean,
                    DEFAULT_SIZE_CAP,
                    false,
                )?;
                worst = worst.max(a.worst_relative);
            }
            Ok(worst)
        })
        .collect::<nattr_core::Result<_>>()
        .map_err(err)?;
    let worst = per_net.iter().copied().fold(0.0, f64::max);
    let within = per_net.iter().filter(|&&w| w <= 1e-4).count();
    let suite = equivalence_suite(&cfg).map_err(err)?;
    let extra: Vec<String> = suite
        .iter()
        .map(|o| format!("{} {:.3e} (tol {:.0e})", o.name, o.worst_error, o.tolerance))
        .collect();
    Ok((
        worst <= 1e-4,
        format!(
            "worst per-neuron relative error {worst:.3e} over all hidden layers (tol 1e-4, floor 1e-6); \
             {within}/{} networks within tolerance; {}",
            cfg.networks,
            extra.join("; ")
        ),
    ))
}

fn completeness(net: &Network, test: &LabeledDataset) -> Outcome {
    let images = &test.inputs()[..100];
    let reference = zero_like(net);
    let target = [TargetSpec::TopLogitMinusMean];
    let mut parts = Vec::new();
    let mut passed = true;
    for layer in ["conv1", "conv2"] {
        let rows: Vec<[f64; 4]> = images
            .par_iter()
            .map(|x| {
                let r = |m: MethodSpec| -> nattr_core::Result<f64> {
                    Ok(m.attribute(net, &reference, x, layer, &target)?
                        .remove(0)
                        .relative_residual())
                };
                Ok([
                    r(nig(500))?,
                    r(MethodSpec::DeepLift {
                        rules: DeepLiftRules::DefaultMixed,
                    })?,
                    r(MethodSpec::DeepLift {
                        rules: DeepLiftRules::RescaleAll,
                    })?,
                    // informational only: the default rule decides pass/fail
                    r(MethodSpec::Nig {
                        steps: 500,
                        rule: Rule::Trapezoid,
                    })?,
                ])
            })
            .collect::<nattr_core::Result<_>>()
            .map_err(err)?;
        let nig_ok = rows.iter().filter(|r| r[0] <= 1e-3).count();
        let trapezoid_ok = rows.iter().filter(|r| r[3] <= 1e-3).count();
        let deeplift_worst = rows.iter().map(|r| r[1].max(r[2])).fold(0.0, f64::max);
        passed &= nig_ok >= 95 && deeplift_worst <= 1e-8;
        parts.push(format!(
            "{layer}: NIG n=500 within 1e-3 on {nig_ok}/100 (need 95; trapezoid rule {trapezoid_ok}/100), \
             DeepLIFT worst {deeplift_worst:.2e} (tol 1e-8)"
        ));
    }
    Ok((passed, parts.join("; ")))
}

fn convergence(net: &Network, test: &LabeledDataset) -> Outcome {
    let images = &test.inputs()[..20];
    let reference = zero_like(net);
    let steps = [10usize, 50, 250, 1250];
    let mut parts = Vec::new();
    let mut passed = true;
    for layer in ["conv1", "conv2"] {
        let means: Vec<f64> = steps
            .iter()
            .map(|&n| {
                let total: f64 = images
                    .par_iter()
                    .map(|x| {
                        Ok(nig(n)
                            .attribute(net, &reference, x, layer, &[TargetSpec::TopLogitMinusMean])?
                            .remove(0)
                            .completeness_residual
                            .abs())
                    })
                    .collect::<nattr_core::Result<Vec<f64>>>()?
                    .iter()
                    .sum();
                Ok(total / images.len() as f64)
            })
            .collect::<nattr_core::Result<_>>()
            .map_err(err)?;
        passed &= means.windows(2).all(|w| w[1] <= 1.1 * w[0]);
        let shown: Vec<String> = steps
            .iter()
            .zip(&means)
            .map(|(n, m)| format!("n={n}: {m:.3e}"))
            .collect();
        parts.push(format!("{layer} mean |residual| {}", shown.join(", ")));
    }
    Ok((
        passed,
        format!("{} (each step ≤ 1.1× the previous)", parts.join("; ")),
    ))
}

fn finite_differences() -> Outcome {
    let outcomes = finite_difference_suite(&VerifyConfig::default()).map_err(err)?;
    let kinds = ["conv2d", "dense", "flatten", "maxpool", "relu"];
    let covered = kinds.iter().all(|k| {
        outcomes
            .iter()
            .any(|o| o.name == format!("finite-difference-{k}"))
    });
    let shown: Vec<String> = outcomes
        .iter()
        .map(|o| {
            format!(
                "{} {:.2e}",
                o.name.trim_start_matches("finite-difference-"),
                o.worst_error
            )
        })
        .collect();
    Ok((
        covered && outcomes.iter().all(|o| o.passed),
        format!(
            "worst relative error per kind: {} (tol 1e-6, h=1e-5)",
            shown.join(", ")
        ),
    ))
}

fn linear_collapse() -> Outcome {
    let outcomes = linear_collapse_suite(&VerifyConfig::default()).map_err(err)?;
    let worst = outcomes.iter().map(|o| o.worst_error).fold(0.0, f64::max);
    Ok((
        outcomes.iter().all(|o| o.passed),
        format!("worst disagreement {worst:.3e} over 20 linear networks (tol 1e-9)"),
    ))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn rescale_correlation(net: &Network, test: &LabeledDataset) -> Outcome {
    let reference = zero_like(net);
    let target = [TargetSpec::TopLogitMinusMean];
    let rs: Vec<f64> = test.inputs()[..50]
        .par_iter()
        .map(|x| {
            let a = MethodSpec::DeepLift {
                rules: DeepLiftRules::RescaleAll,
            }
            .attribute(net, &reference, x, "conv2", &target)?
            .remove(0);
            let b = nig(100)
                .attribute(net, &reference, x, "conv2", &target)?
                .remove(0);
            Ok(pearson(a.scores.data(), b.scores.data()))
        })
        .collect::<nattr_core::Result<_>>()
        .map_err(err)?;
    let mean = rs.iter().sum::<f64>() / rs.len() as f64;
    let low = rs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        mean >= 0.95,
        format!("mean Pearson r {mean:.4} over 50 images at conv2 (need 0.95); lowest {low:.4}"),
    ))
}

fn ablation(net: &Network, test: &LabeledDataset) -> Outcome {
    let examples: Vec<(usize, Tensor)> = test.inputs()[..200].iter().cloned().enumerate().collect();
    let methods = [
        nig(10),
        nig(100),
        MethodSpec::DeepLift {
            rules: DeepLiftRules::DefaultMixed,
        },
        MethodSpec::DeepLift {
            rules: DeepLiftRules::RescaleAll,
        },
        MethodSpec::GradXDiff,
    ];
    let mut parts = Vec::new();
    let mut passed = true;
    for layer in ["conv1", "conv2"] {
        let spec = AblationSpec {
            fraction: 0.10,
            ..AblationSpec::new(layer)
        };
        let report =
            run_ablation_study(net, &examples, &zero_like(net), &spec, &methods).map_err(err)?;
        let mae = |m: &MethodSpec| report.mae(&m.label()).unwrap_or(f64::NAN);
        let (n10, n100, dl, rs, gxd) = (
            mae(&methods[0]),
            mae(&methods[1]),
            mae(&methods[2]),
            mae(&methods[3]),
            mae(&methods[4]),
        );
        let steps_gap = (n10 - n100).abs() / n100;
        let gxd_gap = (gxd - n100).abs() / n100;
        let ok = report.failures.is_empty() && steps_gap <= 0.05 && gxd_gap <= 0.05;
        passed &= ok;
        parts.push(format!(
            "{layer}: failures {}, MAE nig-n10 {n10:.4}, nig-n100 {n100:.4}, deeplift-default {dl:.4}, \
             deeplift-rescale {rs:.4}, gradxdiff {gxd:.4}; |n10−n100| {:.1}% and |gxd−n100| {:.1}% of nig-n100 (need ≤5%)",
            report.failures.len(),
            100.0 * steps_gap,
            100.0 * gxd_gap
        ));
    }
    Ok((passed, parts.join("; ")))
}

fn cost_linearity(net: &Network, images: &[Tensor]) -> Outcome {
    let reference = zero_like(net);
    let steps = [10usize, 20, 50, 100];
    let target = TargetSpec::TopLogitMinusMean;
    let mut counts_ok = true;
    let mut times = Vec::new();
    for &n in &steps {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = time_method(net, &reference, images, "conv2", &nig(n), target, false)
                .map_err(err)?;
            let m = &t.per_example;
            counts_ok &= (m.forward_passes, m.gradient_passes) == (n + 1, n);
            best = best.min(t.wall_time_secs);
        }
        times.push(best);
    }
    // DeepLIFT has no step parameter, so its counts cannot depend on n
    let mut deeplift_counts = Vec::new();
    for rules in [DeepLiftRules::DefaultMixed, DeepLiftRules::RescaleAll] {
        let r = MethodSpec::DeepLift { rules }
            .attribute(net, &reference, &images[0], "conv2", &[target])
            .map_err(err)?
            .remove(0);
        deeplift_counts.push((
            r.meta.forward_passes,
            r.meta.gradient_passes,
            r.meta.multiplier_passes,
        ));
    }
    let deeplift_ok = deeplift_counts.iter().all(|c| *c == (2, 0, 1));
    let xs: Vec<f64> = steps.iter().map(|&n| n as f64).collect();
    let fit = linear_fit(&xs, &times).map_err(err)?;
    Ok((
        counts_ok && deeplift_ok && fit.r_squared >= 0.98,
        format!(
            "NIG counts exact: {counts_ok}; DeepLIFT counts constant (2 forwards, 1 multiplier pass): {deeplift_ok}; \
             wall time ≈ {:.3e}·n + {:.3e} s, R² {:.4} (need 0.98)",
            fit.slope, fit.intercept, fit.r_squared
        ),
    ))
}

fn train(mnist: &Mnist) -> Result<(Network, bool, String), String> {
    let train = mnist.train.slice(0, 5000);
    let test = mnist.test.slice(0, 1000);
    let started = Instant::now();
    let (net, _) =
        train_sgd(&reference_architecture(0), &train, &TrainConfig::default()).map_err(err)?;
    let secs = started.elapsed().as_secs_f64();
    let acc = accuracy(&net, &test).map_err(err)?;
    Ok((
        net,
        acc >= 0.90 && secs <= 300.0,
        format!("test accuracy {acc:.4} (need 0.90) after {secs:.1}s of training (limit 300s)"),
    ))
}

fn main() {
    let names = [
        "hidden-layer IG matches brute-force conductance",
        "completeness on the MNIST model",
        "Riemann convergence",
        "gradient correctness",
        "linear collapse",
        "Rescale vs IG correlation",
        "ablation study",
        "cost and runtime linearity",
        "trainer sanity",
    ];
    let mut results: Vec<Outcome> = Vec::new();
    let stage = |k: usize| eprintln!("acceptance: running criterion {k}");

    stage(1);
    results.push(equivalence());
    let mnist = load();
    stage(9);
    let trained = mnist.as_ref().map_err(Clone::clone).and_then(train);
    let model = trained.as_ref().ok().map(|t| &t.0);
    let with_model = |k: usize, f: &dyn Fn(&Network, &LabeledDataset) -> Outcome| -> Outcome {
        stage(k);
        match (&mnist, model) {
            (Ok(m), Some(net)) => f(net, &m.test),
            (Err(e), _) => Err(e.clone()),
            (_, None) => Err("no trained model".into()),
        }
    };
    results.push(with_model(2, &completeness));
    results.push(with_model(3, &convergence));
    stage(4);
    results.push(finite_differences());
    stage(5);
    results.push(linear_collapse());
    results.push(with_model(6, &rescale_correlation));
    results.push(with_model(7, &ablation));
    stage(8);
    results.push(match (&mnist, model) {
        (Ok(m), Some(net)) => cost_linearity(net, &m.test.inputs()[..4]),
        _ => {
            let net = reference_architecture(0);
            let images = vec![Tensor::filled(net.input_shape(), 0.5)];
            cost_linearity(&net, &images)
        }
    });
    results.push(trained.map(|(_, ok, detail)| (ok, detail)));

    let mut failed = Vec::new();
    for (k, (name, r)) in names.iter().zip(&results).enumerate() {
        let (ok, detail) = match r {
            Ok((ok, d)) => (*ok, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed.push(k + 1);
        }
        println!(
            "criterion {} {}: {name}: {detail}",
            k + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "acceptance: {}/{} passed; failing: {failed:?}",
        names.len() - failed.len(),
        names.len()
    );
    if !failed.is_empty() && std::env::var_os("NATTR_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
