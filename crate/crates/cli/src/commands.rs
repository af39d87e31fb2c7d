use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use nattr_core::ablation::{
    run_ablation_study, AblationReport, AblationSpec, MethodAggregate, PairwiseTest,
};
use nattr_core::attribution::{MethodSpec, ALL_METHODS};
use nattr_core::data::{
    load_mnist, report_rows, score_rows, write_bench, write_file_atomic, write_report,
    write_scores, BenchRow, Format, MnistSplit,
};
use nattr_core::net::{
    accuracy, load_model, reference_architecture, save_model, train_sgd, TrainConfig,
};
use nattr_core::timing::{linear_fit, time_method, LinearFit};
use nattr_core::verify::{run_verify, VerifyConfig};
use nattr_core::{Network, Rule, TargetSpec, Tensor};

use crate::args::{
    AblateArgs, AttributeArgs, BenchArgs, Command, TargetArg, TrainArgs, VerifyArgs,
};
use crate::{NumericFailure, Usage};

#[derive(Serialize)]
pub struct Echo<'a> {
    pub version: &'static str,
    pub threads: Option<usize>,
    pub command: &'a Command,
}

fn prepare_out(dir: &Path, echo: &Echo<'_>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config-echo.json"), echo)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file_atomic(path, &bytes)?;
    Ok(())
}

fn load_network(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    load_model(&bytes).with_context(|| format!("loading model {}", path.display()))
}

fn test_images(
    data: &Path,
    start: usize,
    count: usize,
    net: &Network,
) -> Result<Vec<(usize, Tensor)>> {
    let test = load_mnist(data, MnistSplit::Test)
        .with_context(|| format!("loading test images from {}", data.display()))?;
    test.check_shape(net.input_shape())?;
    if start + count > test.len() {
        return Err(Usage(format!(
            "requested images {start}..{} but the test split holds {}",
            start + count,
            test.len()
        ))
        .into());
    }
    Ok(test
        .slice(start, count)
        .inputs()
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, x)| (start + i, x))
        .collect())
}

/// Expands `all` and parses every name, so an unknown name fails before
/// any work starts.
fn method_specs(
    names: &[String],
    steps: &[usize],
    rule: Rule,
    size_cap: usize,
    hidden_only: bool,
) -> Result<Vec<MethodSpec>> {
    let mut expanded: Vec<String> = Vec::new();
    for name in names {
        if name == "all" {
            expanded.extend(
                ALL_METHODS
                    .iter()
                    .filter(|m| !(hidden_only && **m == "ig"))
                    .map(|m| m.to_string()),
            );
        } else {
            expanded.push(name.clone());
        }
    }
    let mut specs = Vec::new();
    for name in &expanded {
        if hidden_only && name == "ig" {
            return Err(
                Usage("ig attributes to the input; use nig for hidden layers".into()).into(),
            );
        }
        for &n in steps {
            let spec = match MethodSpec::parse(name, n, rule).map_err(|e| Usage(e.to_string()))? {
                MethodSpec::Conductance { steps, rule, .. } => MethodSpec::Conductance {
                    steps,
                    rule,
                    size_cap,
                },
                other => other,
            };
            if !specs.contains(&spec) {
                specs.push(spec);
            }
        }
    }
    Ok(specs)
}

fn as_steps(steps: &[u64]) -> Vec<usize> {
    steps.iter().map(|&n| n as usize).collect()
}

pub fn train(a: &TrainArgs, echo: &Echo<'_>) -> Result<()> {
    prepare_out(&a.out.out, echo)?;
    let train = load_mnist(&a.data, MnistSplit::Train)
        .with_context(|| format!("loading training images from {}", a.data.display()))?
        .slice(0, a.train_count);
    let test = load_mnist(&a.data, MnistSplit::Test)
        .with_context(|| format!("loading test images from {}", a.data.display()))?
        .slice(0, a.test_count);
    let net = reference_architecture(a.seed);
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        seed: a.seed,
        max_grad_norm: a.max_grad_norm,
        final_lr_fraction: a.final_lr_fraction,
    };
    let started = Instant::now();
    let (trained, report) = train_sgd(&net, &train, &cfg)?;
    let seconds = started.elapsed().as_secs_f64();
    let test_accuracy = accuracy(&trained, &test)?;
    let model_path = a.out.out.join("model.nattr");
    write_file_atomic(&model_path, &save_model(&trained))?;
    #[derive(Serialize)]
    struct Metrics<'a> {
        train_count: usize,
        test_count: usize,
        epoch_loss: &'a [f64],
        train_accuracy: f64,
        test_accuracy: f64,
        train_seconds: f64,
    }
    write_json(
        &a.out.out.join("metrics.json"),
        &Metrics {
            train_count: train.len(),
            test_count: test.len(),
            epoch_loss: &report.epoch_loss,
            train_accuracy: report.train_accuracy,
            test_accuracy,
            train_seconds: seconds,
        },
    )?;
    println!(
        "trained {} epochs on {} images in {seconds:.1}s: train accuracy {:.4}, test accuracy {test_accuracy:.4}",
        a.epochs,
        train.len(),
        report.train_accuracy
    );
    println!("model written to {}", model_path.display());
    Ok(())
}

fn targets(target: TargetArg, classes: usize) -> Vec<TargetSpec> {
    match target {
        TargetArg::TopMinusMean => vec![TargetSpec::TopLogitMinusMean],
        TargetArg::All => (0..classes).map(TargetSpec::Logit).collect(),
    }
}

pub fn attribute(a: &AttributeArgs, echo: &Echo<'_>) -> Result<()> {
    let net = load_network(&a.model)?;
    net.position(&a.layer).map_err(|e| Usage(e.to_string()))?;
    let methods = method_specs(
        &a.method,
        &[a.steps as usize],
        a.rule.into(),
        a.size_cap,
        false,
    )?;
    prepare_out(&a.out.out, echo)?;
    let examples = test_images(&a.data.data, a.data.start, a.data.examples, &net)?;
    let reference = Tensor::zeros(net.input_shape());
    let targets = targets(a.target, net.output_dim());
    let run =
        |(id, x): &(usize, Tensor)| -> Result<Vec<(String, f64, Vec<nattr_core::data::ScoreRow>)>> {
            let mut out = Vec::new();
            for m in &methods {
                for r in m.attribute(&net, &reference, x, &a.layer, &targets)? {
                    out.push((
                        m.label(),
                        r.relative_residual(),
                        score_rows(*id, &m.label(), &r)?,
                    ));
                }
            }
            Ok(out)
        };
    let per_example: Vec<_> = if a.parallel_examples {
        examples.par_iter().map(run).collect::<Result<_>>()?
    } else {
        examples.iter().map(run).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    let mut residuals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, residual, r) in per_example.into_iter().flatten() {
        residuals.entry(label).or_default().push(residual);
        rows.extend(r);
    }
    let path = a.out.out.join("scores.csv");
    write_scores(&rows, &path, Format::Csv)?;
    for (label, r) in &residuals {
        let worst = r.iter().copied().fold(0.0, f64::max);
        println!("{label:>20}: worst relative completeness residual {worst:.3e}");
    }
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct LayerSummary {
    layer: String,
    examples: usize,
    failures: Vec<nattr_core::ablation::ExampleFailure>,
    aggregates: Vec<MethodAggregate>,
    pairwise: Vec<PairwiseTest>,
}

pub fn ablate(a: &AblateArgs, echo: &Echo<'_>) -> Result<()> {
    let net = load_network(&a.model)?;
    for layer in &a.layer {
        net.position(layer).map_err(|e| Usage(e.to_string()))?;
    }
    let methods = method_specs(
        &a.method,
        &as_steps(&a.steps),
        a.rule.into(),
        usize::MAX,
        true,
    )?;
    prepare_out(&a.out.out, echo)?;
    let examples = test_images(&a.data.data, a.data.start, a.data.examples, &net)?;
    let reference = Tensor::zeros(net.input_shape());
    let mut reports: Vec<AblationReport> = Vec::new();
    for layer in &a.layer {
        let spec = AblationSpec {
            fraction: a.fraction,
            ..AblationSpec::new(layer.clone())
        };
        let report = run_ablation_study(&net, &examples, &reference, &spec, &methods)?;
        reports.push(report);
    }
    let rows: Vec<_> = reports.iter().flat_map(report_rows).collect();
    write_report(&rows, a.out.out.join("report.json"), Format::Json)?;
    write_report(&rows, a.out.out.join("report.csv"), Format::Csv)?;
    let summary: Vec<LayerSummary> = reports
        .iter()
        .map(|r| LayerSummary {
            layer: r.spec.layer.clone(),
            examples: examples.len(),
            failures: r.failures.clone(),
            aggregates: r.aggregates.clone(),
            pairwise: r.pairwise.clone(),
        })
        .collect();
    write_json(&a.out.out.join("summary.json"), &summary)?;
    println!(
        "{:<8} {:<20} {:>14} {:>6}",
        "layer", "method", "MAE", "count"
    );
    for s in &summary {
        for agg in &s.aggregates {
            println!(
                "{:<8} {:<20} {:>14.6e} {:>6}",
                s.layer, agg.method, agg.mae, agg.count
            );
        }
    }
    let failures: usize = summary.iter().map(|s| s.failures.len()).sum();
    if failures > 0 {
        for s in &summary {
            for f in &s.failures {
                eprintln!(
                    "{} example {} ({}): {}",
                    s.layer, f.example_id, f.method, f.message
                );
            }
        }
        return Err(NumericFailure(format!("{failures} example(s) failed")).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchFit {
    method: String,
    fit: LinearFit,
}

fn bench_inputs(a: &BenchArgs, net: &Network) -> Result<Vec<Tensor>> {
    if let Some(data) = &a.data {
        return Ok(test_images(data, 0, a.examples, net)?
            .into_iter()
            .map(|(_, x)| x)
            .collect());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let size: usize = net.input_shape().iter().product();
    (0..a.examples)
        .map(|_| {
            Tensor::new(
                net.input_shape().to_vec(),
                (0..size).map(|_| rng.gen::<f64>()).collect(),
            )
            .map_err(Into::into)
        })
        .collect()
}

pub fn bench(a: &BenchArgs, echo: &Echo<'_>) -> Result<()> {
    let net = match &a.model {
        Some(path) => load_network(path)?,
        None => reference_architecture(a.seed),
    };
    net.position(&a.layer).map_err(|e| Usage(e.to_string()))?;
    if a.examples == 0 || a.repeats == 0 {
        return Err(Usage("--examples and --repeats must be at least 1".into()).into());
    }
    let steps = as_steps(&a.steps);
    let rule: Rule = a.rule.into();
    // validate names once up front
    method_specs(&a.method, &[1], rule, usize::MAX, false)?;
    prepare_out(&a.out.out, echo)?;
    let inputs = bench_inputs(a, &net)?;
    let reference = Tensor::zeros(net.input_shape());
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut fits = Vec::new();
    println!(
        "{:<18} {:>6} {:>9} {:>9} {:>11} {:>12}",
        "method", "n", "forwards", "gradients", "multipliers", "seconds"
    );
    for name in &a.method {
        let mut times = Vec::new();
        for &n in &steps {
            let spec =
                method_specs(std::slice::from_ref(name), &[n], rule, usize::MAX, false)?.remove(0);
            // the fastest repeat is the least disturbed by other load
            let mut t = time_method(
                &net,
                &reference,
                &inputs,
                &a.layer,
                &spec,
                TargetSpec::TopLogitMinusMean,
                a.parallel_examples,
            )?;
            for _ in 1..a.repeats {
                let again = time_method(
                    &net,
                    &reference,
                    &inputs,
                    &a.layer,
                    &spec,
                    TargetSpec::TopLogitMinusMean,
                    a.parallel_examples,
                )?;
                t.wall_time_secs = t.wall_time_secs.min(again.wall_time_secs);
            }
            let m = &t.per_example;
            let expected = match spec {
                MethodSpec::Nig { steps, rule } | MethodSpec::Ig { steps, rule } => Some((
                    steps + 1,
                    if rule == Rule::Trapezoid {
                        steps + 1
                    } else {
                        steps
                    },
                    0,
                )),
                MethodSpec::DeepLift { .. } => Some((2, 0, 1)),
                MethodSpec::GradXDiff => Some((2, 1, 0)),
                MethodSpec::Conductance { .. } => None,
            };
            let actual = (m.forward_passes, m.gradient_passes, m.multiplier_passes);
            if let Some(e) = expected {
                if e != actual {
                    violations.push(format!(
                        "{} n={n}: expected {e:?}, counted {actual:?}",
                        name
                    ));
                }
            }
            println!(
                "{:<18} {:>6} {:>9} {:>9} {:>11} {:>12.4}",
                name, n, m.forward_passes, m.gradient_passes, m.multiplier_passes, t.wall_time_secs
            );
            times.push(t.wall_time_secs);
            rows.push(BenchRow {
                method: name.clone(),
                steps: n,
                examples: t.examples,
                forward_passes: m.forward_passes,
                gradient_passes: m.gradient_passes,
                multiplier_passes: m.multiplier_passes,
                wall_time_secs: t.wall_time_secs,
            });
        }
        if steps.len() >= 2 && matches!(name.as_str(), "nig" | "ig") {
            let xs: Vec<f64> = steps.iter().map(|&n| n as f64).collect();
            let fit = linear_fit(&xs, &times)?;
            println!(
                "{name}: time ≈ {:.4e}·n + {:.4e} s, R² = {:.4}",
                fit.slope, fit.intercept, fit.r_squared
            );
            fits.push(BenchFit {
                method: name.clone(),
                fit,
            });
        }
    }
    write_bench(&rows, a.out.out.join("bench.csv"))?;
    write_json(&a.out.out.join("bench-fit.json"), &fits)?;
    if !violations.is_empty() {
        return Err(
            NumericFailure(format!("cost contract violated: {}", violations.join("; "))).into(),
        );
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs, echo: &Echo<'_>) -> Result<()> {
    prepare_out(&a.out.out, echo)?;
    let cfg = VerifyConfig {
        networks: a.networks,
        seed: a.seed,
        steps: a.steps as usize,
        size_cap: a.size_cap,
        inject_fault: a.inject_fault,
    };
    let summary = run_verify(&cfg)?;
    for o in &summary.outcomes {
        println!(
            "{} {:<28} worst {:.3e} (tolerance {:.0e}, {} checks) {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.worst_error,
            o.tolerance,
            o.checks,
            o.note
        );
    }
    write_json(&a.out.out.join("verify.json"), &summary)?;
    let failed: Vec<&str> = summary
        .outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.name.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(NumericFailure(format!("properties failed: {}", failed.join(", "))).into());
    }
    Ok(())
}
