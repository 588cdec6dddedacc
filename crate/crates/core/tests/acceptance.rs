//! End-to-end acceptance run: nine criteria in order, one PASS/FAIL line each.
//! Criterion 7 is reported only and never fails the run.

use std::ops::ControlFlow;
use std::sync::Arc;
use std::time::{Duration, Instant};

use approx::abs_diff_eq;
use canet::data::{
    build_normalized_adjacency, imu_components, joint_components, synthesize, window_count,
    window_starts, ComponentSpec, Dataset, Modality, Registry, Segment, SyntheticSpec, Window,
    WindowSpec, BODY_EDGES, BODY_VERTICES, MFCC_NAME, MFCC_WIDTH,
};
use canet::fusion::{majority_vote, Vote, VotePanel};
use canet::gradsuite::{run_suite, CASES};
use canet::models::{load_model, save_model, Model, ModelConfig, ModelKind};
use canet::numeric::Tensor;
use canet::train::{evaluate, fit, fit_prepared, mean_loss, prepare, PreparedData, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Name, whether it gates the run, and the check.
type Criterion = (&'static str, bool, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 gradient suite", true, gradient_suite),
        ("2 attention normalization", true, attention_normalization),
        ("3 structural oracles", true, structural_oracles),
        ("4 voting oracle", true, voting_oracle),
        ("5 synthetic CANet", true, synthetic_canet),
        ("6 synthetic GCN-CANet", true, synthetic_gcn_canet),
        (
            "7 attention localization (soft)",
            false,
            attention_localization,
        ),
        (
            "8 determinism and round trip",
            true,
            determinism_and_round_trip,
        ),
        ("9 overfit sanity", true, overfit_sanity),
    ];
    // Optional criterion numbers on the command line select a subset.
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = Vec::new();
    for (name, hard, run) in criteria {
        let number = name.split(' ').next().unwrap_or_default();
        if !only.is_empty() && !only.iter().any(|o| o == number) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let verdict = match (out.passed, hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "MISS",
        };
        println!(
            "criterion {name}: {verdict} ({:.1} s) {}",
            start.elapsed().as_secs_f64(),
            out.detail
        );
        if hard && !out.passed {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        println!("acceptance failed: {}", failed.join(", "));
        std::process::exit(1);
    }
    println!("acceptance passed");
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let seeds = [11, 23, 37, 41, 59];
    let entries = match run_suite(&seeds) {
        Ok(e) => e,
        Err(e) => return outcome(false, format!("suite error: {e}")),
    };
    let elapsed = start.elapsed();
    let worst = entries
        .iter()
        .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
        .expect("suite is non-empty");
    let all = entries
        .iter()
        .all(|e| e.report.passed && e.report.max_rel_error < 1e-4);
    outcome(
        all && entries.len() == CASES.len() * seeds.len() && elapsed < Duration::from_secs(60),
        format!(
            "{} checks, worst {:.2e} in {} seed {}, {:.1} s",
            entries.len(),
            worst.report.max_rel_error,
            worst.case,
            worst.seed,
            elapsed.as_secs_f64()
        ),
    )
}

fn random_window(registry: &Registry, frames: usize, rng: &mut ChaCha8Rng) -> Window {
    let width = registry.total_width();
    let data = (0..frames * width)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let frames = Tensor::new(vec![frames, width], data).unwrap();
    Window::whole(Arc::new(
        Segment::new("r", 0, 50.0, frames, registry).unwrap(),
    ))
}

fn attention_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut skeleton = joint_components();
    skeleton.extend(imu_components().into_iter().take(2));
    let skeleton = Registry::new(skeleton).unwrap();
    let (mut worst_t, mut worst_b) = (0.0f64, 0.0f64);
    for pass in 0..1000 {
        let (kind, registry) = if pass % 5 == 4 {
            (ModelKind::GcnCanet, skeleton.clone())
        } else {
            let c = rng.random_range(1..=6);
            let specs = (0..c)
                .map(|i| {
                    ComponentSpec::new(format!("c{i}"), rng.random_range(1..=5), Modality::Other)
                })
                .collect();
            (ModelKind::Canet, Registry::new(specs).unwrap())
        };
        let frames = rng.random_range(2..=24);
        let config = ModelConfig {
            hidden: rng.random_range(2..=8),
            ..ModelConfig::default()
        };
        let model = Model::new(kind, &registry, frames, &config, rng.random()).unwrap();
        let window = random_window(&registry, frames, &mut rng);
        let att = model.predict(&window).unwrap().attention;
        worst_t = worst_t.max(att.temporal_sum_error());
        worst_b = worst_b.max(att.component_sum_error());
    }
    outcome(
        worst_t <= 1e-12 && worst_b <= 1e-12,
        format!("1000 passes, worst temporal {worst_t:.1e}, component {worst_b:.1e}"),
    )
}

fn brute_force_starts(total: usize, length: usize, stride: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0;
    while s + length <= total {
        starts.push(s);
        s += stride;
    }
    starts
}

fn dense_normalized_adjacency(edges: &[(usize, usize)], n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j) in edges {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[i][j] / d[i].sqrt() / d[j].sqrt();
        }
    }
    out
}

fn structural_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let length = WindowSpec::default().length(50.0).unwrap();
    let mut mismatches = 0;
    for _ in 0..500 {
        let total = rng.random_range(0..2000);
        let stride = rng.random_range(1..200);
        let brute = brute_force_starts(total, length, stride);
        if window_count(total, length, stride) != brute.len()
            || window_starts(total, length, stride) != brute
        {
            mismatches += 1;
        }
    }

    let a_hat = build_normalized_adjacency(&BODY_EDGES, BODY_VERTICES).unwrap();
    let dense = dense_normalized_adjacency(&BODY_EDGES, BODY_VERTICES);
    let mut worst = 0.0f64;
    for (i, row) in dense.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            worst = worst.max((a_hat.get(i, j) - v).abs());
        }
    }
    let spot01 = a_hat.get(0, 1);
    let spot11 = a_hat.get(1, 1);
    outcome(
        mismatches == 0
            && worst <= 1e-12
            && abs_diff_eq!(spot01, 0.28868, epsilon = 1e-5)
            && spot11 == 0.5,
        format!(
            "{mismatches}/500 window mismatches, Â oracle diff {worst:.1e}, Â[0][1]={spot01:.6}, Â[1][1]={spot11}"
        ),
    )
}

fn voting_oracle() -> Outcome {
    let mut cases = 0;
    let mut wrong = 0;
    for voters in [3usize, 5] {
        for pattern in 0u32..1 << voters {
            let votes = (0..voters)
                .map(|v| {
                    let class = (pattern >> v & 1) as usize;
                    let p = if class == 1 { 0.8 } else { 0.2 };
                    Vote::new(format!("v{v}"), vec![1.0 - p, p])
                })
                .collect();
            let ones = pattern.count_ones() as usize;
            let expected = usize::from(ones * 2 > voters);
            let got = majority_vote(&VotePanel::new(votes).unwrap());
            cases += 1;
            if got != expected {
                wrong += 1;
            }
        }
    }
    outcome(
        cases == 40 && wrong == 0,
        format!("{cases} patterns, {wrong} disagreements"),
    )
}

/// 6 IMU triplets and the MFCC vector; only `left_accelerometer` carries the class.
fn canet_data(amplitude: f64) -> Dataset {
    let mut components = imu_components();
    components.push(ComponentSpec::new(
        MFCC_NAME,
        MFCC_WIDTH,
        Modality::AudioFeatures,
    ));
    synthesize(&SyntheticSpec {
        registry: Registry::new(components).unwrap(),
        informative_component: "left_accelerometer".into(),
        amplitude,
        noise_std: 1.0,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

/// Train until test accuracy reaches `target` or the epoch budget runs out.
fn train_to(config: &TrainConfig, data: &PreparedData, target: f64) -> (Model, Option<f64>, usize) {
    let mut reached = None;
    let (model, history) = fit_prepared(config, data, |r| match r.test_accuracy {
        Some(a) if a >= target => {
            reached = Some(a);
            ControlFlow::Break(())
        }
        _ => ControlFlow::Continue(()),
    })
    .unwrap();
    let last = history
        .final_metrics
        .as_ref()
        .map(|m| m.accuracy)
        .filter(|_| reached.is_some());
    (model, last, history.epochs.len())
}

fn synthetic_canet() -> Outcome {
    let start = Instant::now();
    let dataset = canet_data(3.0);
    let config = TrainConfig::default();
    let data = prepare(&config, &dataset).unwrap();
    let windows = data.train.len() + data.test.len();
    let split = (data.train_segments.len(), data.test_segments.len());
    let (_, reached, epochs) = train_to(&config, &data, 0.90);
    let elapsed = start.elapsed();

    // Control: same pipeline with no class signal, short fixed budget.
    let control_config = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let control_data = prepare(&control_config, &canet_data(0.0)).unwrap();
    let (_, control_history) =
        fit_prepared(
            &control_config,
            &control_data,
            |_| ControlFlow::Continue(()),
        )
        .unwrap();
    let control = control_history.final_metrics.unwrap().accuracy;

    outcome(
        windows == 1976
            && split == (130, 22)
            && reached.is_some_and(|a| a >= 0.90)
            && epochs <= 50
            && elapsed < Duration::from_secs(300)
            && (0.35..=0.65).contains(&control),
        format!(
            "{windows} windows, {}/{} segments, accuracy {} after {epochs} epochs in {:.1} s; amplitude-0 control {control:.3}",
            split.0,
            split.1,
            reached.map_or("below 0.90".into(), |a| format!("{a:.3}")),
            elapsed.as_secs_f64()
        ),
    )
}

fn synthetic_gcn_canet() -> Outcome {
    let start = Instant::now();
    let mut components = joint_components();
    components.extend(imu_components());
    let dataset = synthesize(&SyntheticSpec {
        registry: Registry::new(components).unwrap(),
        informative_component: "left_wrist".into(),
        skeleton: true,
        amplitude: 90.0,
        noise_std: 1.0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let config = TrainConfig {
        model: ModelKind::GcnCanet,
        ..TrainConfig::default()
    };
    let data = prepare(&config, &dataset).unwrap();
    let (_, reached, epochs) = train_to(&config, &data, 0.85);
    let elapsed = start.elapsed();
    outcome(
        reached.is_some_and(|a| a >= 0.85) && epochs <= 50 && elapsed < Duration::from_secs(300),
        format!(
            "accuracy {} after {epochs} epochs in {:.1} s",
            reached.map_or("below 0.85".into(), |a| format!("{a:.3}")),
            elapsed.as_secs_f64()
        ),
    )
}

fn attention_localization() -> Outcome {
    let spec = SyntheticSpec::default();
    let dataset = canet_data(3.0);
    let informative = dataset.registry.position("left_accelerometer").unwrap();
    let mut wins = 0;
    let mut notes = Vec::new();
    for seed in 0..5 {
        let config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let data = prepare(&config, &dataset).unwrap();
        let (model, _, _) = train_to(&config, &data, 0.90);
        let (mut burst, mut quiet) = ((0.0, 0usize), (0.0, 0usize));
        for w in data.test.iter().filter(|w| w.label() == 1) {
            let att = model.predict(w).unwrap().attention;
            for t in 0..w.frames() {
                let a = att.temporal.get(t, informative);
                if spec.in_burst(w.start() + t) {
                    burst = (burst.0 + a, burst.1 + 1);
                } else {
                    quiet = (quiet.0 + a, quiet.1 + 1);
                }
            }
        }
        let (b, q) = (burst.0 / burst.1 as f64, quiet.0 / quiet.1 as f64);
        if b > q {
            wins += 1;
        }
        notes.push(format!("{b:.4}/{q:.4}"));
    }
    outcome(
        wins >= 4,
        format!(
            "burst > non-burst mean attention in {wins}/5 seeds (burst/non-burst: {})",
            notes.join(", ")
        ),
    )
}

fn small_dataset() -> Dataset {
    synthesize(&SyntheticSpec {
        segments: 16,
        frames_per_segment: 210,
        registry: Registry::new(imu_components()).unwrap(),
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn determinism_and_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let dataset = small_dataset();
    let config = TrainConfig {
        epochs: 3,
        test_fraction: 0.25,
        ..TrainConfig::default()
    };
    let mut files = Vec::new();
    for run in 0..2 {
        let (_, history) = fit(&config, &dataset).unwrap();
        let path = dir.path().join(format!("history_{run}.json"));
        std::fs::write(&path, history.to_json().unwrap()).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    let identical = files[0] == files[1];

    let data = prepare(&config, &dataset).unwrap();
    let (model, _) = fit_prepared(&config, &data, |_| ControlFlow::Continue(())).unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let before = evaluate(&model, &data.test).unwrap();
    let after = evaluate(&loaded, &data.test).unwrap();
    outcome(
        identical && before == after,
        format!(
            "history files {}, metrics after reload {}",
            if identical {
                "byte-identical"
            } else {
                "differ"
            },
            if before == after { "equal" } else { "differ" }
        ),
    )
}

fn overfit_sanity() -> Outcome {
    let dataset = small_dataset();
    let config = TrainConfig {
        learning_rate: 1e-2,
        epochs: 200,
        test_fraction: 0.25,
        ..TrainConfig::default()
    };
    let mut data = prepare(&config, &dataset).unwrap();
    // Ten windows from different segments, both classes.
    let mut subset = Vec::new();
    let mut seen = Vec::new();
    for w in &data.train {
        if !seen.contains(&w.segment_id().to_string()) {
            seen.push(w.segment_id().to_string());
            subset.push(w.clone());
        }
    }
    subset.truncate(10);
    data.train = subset;
    data.test.clear();
    let (model, history) = fit_prepared(&config, &data, |r| {
        if r.train_loss < 0.05 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    let loss = mean_loss(&model, &data.train).unwrap();
    let labels: Vec<_> = data.train.iter().map(Window::label).collect();
    outcome(
        data.train.len() == 10 && labels.contains(&0) && labels.contains(&1) && loss < 0.05,
        format!(
            "mean loss {loss:.4} on 10 windows after {} epochs",
            history.epochs.len()
        ),
    )
}
