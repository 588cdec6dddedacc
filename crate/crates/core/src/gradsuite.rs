//! Finite-difference gradient checks over every layer and both models.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    imu_components, joint_components, BodyGraph, ComponentSpec, Modality, Registry, Segment, Window,
};
use crate::error::Result;
use crate::layers::{
    cross_entropy, gcn_layer, temporal_attention, AttentionAxis, ClassifierHead,
    ComponentAttention, Linear, LstmStack, VecOrder,
};
use crate::models::{Model, ModelConfig, ModelKind};
use crate::numeric::{
    gradcheck, BoundParams, GradcheckReport, ParamStore, Tape, Tensor, Var, DEFAULT_EPS,
    DEFAULT_TOL,
};

/// One case of the suite at one seed.
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub case: &'static str,
    pub seed: u64,
    pub report: GradcheckReport,
}

pub const CASES: [&str; 11] = [
    "linear",
    "lstm-stack",
    "temporal-attention",
    "component-attention/components",
    "component-attention/hidden-units",
    "component-attention/flat",
    "gcn-layer",
    "classifier-head",
    "cross-entropy",
    "canet",
    "gcn-canet",
];

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    t
}

/// `sum(out ⊙ r)` for a fixed random `r`, so every output entry matters.
fn project(tape: &mut Tape, out: Var, r: &Tensor) -> Result<Var> {
    let r = tape.leaf(r.clone());
    let prod = tape.mul(out, r)?;
    Ok(tape.sum(prod))
}

fn check(
    store: &ParamStore,
    f: impl Fn(&mut Tape, &BoundParams) -> Result<Var>,
) -> Result<GradcheckReport> {
    gradcheck(store, f, DEFAULT_EPS, DEFAULT_TOL)
}

fn random_window(
    registry: &Registry,
    frames: usize,
    label: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Window> {
    let frames = random(&[frames, registry.total_width()], rng);
    Ok(Window::whole(Arc::new(Segment::new(
        "gradcheck",
        label,
        50.0,
        frames,
        registry,
    )?)))
}

fn small_model_config() -> ModelConfig {
    ModelConfig {
        hidden: 3,
        lstm_layers: 2,
        embed: 2,
        gcn_hidden: 4,
        gcn_layers: 2,
        ..ModelConfig::default()
    }
}

/// Run one named case at `seed`.
pub fn run_case(case: &str, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    match case {
        "linear" => {
            let layer = Linear::new(&mut store, "linear", 4, 3, &mut rng);
            let x = store.add("x", random(&[5, 4], &mut rng));
            let r = random(&[5, 3], &mut rng);
            check(&store, |tape, p| {
                let y = layer.forward(tape, p, p[x])?;
                project(tape, y, &r)
            })
        }
        "lstm-stack" => {
            let stack = LstmStack::new(&mut store, "lstm", 3, 4, 3, &mut rng);
            let x = store.add("x", random(&[2 * 5, 3], &mut rng));
            let r = random(&[2 * 5, 4], &mut rng);
            check(&store, |tape, p| {
                let h = stack.forward(tape, p, p[x], 2)?;
                project(tape, h, &r)
            })
        }
        "temporal-attention" => {
            let h = store.add("h", random(&[6, 4], &mut rng));
            let w = store.add("w", random(&[4, 1], &mut rng));
            let (ra, rt) = (random(&[6, 1], &mut rng), random(&[4, 1], &mut rng));
            check(&store, |tape, p| {
                let (a, theta) = temporal_attention(tape, p[h], p[w])?;
                let la = project(tape, a, &ra)?;
                let lt = project(tape, theta, &rt)?;
                tape.add(la, lt)
            })
        }
        "component-attention/components"
        | "component-attention/hidden-units"
        | "component-attention/flat" => {
            let axis = match case {
                "component-attention/components" => AttentionAxis::Components,
                "component-attention/hidden-units" => AttentionAxis::HiddenUnits,
                _ => AttentionAxis::Flat,
            };
            let layer = ComponentAttention::new(&mut store, 3, 2, axis, &mut rng);
            let theta = store.add("theta", random(&[4, 3], &mut rng));
            let (rb, ro) = (random(&[4, 3], &mut rng), random(&[4, 3], &mut rng));
            check(&store, |tape, p| {
                let (b, o) = layer.forward(tape, p, p[theta])?;
                let lb = project(tape, b, &rb)?;
                let lo = project(tape, o, &ro)?;
                tape.add(lb, lo)
            })
        }
        "gcn-layer" => {
            let graph = BodyGraph::body();
            let v = graph.vertices();
            let x = store.add("x", random(&[2 * v, 3], &mut rng));
            let w = store.add("w", random(&[3, 5], &mut rng));
            let r = random(&[2 * v, 5], &mut rng);
            check(&store, |tape, p| {
                let h = gcn_layer(tape, p[x], p[w], graph.normalized_adjacency())?;
                project(tape, h, &r)
            })
        }
        "classifier-head" => {
            let head = ClassifierHead::new(&mut store, 4 * 3, 2, VecOrder::ColumnMajor, &mut rng);
            let o = store.add("o", random(&[4, 3], &mut rng));
            let r = random(&[1, 2], &mut rng);
            check(&store, |tape, p| {
                let probs = head.forward(tape, p, p[o])?;
                project(tape, probs, &r)
            })
        }
        "cross-entropy" => {
            let logits = store.add("logits", random(&[1, 3], &mut rng).scale(2.0));
            let label = (seed % 3) as usize;
            check(&store, |tape, p| {
                let probs = tape.softmax(p[logits], 1)?;
                cross_entropy(tape, probs, label)
            })
        }
        "canet" | "gcn-canet" => {
            let (kind, registry, frames) = if case == "canet" {
                let registry = Registry::new(vec![
                    ComponentSpec::new("acc", 3, Modality::Imu),
                    ComponentSpec::new("mfcc", 4, Modality::AudioFeatures),
                    ComponentSpec::new("gyro", 3, Modality::Imu),
                ])?;
                (ModelKind::Canet, registry, 4)
            } else {
                let mut comps = joint_components();
                comps.extend(imu_components().into_iter().take(2));
                (ModelKind::GcnCanet, Registry::new(comps)?, 3)
            };
            let model = Model::new(kind, &registry, frames, &small_model_config(), seed)?;
            let window = random_window(&registry, frames, (seed % 2) as usize, &mut rng)?;
            gradcheck(
                model.params(),
                |tape, p| {
                    let vars = model.forward(tape, p, &window)?;
                    cross_entropy(tape, vars.probs, window.label())
                },
                DEFAULT_EPS,
                DEFAULT_TOL,
            )
        }
        other => Err(crate::Error::Config(format!(
            "unknown gradcheck case {other:?}"
        ))),
    }
}

/// Every case at every seed.
pub fn run_suite(seeds: &[u64]) -> Result<Vec<SuiteEntry>> {
    let mut entries = Vec::with_capacity(CASES.len() * seeds.len());
    for case in CASES {
        for &seed in seeds {
            entries.push(SuiteEntry {
                case,
                seed,
                report: run_case(case, seed)?,
            });
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes_one_seed() {
        for entry in run_suite(&[7]).unwrap() {
            assert!(entry.report.passed, "{}: {:?}", entry.case, entry.report);
            assert!(entry.report.coordinates > 0);
        }
    }

    #[test]
    fn unknown_case() {
        assert!(run_case("nope", 0).is_err());
    }
}
