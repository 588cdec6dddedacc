//! CANet and GCN-CANet assembled from the layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    push_with_mid_shoulder, BodyGraph, Modality, Registry, Window, KEYPOINTS, KEYPOINT_CHANNELS,
};
use crate::error::{Error, Result};
use crate::layers::{
    cross_entropy, temporal_attention, AttentionAxis, ClassifierHead, ComponentAttention, GcnStack,
    Linear, LstmStack, TemporalAttention, VecOrder,
};
use crate::numeric::{BoundParams, ParamStore, Tape, Tensor, Var};

use super::attention::AttentionRecord;

/// Attention column name of the graph branch.
pub const GRAPH_COMPONENT: &str = "GC";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Canet,
    GcnCanet,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Canet => "canet",
            ModelKind::GcnCanet => "gcn-canet",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canet" => Ok(ModelKind::Canet),
            "gcn-canet" => Ok(ModelKind::GcnCanet),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// How the graph branch's hidden states enter the component attention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphWiring {
    /// Through its own temporal attention, like every other component.
    #[default]
    TemporalAttention,
    /// The last hidden state is used directly; its temporal record is one-hot on the last frame.
    Direct,
}

/// Architectural switches and widths; everything needed to rebuild a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub lstm_layers: usize,
    pub embed: usize,
    /// Component-attention bottleneck; `None` means "equal to the component count".
    pub bottleneck: Option<usize>,
    pub gcn_hidden: usize,
    pub gcn_layers: usize,
    pub classes: usize,
    pub attention_axis: AttentionAxis,
    pub vec_order: VecOrder,
    pub graph_wiring: GraphWiring,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 8,
            lstm_layers: 3,
            embed: 8,
            bottleneck: None,
            gcn_hidden: 16,
            gcn_layers: 3,
            classes: 2,
            attention_axis: AttentionAxis::Components,
            vec_order: VecOrder::ColumnMajor,
            graph_wiring: GraphWiring::TemporalAttention,
        }
    }
}

/// Resolved sizes: `T` frames, `C` attention columns, `K` hidden units,
/// `N` classes, `E` embedding width, `D` bottleneck.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub frames: usize,
    pub components: usize,
    pub hidden: usize,
    pub classes: usize,
    pub embed: usize,
    pub bottleneck: usize,
}

#[derive(Clone, Debug)]
struct GraphBranch {
    joints: Vec<usize>,
    graph: BodyGraph,
    gcn: GcnStack,
    lstm: LstmStack,
    readout: Tensor,
}

#[derive(Clone, Debug)]
pub struct Model {
    kind: ModelKind,
    registry: Registry,
    config: ModelConfig,
    dims: ModelDims,
    store: ParamStore,
    columns: Vec<String>,
    /// Registry indices encoded by the shared recurrent branch, in column order.
    embedded: Vec<usize>,
    embeddings: Vec<Linear>,
    shared_lstm: Option<LstmStack>,
    graph: Option<GraphBranch>,
    temporal: TemporalAttention,
    component: ComponentAttention,
    head: ClassifierHead,
}

/// Tape handles of one forward pass.
pub struct ForwardVars {
    pub probs: Var,
    pub temporal: Vec<Var>,
    pub component_map: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub class: usize,
    pub attention: AttentionRecord,
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Build and initialize a model for windows of `frames` frames over `registry`.
    ///
    /// CANet treats every registry component as an attention column. GCN-CANet
    /// folds the 13 joint components into one graph column placed first.
    pub fn new(
        kind: ModelKind,
        registry: &Registry,
        frames: usize,
        config: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        if frames == 0
            || config.hidden == 0
            || config.embed == 0
            || config.lstm_layers == 0
            || config.classes < 2
        {
            return Err(Error::Config(
                "model sizes must be positive with at least 2 classes".into(),
            ));
        }
        if registry.is_empty() {
            return Err(Error::Registry("model needs at least one component".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let k = config.hidden;

        let joints = registry.indices_of(Modality::Joints);
        let (embedded, graph_joints): (Vec<usize>, Option<Vec<usize>>) = match kind {
            ModelKind::Canet => ((0..registry.len()).collect(), None),
            ModelKind::GcnCanet => {
                if joints.len() != KEYPOINTS
                    || joints
                        .iter()
                        .any(|&j| registry.components()[j].width != KEYPOINT_CHANNELS)
                {
                    return Err(Error::Registry(format!(
                        "gcn-canet needs the joints modality: {KEYPOINTS} joint components of width \
                         {KEYPOINT_CHANNELS}, found {}",
                        joints.len()
                    )));
                }
                if registry.position(GRAPH_COMPONENT).is_some() {
                    return Err(Error::Registry(format!(
                        "component name {GRAPH_COMPONENT} is reserved"
                    )));
                }
                let others = (0..registry.len())
                    .filter(|i| !joints.contains(i))
                    .collect();
                (others, Some(joints))
            }
        };

        let mut columns = Vec::new();
        if graph_joints.is_some() {
            columns.push(GRAPH_COMPONENT.to_string());
        }
        columns.extend(
            embedded
                .iter()
                .map(|&i| registry.components()[i].name.clone()),
        );
        let c = columns.len();
        let bottleneck = config.bottleneck.unwrap_or(c);
        if bottleneck == 0 {
            return Err(Error::Config(
                "attention bottleneck must be positive".into(),
            ));
        }

        let embeddings: Vec<Linear> = embedded
            .iter()
            .map(|&i| {
                let spec = &registry.components()[i];
                Linear::new(
                    &mut store,
                    &format!("embed.{}", spec.name),
                    spec.width,
                    config.embed,
                    &mut rng,
                )
            })
            .collect();
        let shared_lstm = (!embedded.is_empty()).then(|| {
            LstmStack::new(
                &mut store,
                "lstm",
                config.embed,
                k,
                config.lstm_layers,
                &mut rng,
            )
        });

        let graph = match graph_joints {
            None => None,
            Some(joints) => {
                if config.gcn_hidden == 0 || config.gcn_layers == 0 {
                    return Err(Error::Config("graph branch sizes must be positive".into()));
                }
                let graph = BodyGraph::body();
                let gcn = GcnStack::new(
                    &mut store,
                    graph.normalized_adjacency().clone(),
                    KEYPOINT_CHANNELS,
                    config.gcn_hidden,
                    config.gcn_layers,
                    &mut rng,
                );
                let lstm = LstmStack::new(
                    &mut store,
                    "graph_lstm",
                    config.gcn_hidden,
                    k,
                    config.lstm_layers,
                    &mut rng,
                );
                let v = graph.vertices();
                let readout = Tensor::filled(&[1, v], 1.0 / v as f64);
                Some(GraphBranch {
                    joints,
                    graph,
                    gcn,
                    lstm,
                    readout,
                })
            }
        };

        let temporal = TemporalAttention::new(&mut store, &columns, k, &mut rng);
        let component =
            ComponentAttention::new(&mut store, c, bottleneck, config.attention_axis, &mut rng);
        let head = ClassifierHead::new(
            &mut store,
            k * c,
            config.classes,
            config.vec_order,
            &mut rng,
        );

        Ok(Model {
            kind,
            registry: registry.clone(),
            config: config.clone(),
            dims: ModelDims {
                frames,
                components: c,
                hidden: k,
                classes: config.classes,
                embed: config.embed,
                bottleneck,
            },
            store,
            columns,
            embedded,
            embeddings,
            shared_lstm,
            graph,
            temporal,
            component,
            head,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Attention column names in order.
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Error unless `registry` is exactly the one this model was built for.
    pub fn check_registry(&self, registry: &Registry) -> Result<()> {
        if registry != &self.registry {
            return Err(Error::Registry(format!(
                "model expects components {:?} but data provides {:?}",
                describe(&self.registry),
                describe(registry)
            )));
        }
        Ok(())
    }

    fn check_window(&self, window: &Window) -> Result<()> {
        let width = window.segment().frames.cols();
        if width != self.registry.total_width() {
            return Err(Error::Registry(format!(
                "window of segment {} has {width} columns, model registry has {}",
                window.segment_id(),
                self.registry.total_width()
            )));
        }
        if window.frames() != self.dims.frames {
            return Err(Error::Registry(format!(
                "window of segment {} has {} frames, model expects {}",
                window.segment_id(),
                window.frames(),
                self.dims.frames
            )));
        }
        Ok(())
    }

    /// Record the full forward pass for `window` on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        window: &Window,
    ) -> Result<ForwardVars> {
        self.check_window(window)?;
        let t = window.frames();
        let mut thetas = Vec::with_capacity(self.dims.components);
        let mut temporal = Vec::with_capacity(self.dims.components);
        let mut column = 0;

        if let Some(g) = &self.graph {
            let (a, theta) = self.graph_branch(tape, p, g, window, column)?;
            temporal.push(a);
            thetas.push(theta);
            column += 1;
        }

        if let Some(lstm) = &self.shared_lstm {
            let mut embedded = Vec::with_capacity(self.embedded.len());
            for (&idx, linear) in self.embedded.iter().zip(&self.embeddings) {
                let x = tape.leaf(window.block(&self.registry, idx));
                embedded.push(linear.forward(tape, p, x)?);
            }
            // All components share the recurrent weights, so they run as one batch.
            let stacked = tape.concat_rows(&embedded)?;
            let hidden = lstm.forward(tape, p, stacked, embedded.len())?;
            for b in 0..embedded.len() {
                let h = tape.slice_rows(hidden, b * t, t)?;
                let (a, theta) = temporal_attention(tape, h, p[self.temporal.weights[column]])?;
                temporal.push(a);
                thetas.push(theta);
                column += 1;
            }
        }

        let theta = tape.concat_cols(&thetas)?;
        let (map, weighted) = self.component.forward(tape, p, theta)?;
        let probs = self.head.forward(tape, p, weighted)?;
        Ok(ForwardVars {
            probs,
            temporal,
            component_map: map,
        })
    }

    fn graph_branch(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        g: &GraphBranch,
        window: &Window,
        column: usize,
    ) -> Result<(Var, Var)> {
        let t = window.frames();
        let v = g.graph.vertices();
        let first = g.joints[0];
        let offset = self.registry.offset(first);
        let contiguous = g.joints.iter().enumerate().all(|(i, &j)| j == first + i);
        let mut nodes = Vec::with_capacity(t * v * KEYPOINT_CHANNELS);
        let mut frame = Vec::with_capacity(KEYPOINTS * KEYPOINT_CHANNELS);
        for r in window.start()..window.start() + t {
            let row = window.segment().frames.row_slice(r);
            if contiguous {
                push_with_mid_shoulder(
                    &row[offset..offset + KEYPOINTS * KEYPOINT_CHANNELS],
                    &mut nodes,
                );
            } else {
                frame.clear();
                for &j in &g.joints {
                    let o = self.registry.offset(j);
                    frame.extend_from_slice(&row[o..o + KEYPOINT_CHANNELS]);
                }
                push_with_mid_shoulder(&frame, &mut nodes);
            }
        }
        let x = tape.leaf(Tensor::new(vec![t * v, KEYPOINT_CHANNELS], nodes)?);
        let h = g.gcn.forward(tape, p, x)?;
        let readout = tape.block_left_mul(&g.readout, h)?;
        let hidden = g.lstm.forward(tape, p, readout, 1)?;
        match self.config.graph_wiring {
            GraphWiring::TemporalAttention => {
                temporal_attention(tape, hidden, p[self.temporal.weights[column]])
            }
            GraphWiring::Direct => {
                let last = tape.slice_rows(hidden, t - 1, 1)?;
                let theta = tape.transpose(last)?;
                let mut one_hot = Tensor::zeros(&[t, 1]);
                one_hot.set(t - 1, 0, 1.0);
                Ok((tape.leaf(one_hot), theta))
            }
        }
    }

    /// Probabilities, predicted class and attention record for one window.
    pub fn predict(&self, window: &Window) -> Result<Prediction> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let vars = self.forward(&mut tape, &p, window)?;
        let probs = tape.value(vars.probs).data().to_vec();
        if probs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model forward"));
        }
        let t = window.frames();
        let c = self.dims.components;
        let mut temporal = Tensor::zeros(&[t, c]);
        for (j, &a) in vars.temporal.iter().enumerate() {
            for (i, &v) in tape.value(a).data().iter().enumerate() {
                temporal.set(i, j, v);
            }
        }
        Ok(Prediction {
            class: argmax(&probs),
            probs,
            attention: AttentionRecord {
                components: self.columns.clone(),
                temporal,
                component: tape.value(vars.component_map).clone(),
            },
        })
    }

    /// Cross-entropy of `window` and its gradient for every parameter.
    pub fn loss_and_gradients(&self, window: &Window) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let vars = self.forward(&mut tape, &p, window)?;
        let loss = cross_entropy(&mut tape, vars.probs, window.label())?;
        let value = tape.value(loss).data()[0];
        let grads = tape.backward(loss)?;
        Ok((value, self.store.gradients(&p, &grads)))
    }
}

fn describe(registry: &Registry) -> Vec<String> {
    registry
        .components()
        .iter()
        .map(|c| format!("{}×{}", c.name, c.width))
        .collect()
}
