//! Building blocks of the component attention networks.
//!
//! Layer structs own only [`ParamId`]s into a shared [`ParamStore`]; the
//! forward functions take the tape handles produced by [`ParamStore::bind`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{BoundParams, ParamId, ParamStore, Tape, Tensor, Var};

/// Affine map `x·W + b` applied to every row.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_uniform(
            format!("{name}.weight"),
            &[in_features, out_features],
            in_features,
            rng,
        );
        let bias = store.add_uniform(format!("{name}.bias"), &[1, out_features], in_features, rng);
        Linear {
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, p[self.weight])?;
        tape.add(xw, p[self.bias])
    }
}

#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
}

/// Stacked LSTM with zero initial states; gate blocks ordered input, forget,
/// candidate, output.
#[derive(Clone, Debug)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let k = hidden_size;
        let layers = (0..num_layers)
            .map(|l| {
                let fan_in = if l == 0 { input_size } else { k };
                LstmLayer {
                    w_ih: store.add_uniform(
                        format!("{name}.{l}.w_ih"),
                        &[fan_in, 4 * k],
                        fan_in,
                        rng,
                    ),
                    w_hh: store.add_uniform(format!("{name}.{l}.w_hh"), &[k, 4 * k], k, rng),
                    bias: store.add_uniform(format!("{name}.{l}.bias"), &[1, 4 * k], k, rng),
                }
            })
            .collect();
        LstmStack {
            layers,
            input_size,
            hidden_size,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Run `batch` sequences stacked by rows (`[batch·T, E]`) and return the
    /// top-layer hidden states in the same layout (`[batch·T, K]`).
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var, batch: usize) -> Result<Var> {
        let width = tape.shape(x)[1];
        if width != self.input_size {
            return Err(Error::shape(
                "lstm_forward",
                tape.shape(x),
                &[self.input_size],
            ));
        }
        let mut h = x;
        for layer in &self.layers {
            h = tape.lstm(h, p[layer.w_ih], p[layer.w_hh], p[layer.bias], batch)?;
        }
        Ok(h)
    }
}

/// Temporal attention over one component's hidden states `h` (`[T, K]`)
/// with weight `w` (`[K, 1]`).
///
/// Returns the scores `a = softmax(h·w)` (`[T, 1]`) and the summary
/// `theta = hᵀ·a` (`[K, 1]`).
pub fn temporal_attention(tape: &mut Tape, h: Var, w: Var) -> Result<(Var, Var)> {
    let (_, k) = tape.value(h).require_matrix("temporal_attention")?;
    if tape.shape(w) != [k, 1] {
        return Err(Error::shape(
            "temporal_attention",
            tape.shape(h),
            tape.shape(w),
        ));
    }
    let logits = tape.matmul(h, w)?;
    let a = tape.softmax(logits, 0)?;
    let ht = tape.transpose(h)?;
    let theta = tape.matmul(ht, a)?;
    Ok((a, theta))
}

/// One attention vector per component.
#[derive(Clone, Debug)]
pub struct TemporalAttention {
    pub weights: Vec<ParamId>,
}

impl TemporalAttention {
    pub fn new(
        store: &mut ParamStore,
        names: &[String],
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weights = names
            .iter()
            .map(|n| store.add_uniform(format!("temporal.{n}"), &[hidden, 1], hidden, rng))
            .collect();
        TemporalAttention { weights }
    }
}

/// Axis along which the component attention map is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionAxis {
    /// Each hidden-unit row sums to one across components.
    #[default]
    Components,
    /// Each component column sums to one across hidden units.
    HiddenUnits,
    /// The whole map sums to one.
    Flat,
}

/// Component attention parameters: `W1 [C, D]`, `b1 [1, D]`, `W2 [D, C]`, `b2 [1, C]`.
#[derive(Clone, Debug)]
pub struct ComponentAttention {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub components: usize,
    pub bottleneck: usize,
    pub axis: AttentionAxis,
}

impl ComponentAttention {
    pub fn new(
        store: &mut ParamStore,
        components: usize,
        bottleneck: usize,
        axis: AttentionAxis,
        rng: &mut impl Rng,
    ) -> Self {
        let (c, d) = (components, bottleneck);
        ComponentAttention {
            w1: store.add_uniform("component.w1", &[c, d], c, rng),
            b1: store.add_uniform("component.b1", &[1, d], c, rng),
            w2: store.add_uniform("component.w2", &[d, c], d, rng),
            b2: store.add_uniform("component.b2", &[1, c], d, rng),
            components,
            bottleneck,
            axis,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, theta: Var) -> Result<(Var, Var)> {
        if tape.shape(theta)[1] != self.components {
            return Err(Error::shape(
                "component_attention",
                tape.shape(theta),
                &[self.components],
            ));
        }
        component_attention(
            tape, theta, p[self.w1], p[self.b1], p[self.w2], p[self.b2], self.axis,
        )
    }
}

/// `B = softmax(tanh(Θ·W1 + b1)·W2 + b2)` and `O = B ⊙ Θ` for `Θ` of shape `[K, C]`.
pub fn component_attention(
    tape: &mut Tape,
    theta: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    axis: AttentionAxis,
) -> Result<(Var, Var)> {
    let hidden = tape.matmul(theta, w1)?;
    let hidden = tape.add(hidden, b1)?;
    let hidden = tape.tanh(hidden);
    let logits = tape.matmul(hidden, w2)?;
    let logits = tape.add(logits, b2)?;
    if tape.shape(logits) != tape.shape(theta) {
        return Err(Error::shape(
            "component_attention",
            tape.shape(theta),
            tape.shape(logits),
        ));
    }
    let map = match axis {
        AttentionAxis::Components => tape.softmax(logits, 1)?,
        AttentionAxis::HiddenUnits => tape.softmax(logits, 0)?,
        AttentionAxis::Flat => {
            let shape = tape.shape(logits).to_vec();
            let flat = tape.reshape(logits, &[1, shape[0] * shape[1]])?;
            let flat = tape.softmax(flat, 1)?;
            tape.reshape(flat, &shape)?
        }
    };
    let weighted = tape.mul(map, theta)?;
    Ok((map, weighted))
}

/// Flattening order of the weighted `[K, C]` map before the classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VecOrder {
    /// Component-major: all K units of component 1, then component 2, ...
    #[default]
    ColumnMajor,
    RowMajor,
}

/// Flatten `o` into a `[1, K·C]` row in the given order.
pub fn vectorize(tape: &mut Tape, o: Var, order: VecOrder) -> Result<Var> {
    let (k, c) = tape.value(o).require_matrix("vec")?;
    let source = match order {
        VecOrder::ColumnMajor => tape.transpose(o)?,
        VecOrder::RowMajor => o,
    };
    tape.reshape(source, &[1, k * c])
}

/// `p = softmax(vec(O)·W3 + b3)` as a `[1, N]` row.
pub fn classifier_head(tape: &mut Tape, o: Var, w3: Var, b3: Var, order: VecOrder) -> Result<Var> {
    let flat = vectorize(tape, o, order)?;
    let logits = tape.matmul(flat, w3)?;
    let logits = tape.add(logits, b3)?;
    tape.softmax(logits, 1)
}

#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub weight: ParamId,
    pub bias: ParamId,
    pub order: VecOrder,
}

impl ClassifierHead {
    pub fn new(
        store: &mut ParamStore,
        features: usize,
        classes: usize,
        order: VecOrder,
        rng: &mut impl Rng,
    ) -> Self {
        ClassifierHead {
            weight: store.add_uniform("head.w3", &[features, classes], features, rng),
            bias: store.add_uniform("head.b3", &[1, classes], features, rng),
            order,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, o: Var) -> Result<Var> {
        classifier_head(tape, o, p[self.weight], p[self.bias], self.order)
    }
}

/// `relu(Â·X·W)` applied to each `V`-row block of `x` (one block per frame).
pub fn gcn_layer(tape: &mut Tape, x: Var, w: Var, a_hat: &Tensor) -> Result<Var> {
    let v = a_hat.require_matrix("gcn_layer")?.0;
    if !tape.shape(x)[0].is_multiple_of(v) {
        return Err(Error::shape("gcn_layer", tape.shape(x), a_hat.shape()));
    }
    let xw = tape.matmul(x, w)?;
    let mixed = tape.block_left_mul(a_hat, xw)?;
    Ok(tape.relu(mixed))
}

/// Cascade of graph convolution layers over a fixed normalized adjacency.
#[derive(Clone, Debug)]
pub struct GcnStack {
    pub weights: Vec<ParamId>,
    pub a_hat: Tensor,
    pub in_features: usize,
    pub hidden_size: usize,
}

impl GcnStack {
    pub fn new(
        store: &mut ParamStore,
        a_hat: Tensor,
        in_features: usize,
        hidden_size: usize,
        num_layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weights = (0..num_layers)
            .map(|l| {
                let fan_in = if l == 0 { in_features } else { hidden_size };
                store.add_uniform(
                    format!("gcn.{l}.weight"),
                    &[fan_in, hidden_size],
                    fan_in,
                    rng,
                )
            })
            .collect();
        GcnStack {
            weights,
            a_hat,
            in_features,
            hidden_size,
        }
    }

    pub fn vertices(&self) -> usize {
        self.a_hat.rows()
    }

    /// `x` is `[frames·V, F]`; returns `[frames·V, hidden]`.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        let mut h = x;
        for &w in &self.weights {
            h = gcn_layer(tape, h, p[w], &self.a_hat)?;
        }
        Ok(h)
    }
}

/// `-ln(p[label])` with `p` clamped below at `1e-12`.
pub fn cross_entropy(tape: &mut Tape, p: Var, label: usize) -> Result<Var> {
    tape.neg_log_pick(p, label)
}
