//! JSON model files: architecture, registry, decisions and every tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Registry;
use crate::error::{Error, Result};
use crate::layers::{AttentionAxis, VecOrder};
use crate::numeric::Tensor;

use super::network::{GraphWiring, Model, ModelConfig, ModelDims, ModelKind};

pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Decisions {
    attention_axis: AttentionAxis,
    vec_order: VecOrder,
    graph_wiring: GraphWiring,
    graph_readout: String,
    lstm_layers: usize,
    gcn_layers: usize,
    gcn_hidden: usize,
    layout: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    kind: ModelKind,
    dims: ModelDims,
    registry: Registry,
    decisions: Decisions,
    tensors: BTreeMap<String, StoredTensor>,
}

pub fn model_to_json(model: &Model) -> Result<String> {
    let config = model.config();
    let file = ModelFile {
        version: MODEL_VERSION,
        kind: model.kind(),
        dims: model.dims(),
        registry: model.registry().clone(),
        decisions: Decisions {
            attention_axis: config.attention_axis,
            vec_order: config.vec_order,
            graph_wiring: config.graph_wiring,
            graph_readout: "mean".into(),
            lstm_layers: config.lstm_layers,
            gcn_layers: config.gcn_layers,
            gcn_hidden: config.gcn_hidden,
            layout: "row-major".into(),
        },
        tensors: model
            .params()
            .iter()
            .map(|(name, t)| {
                (
                    name.to_string(),
                    StoredTensor {
                        shape: t.shape().to_vec(),
                        data: t.data().to_vec(),
                    },
                )
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptModel("missing version".into()))?;
    if version != u64::from(MODEL_VERSION) {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
    let d = file.decisions;
    if d.graph_readout != "mean" || d.layout != "row-major" {
        return Err(Error::CorruptModel(format!(
            "unsupported readout {:?} or layout {:?}",
            d.graph_readout, d.layout
        )));
    }
    let config = ModelConfig {
        hidden: file.dims.hidden,
        lstm_layers: d.lstm_layers,
        embed: file.dims.embed,
        bottleneck: Some(file.dims.bottleneck),
        gcn_hidden: d.gcn_hidden,
        gcn_layers: d.gcn_layers,
        classes: file.dims.classes,
        attention_axis: d.attention_axis,
        vec_order: d.vec_order,
        graph_wiring: d.graph_wiring,
    };
    let mut model = Model::new(file.kind, &file.registry, file.dims.frames, &config, 0)?;
    if model.dims() != file.dims {
        return Err(Error::DimMismatch(format!(
            "stored dims {:?} disagree with architecture {:?}",
            file.dims,
            model.dims()
        )));
    }
    let mut tensors = file.tensors;
    if tensors.len() != model.params().len() {
        return Err(Error::DimMismatch(format!(
            "expected {} tensors, file has {}",
            model.params().len(),
            tensors.len()
        )));
    }
    let names = model.params().names().to_vec();
    for (name, slot) in names.iter().zip(model.params_mut().tensors_mut()) {
        let stored = tensors
            .remove(name)
            .ok_or_else(|| Error::DimMismatch(format!("tensor {name} missing")))?;
        if stored.shape != slot.shape() {
            return Err(Error::DimMismatch(format!(
                "tensor {name}: stored {:?}, expected {:?}",
                stored.shape,
                slot.shape()
            )));
        }
        let t = Tensor::new(stored.shape, stored.data)
            .map_err(|e| Error::CorruptModel(format!("{name}: {e}")))?;
        if !t.is_finite() {
            return Err(Error::CorruptModel(format!(
                "tensor {name} has non-finite values"
            )));
        }
        *slot = t;
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_json(&fs::read_to_string(path)?)
}
