//! CANet / GCN-CANet models, attention records and model files.

mod attention;
mod io;
mod network;

pub use attention::{AttentionRecord, ExportFormat};
pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_VERSION};
pub use network::{
    argmax, ForwardVars, GraphWiring, Model, ModelConfig, ModelDims, ModelKind, Prediction,
    GRAPH_COMPONENT,
};
