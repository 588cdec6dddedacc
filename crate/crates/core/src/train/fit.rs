use std::ops::ControlFlow;
use std::sync::Arc;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    normalize_segment_joints, split_by_segment, window_all, Dataset, KeypointNorm, Registry,
    Window, WindowSpec,
};
use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig, ModelKind};
use crate::numeric::Tensor;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::metrics::{compute_metrics, Metrics};

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of segments held out; the default gives 22 of 152.
    pub test_fraction: f64,
    pub window: WindowSpec,
    pub keypoint_norm: KeypointNorm,
    pub model: ModelKind,
    pub dims: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            test_fraction: 22.0 / 152.0,
            window: WindowSpec::default(),
            keypoint_norm: KeypointNorm::default(),
            model: ModelKind::Canet,
            dims: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::SplitFraction(self.test_fraction));
        }
        Ok(())
    }

    /// Seed of the parameter initializer.
    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }

    /// Seed of the per-epoch shuffle.
    pub fn shuffle_seed(&self) -> u64 {
        derive_seed(self.seed, 2)
    }
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub test_macro_f1: Option<f64>,
}

/// Per-epoch log and final test metrics, with the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub config: TrainConfig,
    pub train_segments: Vec<String>,
    pub test_segments: Vec<String>,
    pub epochs: Vec<EpochRecord>,
    #[serde(rename = "final")]
    pub final_metrics: Option<Metrics>,
}

impl History {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

/// Normalized segments split by id and cut into windows.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub registry: Registry,
    pub classes: usize,
    pub train: Vec<Window>,
    pub test: Vec<Window>,
    pub train_segments: Vec<String>,
    pub test_segments: Vec<String>,
}

pub fn prepare(config: &TrainConfig, dataset: &Dataset) -> Result<PreparedData> {
    config.validate()?;
    let segments = dataset
        .segments
        .iter()
        .map(|s| normalize_segment_joints(s, &dataset.registry, config.keypoint_norm).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split_by_segment(&segments, config.test_fraction, config.seed)?;
    Ok(PreparedData {
        registry: dataset.registry.clone(),
        classes: dataset.classes.len(),
        train_segments: train.iter().map(|s| s.id.clone()).collect(),
        test_segments: test.iter().map(|s| s.id.clone()).collect(),
        train: window_all(&train, &config.window)?,
        test: window_all(&test, &config.window)?,
    })
}

/// Split, window and train on `dataset`.
pub fn fit(config: &TrainConfig, dataset: &Dataset) -> Result<(Model, History)> {
    let data = prepare(config, dataset)?;
    fit_prepared(config, &data, |_| ControlFlow::Continue(()))
}

/// Train on prepared windows; `observe` sees every epoch record and may stop the run.
pub fn fit_prepared(
    config: &TrainConfig,
    data: &PreparedData,
    mut observe: impl FnMut(&EpochRecord) -> ControlFlow<()>,
) -> Result<(Model, History)> {
    config.validate()?;
    let first = data.train.first().ok_or(Error::EmptyTrainingSet)?;
    let dims = ModelConfig {
        classes: data.classes,
        ..config.dims.clone()
    };
    let mut model = Model::new(
        config.model,
        &data.registry,
        first.frames(),
        &dims,
        config.init_seed(),
    )?;
    let mut history = History {
        config: config.clone(),
        train_segments: data.train_segments.clone(),
        test_segments: data.test_segments.clone(),
        epochs: Vec::with_capacity(config.epochs),
        final_metrics: None,
    };
    let adam = config.adam();
    let mut state = AdamState::new(model.params().tensors());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed());
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = batch_gradient(&model, batch.iter().map(|&i| &data.train[i]))?;
            total_loss += loss * batch.len() as f64;
            adam_step(model.params_mut().tensors_mut(), &grads, &mut state, &adam)?;
        }
        let train_loss = total_loss / data.train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let test = if data.test.is_empty() {
            None
        } else {
            Some(evaluate(&model, &data.test)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            test_accuracy: test.as_ref().map(|m| m.accuracy),
            test_macro_f1: test.as_ref().map(|m| m.macro_f1),
        };
        info!(
            "epoch {epoch}: train loss {train_loss:.4}{}",
            test.as_ref()
                .map(|m| format!(
                    ", test accuracy {:.4}, macro-F1 {:.4}",
                    m.accuracy, m.macro_f1
                ))
                .unwrap_or_default()
        );
        let flow = observe(&record);
        history.epochs.push(record);
        if flow.is_break() {
            debug!("stopped by observer after epoch {epoch}");
            break;
        }
    }
    if !data.test.is_empty() {
        history.final_metrics = Some(evaluate(&model, &data.test)?);
    }
    Ok((model, history))
}

/// Mean loss and mean gradient over a batch of windows.
pub fn batch_gradient<'a>(
    model: &Model,
    windows: impl Iterator<Item = &'a Window>,
) -> Result<(f64, Vec<Tensor>)> {
    let mut sum: Option<Vec<Tensor>> = None;
    let mut loss = 0.0;
    let mut n = 0usize;
    for w in windows {
        let (l, g) = model.loss_and_gradients(w)?;
        loss += l;
        n += 1;
        match &mut sum {
            None => sum = Some(g),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.add_assign(b)?;
                }
            }
        }
    }
    let sum = sum.ok_or(Error::EmptyTrainingSet)?;
    let scale = 1.0 / n as f64;
    Ok((
        loss * scale,
        sum.into_iter().map(|g| g.scale(scale)).collect(),
    ))
}

/// Mean cross-entropy over `windows`.
pub fn mean_loss(model: &Model, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut total = 0.0;
    for w in windows {
        let p = model.predict(w)?;
        total += -p.probs[w.label()].max(crate::numeric::LOG_CLAMP).ln();
    }
    Ok(total / windows.len() as f64)
}

/// Hard predictions for every window.
pub fn predict_classes(model: &Model, windows: &[Window]) -> Result<Vec<usize>> {
    windows
        .iter()
        .map(|w| model.predict(w).map(|p| p.class))
        .collect()
}

pub fn evaluate(model: &Model, windows: &[Window]) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let preds = predict_classes(model, windows)?;
    let labels: Vec<usize> = windows.iter().map(|w| w.label()).collect();
    compute_metrics(&preds, &labels, model.dims().classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SyntheticSpec};

    fn tiny_dataset() -> Dataset {
        let registry = Registry::default_full()
            .select(&["left_accelerometer".into(), "right_gyroscope".into()])
            .unwrap();
        synthesize(&SyntheticSpec {
            segments: 6,
            frames_per_segment: 180,
            registry,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn tiny_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            test_fraction: 0.34,
            dims: ModelConfig {
                hidden: 3,
                lstm_layers: 1,
                embed: 2,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialized_model() {
        let config = tiny_config(0);
        let data = prepare(&config, &tiny_dataset()).unwrap();
        let (model, history) = fit_prepared(&config, &data, |_| ControlFlow::Continue(())).unwrap();
        let fresh = Model::new(
            config.model,
            &data.registry,
            150,
            &config.dims,
            config.init_seed(),
        )
        .unwrap();
        assert_eq!(model.params().tensors(), fresh.params().tensors());
        assert!(history.epochs.is_empty());
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let config = TrainConfig {
            learning_rate: 0.0,
            ..tiny_config(2)
        };
        let data = prepare(&config, &tiny_dataset()).unwrap();
        let (model, history) = fit_prepared(&config, &data, |_| ControlFlow::Continue(())).unwrap();
        let fresh = Model::new(
            config.model,
            &data.registry,
            150,
            &config.dims,
            config.init_seed(),
        )
        .unwrap();
        assert_eq!(model.params().tensors(), fresh.params().tensors());
        assert_eq!(history.epochs.len(), 2);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let config = tiny_config(2);
        let dataset = tiny_dataset();
        let (_, a) = fit(&config, &dataset).unwrap();
        let (_, b) = fit(&config, &dataset).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.train_segments.len() + a.test_segments.len(), 6);
    }

    #[test]
    fn epochs_do_not_change_initialization() {
        let a = tiny_config(1);
        let b = tiny_config(7);
        assert_eq!(a.init_seed(), b.init_seed());
        assert_ne!(a.init_seed(), a.shuffle_seed());
    }

    #[test]
    fn empty_training_set() {
        let config = tiny_config(1);
        let mut data = prepare(&config, &tiny_dataset()).unwrap();
        data.train.clear();
        assert!(matches!(
            fit_prepared(&config, &data, |_| ControlFlow::Continue(())),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn observer_can_stop() {
        let config = tiny_config(5);
        let data = prepare(&config, &tiny_dataset()).unwrap();
        let (_, history) = fit_prepared(&config, &data, |_| ControlFlow::Break(())).unwrap();
        assert_eq!(history.epochs.len(), 1);
    }

    #[test]
    fn rejects_bad_config() {
        for config in [
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                beta2: 1.0,
                ..TrainConfig::default()
            },
        ] {
            assert!(config.validate().is_err());
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = TrainConfig::default();
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), config);
        let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }
}
