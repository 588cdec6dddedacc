//! Decision-level fusion by majority vote.

use crate::data::{Registry, Window};
use crate::error::{Error, Result};
use crate::models::{argmax, Model};
use crate::train::{compute_metrics, Metrics};

/// Fewest voters a panel accepts.
pub const MIN_VOTERS: usize = 3;

/// One voter's output for a window.
#[derive(Clone, Debug, PartialEq)]
pub struct Vote {
    pub voter: String,
    pub class: usize,
    pub probs: Vec<f64>,
}

impl Vote {
    pub fn new(voter: impl Into<String>, probs: Vec<f64>) -> Self {
        Vote {
            voter: voter.into(),
            class: argmax(&probs),
            probs,
        }
    }
}

/// All votes cast for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct VotePanel {
    votes: Vec<Vote>,
    classes: usize,
}

impl VotePanel {
    pub fn new(votes: Vec<Vote>) -> Result<Self> {
        if votes.len() < MIN_VOTERS {
            return Err(Error::TooFewVoters(votes.len()));
        }
        let classes = votes[0].probs.len();
        for v in &votes {
            if v.probs.len() != classes {
                return Err(Error::Panel(format!(
                    "voter {} gives {} probabilities, expected {classes}",
                    v.voter,
                    v.probs.len()
                )));
            }
            if v.class >= classes {
                return Err(Error::Panel(format!(
                    "voter {} predicts class {}",
                    v.voter, v.class
                )));
            }
        }
        Ok(VotePanel { votes, classes })
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

/// Most argmax votes wins; a tie goes to the larger summed probability among
/// the tied classes, then to the lowest index.
pub fn majority_vote(panel: &VotePanel) -> usize {
    let mut counts = vec![0usize; panel.classes];
    let mut mass = vec![0.0; panel.classes];
    for v in &panel.votes {
        counts[v.class] += 1;
        for (m, p) in mass.iter_mut().zip(&v.probs) {
            *m += p;
        }
    }
    let top = *counts.iter().max().expect("at least one class");
    let mut best: Option<usize> = None;
    for c in (0..panel.classes).filter(|&c| counts[c] == top) {
        match best {
            Some(b) if mass[c] <= mass[b] => {}
            _ => best = Some(c),
        }
    }
    best.expect("some class has the top count")
}

/// Vote every model on every window, then score the fused predictions.
pub fn late_fuse_evaluate(
    models: &[&Model],
    registry: &Registry,
    windows: &[Window],
) -> Result<Metrics> {
    let (predictions, labels) = late_fuse_predict(models, registry, windows)?;
    compute_metrics(&predictions, &labels, models[0].dims().classes)
}

/// Fused predictions and the window labels.
pub fn late_fuse_predict(
    models: &[&Model],
    registry: &Registry,
    windows: &[Window],
) -> Result<(Vec<usize>, Vec<usize>)> {
    if models.len() < MIN_VOTERS {
        return Err(Error::TooFewVoters(models.len()));
    }
    if windows.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let classes = models[0].dims().classes;
    if let Some(m) = models.iter().find(|m| m.dims().classes != classes) {
        return Err(Error::Panel(format!(
            "models disagree on class count: {} vs {classes}",
            m.dims().classes
        )));
    }
    let mut predictions = Vec::with_capacity(windows.len());
    for w in windows {
        let votes = models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                w.project(registry, m.registry())
                    .and_then(|w| m.predict(&w))
                    .map(|p| Vote::new(format!("{}#{i}", m.kind().as_str()), p.probs))
            })
            .collect::<Result<Vec<_>>>()?;
        predictions.push(majority_vote(&VotePanel::new(votes)?));
    }
    Ok((predictions, windows.iter().map(|w| w.label()).collect()))
}
