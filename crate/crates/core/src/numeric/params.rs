use rand::Rng;

use crate::error::{Error, Result};

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Add a tensor drawn from `uniform(-1/√fan_in, 1/√fan_in)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let s = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = rng.random_range(-s..s);
        }
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Zero every tensor in place.
    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Record every parameter as a tape leaf; the returned handles are indexed by [`ParamId`].
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams(self.tensors.iter().map(|t| tape.leaf(t.clone())).collect())
    }

    /// Gradients aligned with this store, zeros for parameters the loss never touched.
    pub fn gradients(&self, bound: &BoundParams, grads: &Gradients) -> Vec<Tensor> {
        bound
            .0
            .iter()
            .zip(&self.tensors)
            .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
            .collect()
    }

    /// Confirm `other` has the same parameter names and shapes.
    pub fn check_same_layout(&self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::DimMismatch("parameter names differ".into()));
        }
        for (name, (a, b)) in self
            .names
            .iter()
            .zip(self.tensors.iter().zip(&other.tensors))
        {
            if a.shape() != b.shape() {
                return Err(Error::DimMismatch(format!(
                    "parameter {name}: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Tape handles for a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct BoundParams(Vec<Var>);

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl std::ops::Index<ParamId> for BoundParams {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}
