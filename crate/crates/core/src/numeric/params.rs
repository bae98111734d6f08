use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Handle to an entry of a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Flat, insertion-ordered registry of every trainable tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        let grad = Tensor::zeros(value.shape());
        let id = self.entries.len();
        self.by_name.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, value, grad });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].grad
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Copy a full gradient buffer into the store's grad slots.
    pub fn set_grads(&mut self, grads: &Gradients) -> Result<()> {
        if grads.len() != self.entries.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, store has {}",
                grads.len(),
                self.entries.len()
            )));
        }
        for (e, g) in self.entries.iter_mut().zip(grads.iter()) {
            if e.grad.shape() != g.shape() {
                return Err(Error::Shape(format!("gradient shape for `{}`", e.name)));
            }
            e.grad.data_mut().copy_from_slice(g.data());
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}

/// Gradient buffer laid out exactly like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            tensors: store
                .entries
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect(),
        }
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

    pub fn slot(&mut self, id: ParamId) -> &mut [f64] {
        self.tensors[id.0].data_mut()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.iter()
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.tensors
    }

    /// Concatenate the selected entries in the given order.
    pub fn flatten(&self, ids: &[ParamId]) -> Vec<f64> {
        let mut out = Vec::with_capacity(ids.iter().map(|id| self.tensors[id.0].len()).sum());
        for id in ids {
            out.extend_from_slice(self.tensors[id.0].data());
        }
        out
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += alpha * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_ordered() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(&[2])).unwrap();
        let b = store.add("b", Tensor::zeros(&[3, 1])).unwrap();
        assert!(matches!(
            store.add("a", Tensor::zeros(&[1])),
            Err(Error::DuplicateParam(_))
        ));
        assert_eq!(store.id("b").unwrap(), b);
        let names: Vec<_> = store.entries().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(store.grad(a).shape(), store.value(a).shape());
        assert_eq!(store.num_scalars(), 5);
    }

    #[test]
    fn flatten_follows_requested_order() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(&[2])).unwrap();
        let b = store.add("b", Tensor::zeros(&[1])).unwrap();
        let mut g = Gradients::zeros_like(&store);
        g.slot(a).copy_from_slice(&[1.0, 2.0]);
        g.slot(b)[0] = 3.0;
        assert_eq!(g.flatten(&[b, a]), vec![3.0, 1.0, 2.0]);
    }
}
