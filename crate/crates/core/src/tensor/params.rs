//! Named trainable tensors shared by the functional and stateful APIs.

use indexmap::IndexMap;

use super::{Element, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// First and second Adam moments.
    pub(crate) m: Tensor<T>,
    pub(crate) v: Tensor<T>,
}

/// Insertion-ordered parameter registry. Lookups of unknown names fail;
/// nothing is created implicitly.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<T> {
    entries: IndexMap<String, Parameter<T>>,
    pub(crate) step: u64,
}

impl<T: Element> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Registers a new parameter. Re-registering a name is an error.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if let Some(existing) = self.entries.get(&name) {
            return Err(Error::ParameterConflict {
                name,
                existing: existing.value.shape().to_vec(),
                requested: value.shape().to_vec(),
            });
        }
        let zeros = Tensor::zeros(value.shape().to_vec());
        self.entries.insert(
            name,
            Parameter {
                grad: zeros.clone(),
                m: zeros.clone(),
                v: zeros,
                value,
            },
        );
        Ok(())
    }

    /// Registers `name` with `init()` unless it already exists with `shape`.
    /// An existing entry of a different shape is a conflict.
    pub fn get_or_insert_with(&mut self, name: &str, shape: &[usize], init: impl FnOnce() -> Tensor<T>) -> Result<()> {
        match self.entries.get(name) {
            Some(p) if p.value.shape() == shape => Ok(()),
            Some(p) => Err(Error::ParameterConflict {
                name: name.to_string(),
                existing: p.value.shape().to_vec(),
                requested: shape.to_vec(),
            }),
            None => self.insert(name, init()),
        }
    }

    fn entry(&self, name: &str) -> Result<&Parameter<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.entry(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.entry(name)?.grad)
    }

    /// Replaces a value in place; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "ParameterStore::set",
                lhs: p.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, grad: &Tensor<T>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        if p.grad.shape() != grad.shape() {
            return Err(Error::ShapeMismatch {
                op: "accumulate_grad",
                lhs: p.grad.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        for (a, b) in p.grad.data_mut().iter_mut().zip(grad.data()) {
            *a = *a + *b;
        }
        Ok(())
    }

    /// Copy of all values, for restoring a checkpoint later.
    pub fn snapshot(&self) -> Vec<(String, Tensor<T>)> {
        self.entries.iter().map(|(k, p)| (k.clone(), p.value.clone())).collect()
    }

    pub fn restore(&mut self, snapshot: &[(String, Tensor<T>)]) -> Result<()> {
        for (name, value) in snapshot {
            self.set(name, value.clone())?;
        }
        Ok(())
    }
}
