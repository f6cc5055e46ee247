//! Per-graph memo of derived edge sets.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use crate::error::Result;
use crate::tensor::Tensor;

/// An edge list with one weight per edge, derived from a graph's structure.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSet<T> {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Tensor<T>,
}

impl<T> EdgeSet<T> {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// String-keyed store shared by every clone of a graph. The first value
/// written under a key wins; later writers get the stored value back.
pub struct GraphCache<T> {
    entries: Arc<RwLock<HashMap<String, Arc<EdgeSet<T>>>>>,
    computations: Arc<AtomicUsize>,
}

impl<T> Clone for GraphCache<T> {
    fn clone(&self) -> Self {
        Self {
            entries: Arc::clone(&self.entries),
            computations: Arc::clone(&self.computations),
        }
    }
}

impl<T> Default for GraphCache<T> {
    fn default() -> Self {
        Self {
            entries: Arc::default(),
            computations: Arc::default(),
        }
    }
}

impl<T> std::fmt::Debug for GraphCache<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphCache")
            .field("keys", &self.keys())
            .field("computations", &self.computations())
            .finish()
    }
}

impl<T> GraphCache<T> {
    pub fn get(&self, key: &str) -> Option<Arc<EdgeSet<T>>> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().unwrap().contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keys(&self) -> Vec<String> {
        let mut keys: Vec<_> = self.entries.read().unwrap().keys().cloned().collect();
        keys.sort();
        keys
    }

    /// How many times `get_or_compute` had to run its closure.
    pub fn computations(&self) -> usize {
        self.computations.load(Ordering::Relaxed)
    }

    pub fn get_or_compute(&self, key: &str, compute: impl FnOnce() -> Result<EdgeSet<T>>) -> Result<Arc<EdgeSet<T>>> {
        if let Some(hit) = self.get(key) {
            return Ok(hit);
        }
        self.computations.fetch_add(1, Ordering::Relaxed);
        let value = Arc::new(compute()?);
        let mut entries = self.entries.write().unwrap();
        Ok(Arc::clone(entries.entry(key.to_string()).or_insert(value)))
    }
}
