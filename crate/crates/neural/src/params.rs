use std::collections::BTreeMap;

use crate::{NeuralError, Real, Result, Tensor};

/// Name-keyed registry of learnable tensors. Iteration is always name-sorted,
/// which fixes the order of initialisation, optimizer updates and
/// serialisation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.tensors.remove(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.get(name).ok_or_else(|| NeuralError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors.get_mut(name).ok_or_else(|| NeuralError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Name of the first tensor holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors.iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n.as_str())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }
}

/// Gradient buffer for one tensor. Embedding tables only ever receive
/// gradients on the rows that were looked up, so they are kept sparse.
#[derive(Clone, Debug, PartialEq)]
pub enum GradEntry<T> {
    Dense(Vec<T>),
    Rows { cols: usize, rows: BTreeMap<usize, Vec<T>> },
}

/// Accumulated gradients keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grads<T> {
    entries: BTreeMap<String, GradEntry<T>>,
}

impl<T: Real> Grads<T> {
    pub fn new() -> Self {
        Self { entries: BTreeMap::new() }
    }

    /// Dense accumulator for `name`, created zeroed on first use.
    pub fn dense(&mut self, name: &str, len: usize) -> &mut [T] {
        if !self.entries.contains_key(name) {
            self.entries.insert(name.to_string(), GradEntry::Dense(vec![T::zero(); len]));
        }
        match self.entries.get_mut(name) {
            Some(GradEntry::Dense(v)) => v,
            _ => panic!("gradient `{name}` is row-sparse, not dense"),
        }
    }

    /// Row accumulator for a sparse (embedding) gradient.
    pub fn row(&mut self, name: &str, row: usize, cols: usize) -> &mut [T] {
        let entry =
            self.entries.entry(name.to_string()).or_insert_with(|| GradEntry::Rows { cols, rows: BTreeMap::new() });
        match entry {
            GradEntry::Rows { rows, .. } => rows.entry(row).or_insert_with(|| vec![T::zero(); cols]),
            GradEntry::Dense(_) => panic!("gradient `{name}` is dense, not row-sparse"),
        }
    }

    pub fn get(&self, name: &str) -> Option<&GradEntry<T>> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds `other` into `self`. Merging in a fixed order keeps floating-point
    /// sums reproducible.
    pub fn merge(&mut self, other: Grads<T>) {
        for (name, entry) in other.entries {
            match (self.entries.get_mut(&name), entry) {
                (None, e) => {
                    self.entries.insert(name, e);
                }
                (Some(GradEntry::Dense(a)), GradEntry::Dense(b)) => {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                }
                (Some(GradEntry::Rows { rows: a, .. }), GradEntry::Rows { rows: b, .. }) => {
                    for (r, v) in b {
                        match a.get_mut(&r) {
                            Some(acc) => {
                                for (x, y) in acc.iter_mut().zip(v) {
                                    *x += y;
                                }
                            }
                            None => {
                                a.insert(r, v);
                            }
                        }
                    }
                }
                _ => panic!("gradient `{name}` merged with mismatched layouts"),
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for entry in self.entries.values_mut() {
            match entry {
                GradEntry::Dense(v) => v.iter_mut().for_each(|x| *x *= s),
                GradEntry::Rows { rows, .. } => rows.values_mut().flat_map(|r| r.iter_mut()).for_each(|x| *x *= s),
            }
        }
    }

    /// Materialises the gradient of `name` as a dense vector of `len` values.
    pub fn to_dense(&self, name: &str, len: usize) -> Option<Vec<T>> {
        self.entries.get(name).map(|e| match e {
            GradEntry::Dense(v) => v.clone(),
            GradEntry::Rows { cols, rows } => {
                let mut out = vec![T::zero(); len];
                for (r, v) in rows {
                    out[r * cols..(r + 1) * cols].copy_from_slice(v);
                }
                out
            }
        })
    }

    /// Single gradient value at a flat index (zero when never touched).
    pub fn value(&self, name: &str, index: usize) -> T {
        match self.entries.get(name) {
            None => T::zero(),
            Some(GradEntry::Dense(v)) => v[index],
            Some(GradEntry::Rows { cols, rows }) => {
                rows.get(&(index / cols)).map(|r| r[index % cols]).unwrap_or_else(T::zero)
            }
        }
    }

    pub fn is_finite(&self, name: &str) -> bool {
        match self.entries.get(name) {
            None => true,
            Some(GradEntry::Dense(v)) => v.iter().all(|x| x.is_finite()),
            Some(GradEntry::Rows { rows, .. }) => rows.values().flatten().all(|x| x.is_finite()),
        }
    }
}
