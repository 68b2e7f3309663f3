use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::Tensor;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics on duplicate names.
    #[track_caller]
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name:?}");
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    /// Replaces a parameter's value, keeping its id.
    pub fn set(&mut self, id: ParamId, value: Tensor) {
        self.values[id.0] = value;
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Gradient buffers aligned with a [`ParamStore`]; absent entries are zero.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn for_params(params: &ParamStore) -> Self {
        Grads { slots: alloc::vec![None; params.len()] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor, scale: Real) {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, None);
        }
        match &mut self.slots[id.0] {
            Some(t) => t.add_scaled(g, scale),
            slot @ None => {
                let mut t = g.clone();
                if scale != 1.0 {
                    t.data_mut().iter_mut().for_each(|x| *x *= scale);
                }
                *slot = Some(t);
            }
        }
    }

    /// Adds every gradient of `other` scaled by `scale`.
    pub fn merge(&mut self, other: &Grads, scale: Real) {
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g, scale);
            }
        }
    }

    pub fn global_norm(&self) -> Real {
        super::math::sqrt(self.slots.iter().flatten().map(Tensor::sum_squares).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(Tensor::is_finite)
    }

    /// Drops gradients of parameters for which `keep` is false.
    pub fn retain(&mut self, mut keep: impl FnMut(ParamId) -> bool) {
        for (i, slot) in self.slots.iter_mut().enumerate() {
            if !keep(ParamId(i)) {
                *slot = None;
            }
        }
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.slots.iter().enumerate().filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}
