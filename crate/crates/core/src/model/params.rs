use std::collections::BTreeMap;

use crate::numerics::{Tape, Tensor, Var};

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
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

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// `(name, shape)` for every entry, in name order.
    pub fn shape_table(&self) -> Vec<(String, Vec<usize>)> {
        self.tensors.iter().map(|(k, v)| (k.clone(), v.shape().to_vec())).collect()
    }

    /// Registers every tensor on `tape`, as trainable leaves or as constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundParams<'t> {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable)))
                .collect(),
        }
    }
}

/// Parameters registered on one tape.
pub struct BoundParams<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> BoundParams<'t> {
    /// Binds names to variables already on a tape.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var<'t>)>) -> Self {
        BoundParams {
            vars: vars.into_iter().collect(),
        }
    }

    /// Panics on unknown names: the parameter layout is fixed by the config,
    /// so a miss is a programming error.
    pub fn get(&self, name: &str) -> Var<'t> {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not bound"))
    }

    /// Gradients after a backward pass; unreached parameters get zeros.
    pub fn grads(&self, tape: &Tape) -> ParamStore {
        ParamStore {
            tensors: self.vars.iter().map(|(k, v)| (k.clone(), tape.grad_or_zeros(*v))).collect(),
        }
    }
}
