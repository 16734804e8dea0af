use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// State carried between steps (batch-norm running statistics).
    Buffer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `+-sqrt(6 / fan_in)`.
    KaimingUniform { fan_in: usize },
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub kind: ParamKind,
    pub frozen: bool,
}

/// Named parameter and buffer tensors of one network.
///
/// Every tensor is created once, by name; graphs refer to them by
/// [`ParamId`], so two nodes naming the same parameter share it.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: BTreeMap<String, ParamId>,
}

/// 64-bit FNV-1a, used to derive per-parameter seeds from names.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic generator for the parameter `name` under `seed`. Identical
/// names get identical initial values in every network built from the same
/// seed.
pub fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()).rotate_left(17))
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.id(name).map(|id| &mut self.entries[id.0].value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn insert(&mut self, name: &str, value: Tensor, kind: ParamKind) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("parameter `{name}` already exists")));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            kind,
            frozen: false,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Return the parameter called `name`, creating it with `init` under
    /// `seed` if absent. An existing parameter must have the same shape.
    pub fn get_or_init(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        kind: ParamKind,
        seed: u64,
    ) -> Result<ParamId> {
        if let Some(id) = self.id(name) {
            if self.value(id).shape() != shape {
                return Err(Error::Shape(format!(
                    "parameter `{name}` exists with shape {:?}, requested {:?}",
                    self.value(id).shape(),
                    shape
                )));
            }
            return Ok(id);
        }
        let value = match init {
            Init::KaimingUniform { fan_in } => {
                let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                Tensor::uniform(shape, -bound, bound, &mut param_rng(seed, name))
            }
            Init::Constant(v) => Tensor::full(shape, v),
        };
        self.insert(name, value, kind)
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter `{name}`")))?;
        self.entries[id.0].frozen = frozen;
        Ok(())
    }

    /// Total element count of trainable tensors. Shared tensors count once.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == ParamKind::Trainable)
            .map(|e| e.value.len())
            .sum()
    }
}

/// Per-parameter gradient accumulators, indexed like a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads {
    values: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn new(len: usize) -> Self {
        Grads {
            values: vec![None; len],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.values.get(id.0).and_then(Option::as_ref)
    }

    pub fn accumulate(&mut self, id: ParamId, g: Tensor) -> Result<()> {
        match &mut self.values[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}
