use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    #[serde(with = "tensor_map")]
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        self.tensors.get(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NnError> {
        self.tensors.get_mut(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Adds `scale · other[name]` to every tensor present in both sets.
    pub fn axpy(&mut self, scale: f64, other: &ParamSet) {
        for (name, t) in &mut self.tensors {
            if let Some(o) = other.tensors.get(name) {
                for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                    *a += scale * b;
                }
            }
        }
    }
}

mod tensor_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::nn_core::Tensor;

    #[derive(Serialize, Deserialize)]
    struct Raw {
        shape: Vec<usize>,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, Tensor>, s: S) -> Result<S::Ok, S::Error> {
        let raw: BTreeMap<&String, Raw> = m
            .iter()
            .map(|(k, t)| (k, Raw { shape: t.shape().to_vec(), data: t.data().to_vec() }))
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, Tensor>, D::Error> {
        let raw = BTreeMap::<String, Raw>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, r)| {
                Tensor::new(r.shape, r.data)
                    .map(|t| (k.clone(), t))
                    .map_err(|e| serde::de::Error::custom(format!("parameter `{k}`: {e}")))
            })
            .collect()
    }
}
