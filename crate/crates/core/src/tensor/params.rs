use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Array, Tape, TensorError, Var};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Named parameters, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Arc<Array>>,
}

/// Parameters registered as leaves on one tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var, TensorError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    format: String,
    version: u32,
    params: BTreeMap<String, Array>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array) {
        self.params.insert(name.into(), Arc::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.params.get(name).map(|a| &**a)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.params.get_mut(name).map(Arc::make_mut)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.params.iter().map(|(k, v)| (k.as_str(), &**v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), Arc::make_mut(v)))
    }

    /// Total number of scalar coordinates.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    /// Register every parameter as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape) -> Result<Bound, TensorError> {
        let mut vars = BTreeMap::new();
        for (name, value) in &self.params {
            vars.insert(name.clone(), tape.param(Arc::clone(value))?);
        }
        Ok(Bound { vars })
    }

    /// Gradients of bound parameters after `tape.backward`; untouched
    /// parameters get zeros.
    pub fn gradients(&self, tape: &Tape, bound: &Bound) -> BTreeMap<String, Array> {
        self.params
            .iter()
            .map(|(name, value)| {
                let g = bound
                    .vars
                    .get(name)
                    .and_then(|v| tape.grad(*v).cloned())
                    .unwrap_or_else(|| Array::zeros(value.shape()));
                (name.clone(), g)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, TensorError> {
        let file = ParamsFile {
            format: "kgrank-params".to_string(),
            version: CHECKPOINT_VERSION,
            params: self.params.iter().map(|(k, v)| (k.clone(), (**v).clone())).collect(),
        };
        serde_json::to_string(&file).map_err(|e| TensorError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, TensorError> {
        let file: ParamsFile = serde_json::from_str(text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        if file.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!("unsupported version {}", file.version)));
        }
        let mut store = Self::new();
        for (name, value) in file.params {
            // re-validate: serde bypasses the constructor
            let value = Array::new(value.shape().to_vec(), value.into_data())?;
            store.insert(name, value);
        }
        Ok(store)
    }

    /// Plain name -> array map, for embedding in larger checkpoint files.
    pub fn to_map(&self) -> BTreeMap<String, Array> {
        self.params.iter().map(|(k, v)| (k.clone(), (**v).clone())).collect()
    }

    pub fn from_map(map: BTreeMap<String, Array>) -> Result<Self, TensorError> {
        let mut store = Self::new();
        for (name, value) in map {
            let value = Array::new(value.shape().to_vec(), value.into_data())?;
            store.insert(name, value);
        }
        Ok(store)
    }
}
