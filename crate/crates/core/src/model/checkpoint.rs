use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ranker::param_specs;
use super::{ModelConfig, ModelError, RankerModel, Vocab};
use crate::io::{read_string, write_atomic};
use crate::tensor::{Array, ParamStore, CHECKPOINT_VERSION};
use crate::Result;

const FORMAT: &str = "kgrank-ranker";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    relations: Vec<String>,
    vocab: Vocab,
    params: BTreeMap<String, Array>,
}

impl RankerModel {
    /// Byte-stable JSON: fields in fixed order, parameters by name.
    pub fn to_checkpoint(&self) -> std::result::Result<String, ModelError> {
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            relations: self.relations.clone(),
            vocab: self.vocab.clone(),
            params: self.params.to_map(),
        };
        serde_json::to_string(&file).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint(text: &str) -> std::result::Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format {} v{}", file.format, file.version)));
        }
        file.config.validate()?;
        if !file.vocab.is_well_formed() {
            return Err(bad("vocabulary lacks the reserved tokens".into()));
        }
        let specs = param_specs(&file.config, file.vocab.len(), file.relations.len());
        if specs.len() != file.params.len() {
            return Err(bad(format!(
                "expected {} parameters, found {}",
                specs.len(),
                file.params.len()
            )));
        }
        for s in &specs {
            match file.params.get(&s.name) {
                Some(a) if a.shape() == s.shape => {}
                Some(a) => {
                    return Err(bad(format!(
                        "{} has shape {:?}, expected {:?}",
                        s.name,
                        a.shape(),
                        s.shape
                    )))
                }
                None => return Err(bad(format!("missing parameter {}", s.name))),
            }
        }
        Ok(Self {
            config: file.config,
            vocab: file.vocab,
            relations: file.relations,
            params: ParamStore::from_map(file.params)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_checkpoint()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_checkpoint(&read_string(path)?)?)
    }
}
