//! Versioned model blob: the fitted model together with the preprocessing
//! state it expects, so raw CSV rows can be scored directly.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tabshift::data::{Dataset, Task};
use tabshift::evaluation::FittedModel;
use tabshift::preprocess::{transform, PreprocessorState};

pub const BLOB_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelBlob {
    pub version: u32,
    pub task: Task,
    /// Alpha the final model was fitted with.
    pub alpha: f64,
    pub preprocessor: PreprocessorState,
    pub model: FittedModel,
}

impl ModelBlob {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading model blob `{}`", path.display()))?;
        let blob: ModelBlob = serde_json::from_str(&text)?;
        if blob.version != BLOB_VERSION {
            bail!("unsupported model blob version {}", blob.version);
        }
        Ok(blob)
    }

    /// Transform raw rows with the stored preprocessing state and score
    /// them.
    pub fn predict_raw(&self, raw: &Dataset) -> Result<Vec<f64>> {
        let transformed = transform(&self.preprocessor, raw)?;
        Ok(self.model.predict(&transformed.data)?)
    }
}
