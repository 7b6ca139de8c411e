use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GenerationError;

/// Fine-tuning hyperparameters handed to external training infrastructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub learning_rate: f64,
    pub batch_size: u32,
    pub max_seq_len: u32,
    pub split_ratio: f64,
    /// Parameter-efficient adapter method.
    pub adapter: String,
    pub optimizer: String,
    /// Optimizer-state sharding strategy.
    pub sharding: String,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            batch_size: 16,
            max_seq_len: 2048,
            split_ratio: 0.8,
            adapter: "lora".into(),
            optimizer: "adamw".into(),
            sharding: "zero_stage_2".into(),
            seed: 7,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> GenerationError {
    GenerationError::InvalidOverride {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl FinetuneConfig {
    pub const FIELDS: [&'static str; 8] = [
        "learning_rate",
        "batch_size",
        "max_seq_len",
        "split_ratio",
        "adapter",
        "optimizer",
        "sharding",
        "seed",
    ];

    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if self.max_seq_len == 0 {
            return Err(invalid("max_seq_len", "must be positive"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(invalid("split_ratio", "must lie in (0, 1)"));
        }
        for (field, v) in [
            ("adapter", &self.adapter),
            ("optimizer", &self.optimizer),
            ("sharding", &self.sharding),
        ] {
            if v.trim().is_empty() {
                return Err(invalid(field, "must not be empty"));
            }
        }
        Ok(())
    }

    /// Sets one field from its textual value; the result must still validate.
    pub fn set(&mut self, field: &str, value: &str) -> Result<(), GenerationError> {
        fn num<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, GenerationError> {
            value
                .trim()
                .parse()
                .map_err(|_| invalid(field, format!("`{value}` is not a valid number")))
        }
        let mut next = self.clone();
        match field {
            "learning_rate" | "lr" => next.learning_rate = num(field, value)?,
            "batch_size" => next.batch_size = num(field, value)?,
            "max_seq_len" => next.max_seq_len = num(field, value)?,
            "split_ratio" | "split" => next.split_ratio = num(field, value)?,
            "adapter" => next.adapter = value.to_string(),
            "optimizer" => next.optimizer = value.to_string(),
            "sharding" => next.sharding = value.to_string(),
            "seed" => next.seed = num(field, value)?,
            other => return Err(invalid(other, "unknown field")),
        }
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn with_overrides<'a>(
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, GenerationError> {
        let mut c = Self::default();
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self, GenerationError> {
        let c: Self = toml::from_str(s).map_err(|e| invalid("<file>", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<(), GenerationError> {
        std::fs::write(path, self.to_toml()).map_err(|source| GenerationError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, GenerationError> {
        let s = std::fs::read_to_string(path).map_err(|source| GenerationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&s)
    }
}
