//! JSON declaration of fields, the bias field and the label rule.
//!
//! ```json
//! {
//!   "fields": [
//!     {"name": "user", "cardinality": 6040},
//!     {"name": "genre", "cardinality": 18, "categories": ["Action", "Comedy"]}
//!   ],
//!   "bias_field": "genre",
//!   "label_threshold": 3
//! }
//! ```
//!
//! `categories` pins the index of known category strings; anything else is
//! assigned the next free index as it is first seen. Without
//! `label_threshold` the label column must be 0 or 1; with it, a label is
//! positive when the value is strictly greater than the threshold.

use std::fs;
use std::path::Path;

use ctrbias_core::schema::{FeatureIndex, Field, FieldSchema};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDecl {
    pub name: String,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub fields: Vec<FieldDecl>,
    pub bias_field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_threshold: Option<f64>,
}

impl SchemaFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    pub fn schema(&self) -> CliResult<FieldSchema> {
        let fields = self
            .fields
            .iter()
            .map(|f| Field::new(f.name.clone(), f.cardinality))
            .collect();
        Ok(FieldSchema::new(fields, &self.bias_field)?)
    }

    pub fn vocabulary(&self, schema: &FieldSchema) -> CliResult<FeatureIndex> {
        let cats = self.fields.iter().map(|f| f.categories.clone()).collect();
        Ok(FeatureIndex::with_categories(schema, cats)?)
    }

    /// The same declaration with every category seen so far pinned.
    pub fn resolved(&self, vocabulary: &FeatureIndex) -> Self {
        let mut out = self.clone();
        for (i, f) in out.fields.iter_mut().enumerate() {
            f.categories = vocabulary.categories(i).to_vec();
        }
        out
    }

    pub fn from_parts(schema: &FieldSchema, vocabulary: &FeatureIndex, label_threshold: Option<f64>) -> Self {
        Self {
            fields: schema
                .fields()
                .iter()
                .enumerate()
                .map(|(i, f)| FieldDecl {
                    name: f.name.clone(),
                    cardinality: f.cardinality,
                    categories: vocabulary.categories(i).to_vec(),
                })
                .collect(),
            bias_field: schema.bias_field_name().to_string(),
            label_threshold,
        }
    }

    /// Display names of the bias-field groups, falling back to the index.
    pub fn group_labels(&self, schema: &FieldSchema, vocabulary: &FeatureIndex) -> Vec<String> {
        let b = schema.bias_field();
        (0..schema.num_groups()).map(|j| vocabulary.label(b, j)).collect()
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}
