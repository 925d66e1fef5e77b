//! Field layout of the sparse feature vector.
//!
//! Features are laid out field by field in declaration order, so every field
//! owns a contiguous index range and the bias field's `k` features form the
//! group range used by the analysis and debiasing code.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub cardinality: usize,
}

impl Field {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Self {
            name: name.into(),
            cardinality,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    fields: Vec<Field>,
    bias_field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct FieldSchema {
    fields: Vec<Field>,
    bias_field: usize,
    /// `offsets[f]` is the first global index of field `f`; the last entry is `n`.
    offsets: Vec<usize>,
}

impl TryFrom<RawSchema> for FieldSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        FieldSchema::new(raw.fields, &raw.bias_field)
    }
}

impl From<FieldSchema> for RawSchema {
    fn from(s: FieldSchema) -> Self {
        RawSchema {
            bias_field: s.fields[s.bias_field].name.clone(),
            fields: s.fields,
        }
    }
}

impl FieldSchema {
    pub fn new(fields: Vec<Field>, bias_field: &str) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Schema("no fields declared".into()));
        }
        let mut seen = BTreeMap::new();
        for (i, f) in fields.iter().enumerate() {
            if f.cardinality == 0 {
                return Err(Error::Schema(format!("field `{}` has cardinality 0", f.name)));
            }
            if seen.insert(f.name.as_str(), i).is_some() {
                return Err(Error::Schema(format!("field `{}` declared twice", f.name)));
            }
        }
        let bias = *seen
            .get(bias_field)
            .ok_or_else(|| Error::Schema(format!("bias field `{bias_field}` is not declared")))?;
        if fields[bias].cardinality < 2 {
            return Err(Error::Schema(format!(
                "bias field `{bias_field}` needs at least 2 categories"
            )));
        }
        let mut offsets = Vec::with_capacity(fields.len() + 1);
        let mut acc = 0usize;
        for f in &fields {
            offsets.push(acc);
            acc += f.cardinality;
        }
        offsets.push(acc);
        if acc > u32::MAX as usize {
            return Err(Error::Schema("more than 2^32 features".into()));
        }
        Ok(Self {
            fields,
            bias_field: bias,
            offsets,
        })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    /// Total number of features `n`.
    pub fn num_features(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn field_range(&self, field: usize) -> Range<usize> {
        self.offsets[field]..self.offsets[field + 1]
    }

    pub fn field_position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn bias_field(&self) -> usize {
        self.bias_field
    }

    pub fn bias_field_name(&self) -> &str {
        &self.fields[self.bias_field].name
    }

    /// Global indices of the bias features (one per item group).
    pub fn bias_range(&self) -> Range<usize> {
        self.field_range(self.bias_field)
    }

    /// Number of item groups `k`.
    pub fn num_groups(&self) -> usize {
        self.fields[self.bias_field].cardinality
    }

    /// Field that owns a global feature index.
    pub fn field_of(&self, feature: usize) -> Option<usize> {
        if feature >= self.num_features() {
            return None;
        }
        // offsets is sorted; the owner is the last offset <= feature
        Some(self.offsets.partition_point(|&o| o <= feature) - 1)
    }

    pub fn global_index(&self, field: usize, local: usize) -> Result<usize> {
        let f = self
            .fields
            .get(field)
            .ok_or_else(|| Error::Schema(format!("field #{field} out of range")))?;
        if local >= f.cardinality {
            return Err(Error::Schema(format!(
                "category #{local} exceeds cardinality {} of field `{}`",
                f.cardinality, f.name
            )));
        }
        Ok(self.offsets[field] + local)
    }

    /// SHA-256 over field names, cardinalities and the bias field. Category
    /// vocabularies are not part of the digest.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"ctrbias-schema-v1");
        h.update((self.fields.len() as u64).to_le_bytes());
        for f in &self.fields {
            h.update((f.name.len() as u64).to_le_bytes());
            h.update(f.name.as_bytes());
            h.update((f.cardinality as u64).to_le_bytes());
        }
        h.update((self.bias_field as u64).to_le_bytes());
        h.finalize().into()
    }
}

/// Category vocabulary: maps `(field, category string)` to a local index,
/// assigning fresh indices in order of first appearance up to the declared
/// cardinality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureIndex {
    categories: Vec<Vec<String>>,
    #[serde(skip)]
    lookup: Vec<BTreeMap<String, usize>>,
}

impl FeatureIndex {
    pub fn new(schema: &FieldSchema) -> Self {
        let n = schema.fields().len();
        Self {
            categories: alloc::vec![Vec::new(); n],
            lookup: alloc::vec![BTreeMap::new(); n],
        }
    }

    /// Seeds the vocabulary with known category lists (one per field; an
    /// empty list leaves the field open).
    pub fn with_categories(schema: &FieldSchema, categories: Vec<Vec<String>>) -> Result<Self> {
        if categories.len() != schema.fields().len() {
            return Err(Error::Schema(format!(
                "{} category lists for {} fields",
                categories.len(),
                schema.fields().len()
            )));
        }
        let mut idx = Self::new(schema);
        for (f, cats) in categories.into_iter().enumerate() {
            for c in cats {
                let before = idx.categories[f].len();
                idx.local_index(schema, f, &c)?;
                if idx.categories[f].len() == before {
                    return Err(Error::Schema(format!(
                        "category `{c}` listed twice in field `{}`",
                        schema.fields()[f].name
                    )));
                }
            }
        }
        Ok(idx)
    }

    fn rebuild_lookup(&mut self) {
        self.lookup = self
            .categories
            .iter()
            .map(|cats| cats.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect())
            .collect();
    }

    /// Local index of `category` in `field`, inserting it if unseen.
    pub fn local_index(&mut self, schema: &FieldSchema, field: usize, category: &str) -> Result<usize> {
        if self.lookup.len() != self.categories.len() {
            self.rebuild_lookup();
        }
        if let Some(&i) = self.lookup[field].get(category) {
            return Ok(i);
        }
        let f = &schema.fields()[field];
        let next = self.categories[field].len();
        if next >= f.cardinality {
            return Err(Error::Schema(format!(
                "field `{}` overflows its declared cardinality {} at category `{category}`",
                f.name, f.cardinality
            )));
        }
        self.categories[field].push(category.to_string());
        self.lookup[field].insert(category.to_string(), next);
        Ok(next)
    }

    pub fn categories(&self, field: usize) -> &[String] {
        &self.categories[field]
    }

    pub fn into_categories(self) -> Vec<Vec<String>> {
        self.categories
    }

    /// Display label of a local category; falls back to `#<index>`.
    pub fn label(&self, field: usize, local: usize) -> String {
        self.categories
            .get(field)
            .and_then(|c| c.get(local))
            .cloned()
            .unwrap_or_else(|| format!("#{local}"))
    }
}
