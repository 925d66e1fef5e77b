//! Samples, datasets, chronological splitting and k-core filtering.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::FieldSchema;

/// Which role a dataset plays. `nbt` is the normal biased (regular exposure)
/// data, `dt` the debiased (random exposure) data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    Train,
    ValNbt,
    ValDt,
    TestNbt,
    TestDt,
}

/// One interaction: a sparse feature vector `x`, its click label and the
/// identifiers used for ranking and splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// `(global feature index, value)`, strictly increasing in index.
    pub entries: Vec<(u32, f64)>,
    pub label: bool,
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

impl Sample {
    /// Builds a sample from per-field local category indices. A field with
    /// `m` categories gets `m` entries of value `1/m`; repeated categories
    /// within a field count once.
    pub fn from_categories(
        schema: &FieldSchema,
        categories: &[Vec<usize>],
        label: bool,
        user_id: impl Into<String>,
        item_id: impl Into<String>,
        timestamp: i64,
    ) -> Result<Self> {
        if categories.len() != schema.fields().len() {
            return Err(Error::Sample(format!(
                "{} category lists for {} fields",
                categories.len(),
                schema.fields().len()
            )));
        }
        let mut entries = Vec::new();
        for (field, locals) in categories.iter().enumerate() {
            let set: BTreeSet<usize> = locals.iter().copied().collect();
            if set.is_empty() {
                continue;
            }
            let value = 1.0 / set.len() as f64;
            for local in set {
                entries.push((schema.global_index(field, local)? as u32, value));
            }
        }
        // fields are laid out in order and each set is sorted, so entries are too
        Ok(Self {
            entries,
            label,
            user_id: user_id.into(),
            item_id: item_id.into(),
            timestamp,
        })
    }

    pub fn y(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }

    /// Value of feature `j`, 0 when absent.
    pub fn value(&self, feature: usize) -> f64 {
        let f = feature as u32;
        self.entries
            .binary_search_by_key(&f, |&(i, _)| i)
            .map(|p| self.entries[p].1)
            .unwrap_or(0.0)
    }

    /// Local group indices `j` with `x_j > 0` in the bias field.
    pub fn groups<'a>(&'a self, schema: &FieldSchema) -> impl Iterator<Item = usize> + 'a {
        let (start, end) = (schema.bias_range().start, schema.bias_range().end);
        self.entries
            .iter()
            .filter(move |&&(i, v)| (start..end).contains(&(i as usize)) && v > 0.0)
            .map(move |&(i, _)| i as usize - start)
    }

    /// Checks index order, bounds and per-field normalization.
    pub fn validate(&self, schema: &FieldSchema) -> Result<()> {
        let n = schema.num_features();
        let mut per_field: BTreeMap<usize, f64> = BTreeMap::new();
        let mut prev: Option<u32> = None;
        for &(i, v) in &self.entries {
            if (i as usize) >= n {
                return Err(Error::Sample(format!("feature index {i} >= {n}")));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::Sample("feature indices not strictly increasing".into()));
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Sample(format!("feature {i} has value {v}")));
            }
            prev = Some(i);
            *per_field.entry(schema.field_of(i as usize).unwrap()).or_default() += v;
        }
        for (f, total) in per_field {
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Sample(format!(
                    "values of field `{}` sum to {total}",
                    schema.fields()[f].name
                )));
            }
        }
        Ok(())
    }

    /// Drops every entry of the given field.
    pub fn without_field(&self, schema: &FieldSchema, field: usize) -> Sample {
        let range = schema.field_range(field);
        let mut s = self.clone();
        s.entries.retain(|&(i, _)| !range.contains(&(i as usize)));
        s
    }
}

fn chrono_order(a: &Sample, b: &Sample) -> Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then_with(|| a.user_id.cmp(&b.user_id))
        .then_with(|| a.item_id.cmp(&b.item_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FieldSchema,
    pub samples: Vec<Sample>,
    pub tag: SplitTag,
}

impl Dataset {
    pub fn new(schema: FieldSchema, samples: Vec<Sample>, tag: SplitTag) -> Self {
        Self {
            schema,
            samples,
            tag,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            s.validate(&self.schema)
                .map_err(|e| Error::Sample(format!("sample #{i}: {e}")))?;
        }
        Ok(())
    }

    pub fn with_tag(mut self, tag: SplitTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn positive_ratio(&self) -> f64 {
        let pos = self.samples.iter().filter(|s| s.label).count();
        pos as f64 / self.samples.len() as f64
    }
}

/// Sorts by `(timestamp, user_id, item_id)` and cuts the sequence into a
/// contiguous train / validation / test partition.
pub fn chronological_split(d: &Dataset, fractions: (f64, f64, f64)) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    if d.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty dataset"));
    }
    let mut samples = d.samples.clone();
    samples.sort_by(chrono_order);
    let n = samples.len() as f64;
    let n_train = libm::round(n * a) as usize;
    let n_train_val = (libm::round(n * (a + b)) as usize).max(n_train).min(samples.len());
    let test = samples.split_off(n_train_val);
    let val = samples.split_off(n_train);
    let mk = |s: Vec<Sample>, tag| Dataset::new(d.schema.clone(), s, tag);
    Ok((
        mk(samples, SplitTag::Train),
        mk(val, SplitTag::ValNbt),
        mk(test, SplitTag::TestNbt),
    ))
}

/// Keeps the maximal sub-dataset in which every user and every item has at
/// least `core` interactions.
pub fn k_core_filter(d: &Dataset, core: usize) -> Result<Dataset> {
    if core == 0 {
        return Err(Error::Config("core must be at least 1".into()));
    }
    let mut alive = alloc::vec![true; d.samples.len()];
    let mut user_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut item_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut by_item: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in d.samples.iter().enumerate() {
        *user_count.entry(&s.user_id).or_default() += 1;
        *item_count.entry(&s.item_id).or_default() += 1;
        by_user.entry(&s.user_id).or_default().push(i);
        by_item.entry(&s.item_id).or_default().push(i);
    }
    // Peeling: a node below `core` can never be in the core, and removing it
    // only lowers other degrees, so the order of removal does not matter.
    let mut queue: Vec<(bool, &str)> = user_count
        .iter()
        .filter(|&(_, &c)| c < core)
        .map(|(&u, _)| (true, u))
        .chain(item_count.iter().filter(|&(_, &c)| c < core).map(|(&i, _)| (false, i)))
        .collect();
    let mut removed_users = BTreeSet::new();
    let mut removed_items = BTreeSet::new();
    while let Some((is_user, id)) = queue.pop() {
        let fresh = if is_user {
            removed_users.insert(id)
        } else {
            removed_items.insert(id)
        };
        if !fresh {
            continue;
        }
        let rows = if is_user { &by_user[id] } else { &by_item[id] };
        for &r in rows {
            if !alive[r] {
                continue;
            }
            alive[r] = false;
            let s = &d.samples[r];
            let (other, counts, other_is_user) = if is_user {
                (s.item_id.as_str(), &mut item_count, false)
            } else {
                (s.user_id.as_str(), &mut user_count, true)
            };
            let c = counts.get_mut(other).unwrap();
            *c -= 1;
            if *c + 1 == core {
                queue.push((other_is_user, other));
            }
        }
    }
    let samples = d
        .samples
        .iter()
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|(s, _)| s.clone())
        .collect();
    Ok(Dataset::new(d.schema.clone(), samples, d.tag))
}
