#![allow(dead_code)]

use ctrbias_core::data::{Dataset, Sample, SplitTag};
use ctrbias_core::schema::{Field, FieldSchema};
use proptest::prelude::*;

/// A three-field schema: user, item and a bias field of `k` groups.
pub fn schema(users: usize, items: usize, groups: usize) -> FieldSchema {
    FieldSchema::new(
        vec![
            Field::new("user", users),
            Field::new("item", items),
            Field::new("group", groups),
        ],
        "group",
    )
    .unwrap()
}

/// Raw sample description: (user, item, groups, label, timestamp).
pub type RawSample = (usize, usize, Vec<usize>, bool, i64);

pub fn raw_samples(
    users: usize,
    items: usize,
    groups: usize,
    len: std::ops::Range<usize>,
) -> impl Strategy<Value = Vec<RawSample>> {
    prop::collection::vec(
        (
            0..users,
            0..items,
            prop::collection::vec(0..groups, 1..=3),
            any::<bool>(),
            0i64..50,
        ),
        len,
    )
}

pub fn build(schema: &FieldSchema, raw: &[RawSample]) -> Dataset {
    let samples = raw
        .iter()
        .map(|(u, i, g, label, ts)| {
            Sample::from_categories(
                schema,
                &[vec![*u], vec![*i], g.clone()],
                *label,
                format!("u{u}"),
                format!("i{i}"),
                *ts,
            )
            .unwrap()
        })
        .collect();
    Dataset::new(schema.clone(), samples, SplitTag::TestNbt)
}

/// Parameters with every entry drawn uniformly from `[-scale, scale]`.
pub fn random_params(
    schema: &FieldSchema,
    arch: ctrbias_core::model::Arch,
    dim: usize,
    hidden: &[usize],
    seed: u64,
    scale: f64,
) -> ctrbias_core::model::ModelParams {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut p = ctrbias_core::model::ModelParams::zeros(schema, arch, dim, hidden).unwrap();
    for v in p.values_mut() {
        *v = rng.random_range(-scale..scale);
    }
    p
}
