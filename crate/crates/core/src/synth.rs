//! Synthetic interaction logs with controllable group-wise positive ratios.
//!
//! Users carry latent vectors `a_u` and a click propensity `p_u`; items carry
//! `b_i` and belong to group `i mod k`. The logged (biased) data comes from a
//! policy that picks group `j` for user `u` with weight
//! `share_j · exp(tilt_j · p_u)` and, within the group, targets items at the
//! user with strength `τ_j`. Clicks in the log follow
//! `σ(a_u·b_i + p_u + c_j)`, where `c_j` is bisected so the group's positive
//! ratio hits `ρ_j`.
//!
//! Part of each `c_j` is conformity: a lift that tracks the group's logged
//! ratio rather than what users actually like. The randomly exposed splits
//! pair users with uniformly drawn items and click with
//! `σ(a_u·b_i + p_u + q_j)`, where `q_j` is `c_j` minus `conformity` times
//! the linear trend of `c` over `ρ`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample, SplitTag};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::schema::{FeatureIndex, Field, FieldSchema};

/// Allowed gap between a group's realized and target ratio in the log.
pub const RATIO_TOLERANCE: f64 = 0.05;

const LOG_SPAN: i64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_groups: usize,
    /// Latent preference dimensionality.
    pub dim: usize,
    /// Target positive ratio per group in the logged data.
    pub ratios: Vec<f64>,
    pub exposures_per_user: usize,
    pub seed: u64,
    /// Standard deviation of the random part of `a_u·b_i`.
    pub preference_scale: f64,
    /// Log exposure share of group `j` is proportional to `exp(skew · (ρ_j - mean ρ))`.
    pub exposure_skew: f64,
    /// Within-group targeting strengths are drawn uniformly from `[0, targeting]`.
    pub targeting: f64,
    /// Standard deviation of the per-user click propensity.
    pub clickiness: f64,
    /// A group's log exposures lean toward users with high (tilt > 0) or low
    /// propensity by `exp(tilt · propensity)`; tilts are drawn uniformly from
    /// `[-audience_tilt, audience_tilt]` and shifted by `audience_trend`
    /// times the group's target ratio rescaled to `[-1, 1]`.
    pub audience_tilt: f64,
    pub audience_trend: f64,
    /// Fraction of the ratio-driven trend in `c` that is conformity.
    pub conformity: f64,
    /// Size of the randomly exposed validation split.
    pub unbiased_val_size: usize,
    /// Randomly exposed items per user and split.
    pub unbiased_per_user: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let k = 40;
        Self {
            num_users: 2500,
            num_items: 1000,
            num_groups: k,
            dim: 16,
            ratios: linspace(0.1, 0.9, k),
            exposures_per_user: 100,
            seed: 0,
            preference_scale: 0.75,
            exposure_skew: 1.0,
            targeting: 2.0,
            clickiness: 2.0,
            audience_tilt: 1.0,
            audience_trend: 0.0,
            conformity: 1.0,
            unbiased_val_size: 10_000,
            unbiased_per_user: 20,
        }
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_groups < 2 {
            return Err(Error::Config("need at least 2 groups".into()));
        }
        if self.num_users == 0 || self.num_items == 0 || self.dim == 0 || self.exposures_per_user == 0 {
            return Err(Error::Config("user, item, dimension and exposure counts must be positive".into()));
        }
        if self.num_items < self.num_groups {
            return Err(Error::Config(format!(
                "{} items cannot cover {} groups",
                self.num_items, self.num_groups
            )));
        }
        if self.ratios.len() != self.num_groups {
            return Err(Error::Config(format!(
                "{} target ratios for {} groups",
                self.ratios.len(),
                self.num_groups
            )));
        }
        if let Some(j) = self.ratios.iter().position(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::Config(format!("target ratio of group {j} must lie strictly inside (0, 1)")));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(self.preference_scale)
            && self.exposure_skew.is_finite()
            && finite_nonneg(self.targeting)
            && finite_nonneg(self.clickiness)
            && finite_nonneg(self.audience_tilt)
            && self.audience_trend.is_finite()
            && self.conformity.is_finite())
        {
            return Err(Error::Config("generator strengths must be finite (scale and targeting >= 0)".into()));
        }
        if self.unbiased_per_user == 0 || self.unbiased_per_user > self.num_items {
            return Err(Error::Config("unbiased_per_user must be in 1..=num_items".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<FieldSchema> {
        FieldSchema::new(
            vec![
                Field::new("user", self.num_users),
                Field::new("item", self.num_items),
                Field::new("group", self.num_groups),
            ],
            "group",
        )
    }
}

/// Hidden quantities behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Calibrated group offsets in the log.
    pub log_offsets: Vec<f64>,
    /// Group offsets under random exposure.
    pub true_offsets: Vec<f64>,
    pub targeting: Vec<f64>,
    pub audience_tilt: Vec<f64>,
    pub exposure_share: Vec<f64>,
    /// Realized positive ratio per group in the log.
    pub realized_ratios: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// The full logged data in chronological order.
    pub train: Dataset,
    pub unbiased_val: Dataset,
    pub unbiased_test: Dataset,
    pub vocabulary: FeatureIndex,
    pub truth: SynthTruth,
}

fn user_label(u: usize) -> String {
    format!("u{u:06}")
}

fn item_label(i: usize) -> String {
    format!("i{i:06}")
}

fn group_label(j: usize) -> String {
    format!("g{j:03}")
}

pub fn vocabulary(cfg: &SynthConfig, schema: &FieldSchema) -> Result<FeatureIndex> {
    FeatureIndex::with_categories(
        schema,
        vec![
            (0..cfg.num_users).map(user_label).collect(),
            (0..cfg.num_items).map(item_label).collect(),
            (0..cfg.num_groups).map(group_label).collect(),
        ],
    )
}

/// Offset `c` with `mean σ(logits + c) = target`.
fn calibrate(logits: &[f64], target: f64) -> Option<f64> {
    let mean_at = |c: f64| logits.iter().map(|l| sigmoid(l + c)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    if mean_at(lo) > target || mean_at(hi) < target {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn latent(rng: &mut ChaCha8Rng, rows: usize, dim: usize, std: f64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, std).map_err(|_| Error::Config("invalid preference scale".into()))?;
    Ok((0..rows * dim).map(|_| normal.sample(rng)).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Exposure {
    user: usize,
    item: usize,
    logit: f64,
    timestamp: i64,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let schema = cfg.schema()?;
    let (nu, ni, k, d) = (cfg.num_users, cfg.num_items, cfg.num_groups, cfg.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // per-coordinate std so that the random part of a·b has std `preference_scale`;
    // the last coordinate pairs the user's clickiness with a constant 1 on items
    let coord_std = libm::sqrt(cfg.preference_scale / libm::sqrt(d as f64));
    let a = latent(&mut rng, nu, d, coord_std)?;
    let b = latent(&mut rng, ni, d, coord_std)?;
    let clickiness = latent(&mut rng, nu, 1, cfg.clickiness)?;
    let affinity = |u: usize, i: usize| dot(&a[u * d..(u + 1) * d], &b[i * d..(i + 1) * d]) + clickiness[u];
    let group_items: Vec<Vec<usize>> = (0..k).map(|j| (j..ni).step_by(k).collect()).collect();

    let mean_ratio = cfg.ratios.iter().sum::<f64>() / k as f64;
    let share: Vec<f64> = cfg
        .ratios
        .iter()
        .map(|r| libm::exp(cfg.exposure_skew * (r - mean_ratio)))
        .collect();
    let share_total: f64 = share.iter().sum();
    let exposure_share: Vec<f64> = share.iter().map(|s| s / share_total).collect();
    let ratio_spread = cfg.ratios.iter().fold(0.0f64, |m, r| m.max((r - mean_ratio).abs()));
    let audience_tilt: Vec<f64> = cfg
        .ratios
        .iter()
        .map(|r| {
            let trend = if ratio_spread > 0.0 { (r - mean_ratio) / ratio_spread } else { 0.0 };
            cfg.audience_trend * trend + (2.0 * rng.random::<f64>() - 1.0) * cfg.audience_tilt
        })
        .collect();
    let targeting: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * cfg.targeting).collect();

    // logged exposures
    let mut log: Vec<Exposure> = Vec::with_capacity(nu * cfg.exposures_per_user);
    let mut cdf = vec![0.0; ni];
    let mut scores = vec![0.0; ni];
    let mut group_cdf = vec![0.0; k];
    for u in 0..nu {
        for (i, s) in scores.iter_mut().enumerate() {
            *s = affinity(u, i);
        }
        for (j, items) in group_items.iter().enumerate() {
            let top = items.iter().map(|&i| targeting[j] * scores[i]).fold(f64::MIN, f64::max);
            let mut acc = 0.0;
            for &i in items {
                acc += libm::exp(targeting[j] * scores[i] - top);
                cdf[i] = acc;
            }
        }
        let mut acc = 0.0;
        for j in 0..k {
            acc += exposure_share[j] * libm::exp(audience_tilt[j] * clickiness[u]);
            group_cdf[j] = acc;
        }
        for _ in 0..cfg.exposures_per_user {
            let r = rng.random::<f64>() * acc;
            let j = group_cdf.partition_point(|&c| c < r).min(k - 1);
            let items = &group_items[j];
            let total = cdf[*items.last().unwrap()];
            let r = rng.random::<f64>() * total;
            let pos = items.partition_point(|&i| cdf[i] < r).min(items.len() - 1);
            let item = items[pos];
            log.push(Exposure {
                user: u,
                item,
                logit: scores[item],
                timestamp: rng.random_range(0..LOG_SPAN),
            });
        }
    }

    let mut by_group: Vec<Vec<f64>> = vec![Vec::new(); k];
    for e in &log {
        by_group[e.item % k].push(e.logit);
    }
    let mut log_offsets = Vec::with_capacity(k);
    for (j, logits) in by_group.iter().enumerate() {
        let target = cfg.ratios[j];
        if logits.is_empty() {
            return Err(Error::InfeasibleRatio {
                group: j,
                target,
                reason: "the exposure policy never shows this group",
            });
        }
        let c = calibrate(logits, target).ok_or(Error::InfeasibleRatio {
            group: j,
            target,
            reason: "no offset reaches the target",
        })?;
        log_offsets.push(c);
    }

    let mut positives = vec![0usize; k];
    let mut totals = vec![0usize; k];
    let mut train = Vec::with_capacity(log.len());
    for e in &log {
        let j = e.item % k;
        let label = rng.random::<f64>() < sigmoid(e.logit + log_offsets[j]);
        positives[j] += label as usize;
        totals[j] += 1;
        train.push(Sample::from_categories(
            &schema,
            &[vec![e.user], vec![e.item], vec![j]],
            label,
            user_label(e.user),
            item_label(e.item),
            e.timestamp,
        )?);
    }
    let realized_ratios: Vec<f64> = positives
        .iter()
        .zip(&totals)
        .map(|(&p, &t)| p as f64 / t as f64)
        .collect();
    for (j, (&got, &want)) in realized_ratios.iter().zip(&cfg.ratios).enumerate() {
        if (got - want).abs() > RATIO_TOLERANCE {
            return Err(Error::InfeasibleRatio {
                group: j,
                target: want,
                reason: "too few exposures to realize the target within tolerance",
            });
        }
    }
    train.sort_by(|x, y| {
        (x.timestamp, &x.user_id, &x.item_id).cmp(&(y.timestamp, &y.user_id, &y.item_id))
    });

    // conformity is the share of c's linear trend over ρ that random exposure removes
    let mean_c = log_offsets.iter().sum::<f64>() / k as f64;
    let sxx: f64 = cfg.ratios.iter().map(|r| (r - mean_ratio) * (r - mean_ratio)).sum();
    let slope = if sxx > 0.0 {
        cfg.ratios
            .iter()
            .zip(&log_offsets)
            .map(|(r, c)| (r - mean_ratio) * (c - mean_c))
            .sum::<f64>()
            / sxx
    } else {
        0.0
    };
    let true_offsets: Vec<f64> = log_offsets
        .iter()
        .zip(&cfg.ratios)
        .map(|(c, r)| c - cfg.conformity * slope * (r - mean_ratio))
        .collect();

    let random_exposure = |users: &[usize], start: i64, rng: &mut ChaCha8Rng| -> Result<Vec<Sample>> {
        let mut items: Vec<usize> = (0..ni).collect();
        let mut out = Vec::with_capacity(users.len() * cfg.unbiased_per_user);
        let mut ts = start;
        for &u in users {
            let (chosen, _) = items.partial_shuffle(rng, cfg.unbiased_per_user);
            for &i in chosen.iter() {
                let j = i % k;
                let label = rng.random::<f64>() < sigmoid(affinity(u, i) + true_offsets[j]);
                out.push(Sample::from_categories(
                    &schema,
                    &[vec![u], vec![i], vec![j]],
                    label,
                    user_label(u),
                    item_label(i),
                    ts,
                )?);
                ts += 1;
            }
        }
        Ok(out)
    };
    let mut users: Vec<usize> = (0..nu).collect();
    users.shuffle(&mut rng);
    let val_users = cfg.unbiased_val_size.div_ceil(cfg.unbiased_per_user).min(nu);
    let mut val_users = users[..val_users].to_vec();
    val_users.sort_unstable();
    let mut val = random_exposure(&val_users, LOG_SPAN, &mut rng)?;
    val.truncate(cfg.unbiased_val_size);
    let all_users: Vec<usize> = (0..nu).collect();
    let test = random_exposure(&all_users, 2 * LOG_SPAN, &mut rng)?;

    Ok(SynthData {
        train: Dataset::new(schema.clone(), train, SplitTag::Train),
        unbiased_val: Dataset::new(schema.clone(), val, SplitTag::ValDt),
        unbiased_test: Dataset::new(schema.clone(), test, SplitTag::TestDt),
        vocabulary: vocabulary(cfg, &schema)?,
        truth: SynthTruth {
            log_offsets,
            true_offsets,
            targeting,
            audience_tilt,
            exposure_share,
            realized_ratios,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::group_stats;

    fn small(ratios: Vec<f64>) -> SynthConfig {
        SynthConfig {
            num_users: 200,
            num_items: 100,
            num_groups: ratios.len(),
            dim: 4,
            ratios,
            exposures_per_user: 50,
            unbiased_val_size: 500,
            unbiased_per_user: 10,
            // milder than the defaults so 50 exposures per user pin the ratios down
            clickiness: 1.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn symmetric_target() {
        let data = generate_synthetic(&small(vec![0.5; 5])).unwrap();
        let stats = group_stats(&data.train, &data.train.schema);
        for r in stats.ratios() {
            let r = r.unwrap();
            assert!((0.45..=0.55).contains(&r), "{r}");
        }
    }

    #[test]
    fn spread_targets_are_hit() {
        let cfg = small(linspace(0.1, 0.9, 10));
        let data = generate_synthetic(&cfg).unwrap();
        let stats = group_stats(&data.train, &data.train.schema);
        for (r, want) in stats.ratios().iter().zip(&cfg.ratios) {
            assert!((r.unwrap() - want).abs() <= RATIO_TOLERANCE);
        }
        assert_eq!(data.train.len(), 200 * 50);
        assert_eq!(data.unbiased_val.len(), 500);
        assert_eq!(data.unbiased_test.len(), 200 * 10);
        data.train.validate().unwrap();
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = small(vec![0.2, 0.5, 0.8]);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.unbiased_test, b.unbiased_test);
        let c = generate_synthetic(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn items_round_robin() {
        let data = generate_synthetic(&small(vec![0.3, 0.6, 0.4])).unwrap();
        let schema = &data.train.schema;
        for s in &data.train.samples {
            let item: usize = s.item_id[1..].parse().unwrap();
            let groups: Vec<usize> = s.groups(schema).collect();
            assert_eq!(groups, vec![item % 3]);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_synthetic(&small(vec![0.5])).is_err());
        assert!(generate_synthetic(&small(vec![0.5, 1.0])).is_err());
        assert!(generate_synthetic(&SynthConfig {
            num_items: 2,
            ..small(vec![0.5, 0.5, 0.5])
        })
        .is_err());
    }

    #[test]
    fn unreachable_ratio_names_the_group() {
        // a single exposure per group cannot land within the tolerance of 0.3
        let cfg = SynthConfig {
            num_users: 1,
            num_items: 2,
            exposures_per_user: 2,
            unbiased_per_user: 1,
            exposure_skew: 0.0,
            ..small(vec![0.3, 0.3])
        };
        match generate_synthetic(&cfg) {
            Err(Error::InfeasibleRatio { target, .. }) => assert_eq!(target, 0.3),
            other => panic!("{other:?}"),
        }
    }
}
