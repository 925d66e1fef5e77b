//! Tracing feature-level bias from the data to the recommendations:
//! group positive ratios, learned bias-field weights, per-part score
//! variance across groups, and the exposure-to-hit ratio of the ranking.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{mean, population_variance};
use crate::metrics::{ehr, rank_users};
use crate::model::{Mask, ModelParams};
use crate::schema::FieldSchema;
use crate::stats::{ols_fit, pearson, spearman, Correlation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub group: usize,
    pub positives: usize,
    pub negatives: usize,
}

impl GroupCount {
    pub fn total(&self) -> usize {
        self.positives + self.negatives
    }

    /// `N_p - N_n`.
    pub fn diff(&self) -> f64 {
        self.positives as f64 - self.negatives as f64
    }

    /// `N_p / (N_p + N_n)`, undefined for an empty group.
    pub fn ratio(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.positives as f64 / self.total() as f64)
    }
}

/// Positive and negative counts per bias-field group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub groups: Vec<GroupCount>,
}

impl GroupStats {
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.groups.iter().map(GroupCount::ratio).collect()
    }

    pub fn non_empty(&self) -> Vec<usize> {
        self.groups.iter().filter(|g| g.total() > 0).map(|g| g.group).collect()
    }

    pub fn empty(&self) -> Vec<usize> {
        self.groups.iter().filter(|g| g.total() == 0).map(|g| g.group).collect()
    }
}

/// A sample counts once toward every group `j` with `x_j > 0`.
pub fn group_stats(d: &Dataset, schema: &FieldSchema) -> GroupStats {
    let mut groups: Vec<GroupCount> = (0..schema.num_groups())
        .map(|group| GroupCount {
            group,
            positives: 0,
            negatives: 0,
        })
        .collect();
    for s in &d.samples {
        for g in s.groups(schema) {
            if s.label {
                groups[g].positives += 1;
            } else {
                groups[g].negatives += 1;
            }
        }
    }
    GroupStats { groups }
}

/// Per-group means of one model part over samples with one label, and the
/// population variance of those means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartVariance {
    pub means: Vec<Option<f64>>,
    pub variance: f64,
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub linear_positive: PartVariance,
    pub linear_negative: PartVariance,
    pub high_order_positive: PartVariance,
    pub high_order_negative: PartVariance,
}

fn part_variance(per_group: Vec<Vec<f64>>, what: &str) -> Result<PartVariance> {
    let means: Vec<Option<f64>> = per_group
        .iter()
        .map(|v| (!v.is_empty()).then(|| mean(v)))
        .collect();
    let present: Vec<f64> = means.iter().flatten().copied().collect();
    if present.len() < 2 {
        return Err(Error::Metric(format!(
            "variance of {what}: fewer than 2 non-empty groups"
        )));
    }
    Ok(PartVariance {
        variance: population_variance(&present),
        excluded: means
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_none())
            .map(|(j, _)| j)
            .collect(),
        means,
    })
}

/// How strongly the linear part (`Σ w_i x_i` over all fields) and the
/// high-order part separate the groups, computed separately on positive and
/// negative test samples.
pub fn variance_decomposition(params: &ModelParams, d_t: &Dataset, schema: &FieldSchema) -> Result<VarianceReport> {
    if d_t.is_empty() {
        return Err(Error::EmptyDataset("variance decomposition needs test samples"));
    }
    let k = schema.num_groups();
    // [label][part][group]
    let mut buckets = vec![vec![vec![Vec::new(); k]; 2]; 2];
    for s in &d_t.samples {
        let parts = params.predict(s, Mask::Full)?;
        let l = s.label as usize;
        for g in s.groups(schema) {
            buckets[l][0][g].push(parts.linear);
            buckets[l][1][g].push(parts.high_order);
        }
    }
    let [neg, pos]: [Vec<Vec<Vec<f64>>>; 2] = buckets.try_into().unwrap();
    let [lin_neg, high_neg]: [Vec<Vec<f64>>; 2] = neg.try_into().unwrap();
    let [lin_pos, high_pos]: [Vec<Vec<f64>>; 2] = pos.try_into().unwrap();
    Ok(VarianceReport {
        linear_positive: part_variance(lin_pos, "linear part on positives")?,
        linear_negative: part_variance(lin_neg, "linear part on negatives")?,
        high_order_positive: part_variance(high_pos, "high-order part on positives")?,
        high_order_negative: part_variance(high_neg, "high-order part on negatives")?,
    })
}

/// Spearman and Pearson tests of one statistic against another; undefined
/// tests carry the reason instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPair {
    pub spearman: Option<Correlation>,
    pub pearson: Option<Correlation>,
    pub error: Option<String>,
}

impl CorrelationPair {
    pub fn of(x: &[f64], y: &[f64]) -> Self {
        let sp = spearman(x, y);
        let ps = pearson(x, y);
        let error = sp
            .as_ref()
            .err()
            .or(ps.as_ref().err())
            .map(|e| e.to_string());
        Self {
            spearman: sp.ok(),
            pearson: ps.ok(),
            error,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.spearman.is_some() && self.pearson.is_some()
    }
}

/// Correlations of the bias-field linear weights with the three group
/// statistics of the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightCorrelations {
    pub positives: CorrelationPair,
    pub positives_minus_negatives: CorrelationPair,
    pub ratio: CorrelationPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub group: usize,
    pub label: String,
    pub positives: usize,
    pub negatives: usize,
    pub ratio: Option<f64>,
    pub weight: f64,
    /// Weight predicted by regressing weights on ratios, when that fit exists.
    pub fitted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasChainReport {
    pub train_stats: GroupStats,
    /// Groups without training samples, left out of every correlation.
    pub excluded_groups: Vec<usize>,
    pub weight_correlations: WeightCorrelations,
    pub variance: VarianceReport,
    /// Pearson of the per-group mean test logit against the training ratio.
    pub positive_score_vs_ratio: CorrelationPair,
    pub negative_score_vs_ratio: CorrelationPair,
    /// Spearman of per-group EHR on the test set against the training ratio.
    pub ehr_vs_ratio: CorrelationPair,
    pub ehr: Vec<Option<f64>>,
    pub scatter: Vec<ScatterRow>,
    pub warnings: Vec<String>,
}

/// Bundles every step of the bias chain for one trained model.
pub fn bias_chain_report(
    params: &ModelParams,
    train: &Dataset,
    test: &Dataset,
    schema: &FieldSchema,
    labels: Option<&[String]>,
) -> Result<BiasChainReport> {
    let stats = group_stats(train, schema);
    let used = stats.non_empty();
    let weights = params.bias_weights();
    if weights.len() != schema.num_groups() {
        return Err(Error::Dimension("model bias field does not match schema".into()));
    }
    let pick = |f: &dyn Fn(&GroupCount) -> f64| -> Vec<f64> { used.iter().map(|&j| f(&stats.groups[j])).collect() };
    let ratio = pick(&|g| g.ratio().unwrap());
    let w: Vec<f64> = used.iter().map(|&j| weights[j]).collect();
    let weight_correlations = WeightCorrelations {
        positives: CorrelationPair::of(&w, &pick(&|g| g.positives as f64)),
        positives_minus_negatives: CorrelationPair::of(&w, &pick(&GroupCount::diff)),
        ratio: CorrelationPair::of(&w, &ratio),
    };

    let variance = variance_decomposition(params, test, schema)?;

    let k = schema.num_groups();
    let mut score_sums = vec![[Vec::new(), Vec::new()]; k];
    for s in &test.samples {
        let logit = params.logit(s)?;
        for g in s.groups(schema) {
            score_sums[g][s.label as usize].push(logit);
        }
    }
    let score_corr = |label: usize| {
        let (r, m): (Vec<f64>, Vec<f64>) = used
            .iter()
            .zip(&ratio)
            .filter(|(&j, _)| !score_sums[j][label].is_empty())
            .map(|(&j, &r)| (r, mean(&score_sums[j][label])))
            .unzip();
        CorrelationPair::of(&m, &r)
    };
    let positive_score_vs_ratio = score_corr(1);
    let negative_score_vs_ratio = score_corr(0);

    let lists = rank_users(params, test)?;
    let ehr = ehr(&lists, test);
    let (er, rr): (Vec<f64>, Vec<f64>) = used
        .iter()
        .zip(&ratio)
        .filter_map(|(&j, &r)| ehr[j].map(|e| (e, r)))
        .unzip();
    let ehr_vs_ratio = CorrelationPair::of(&er, &rr);

    let fit = ols_fit(&ratio, &w).ok();
    let scatter = (0..k)
        .map(|j| ScatterRow {
            group: j,
            label: labels
                .and_then(|l| l.get(j).cloned())
                .unwrap_or_else(|| format!("#{j}")),
            positives: stats.groups[j].positives,
            negatives: stats.groups[j].negatives,
            ratio: stats.groups[j].ratio(),
            weight: weights[j],
            fitted: match (&fit, stats.groups[j].ratio()) {
                (Some(f), Some(r)) => Some(f.intercept + f.slope * r),
                _ => None,
            },
        })
        .collect();

    let mut warnings = Vec::new();
    for (name, pair) in [
        ("N_p", &weight_correlations.positives),
        ("N_p - N_n", &weight_correlations.positives_minus_negatives),
        ("ratio", &weight_correlations.ratio),
    ] {
        if let Some(e) = &pair.error {
            warnings.push(format!("weight vs {name}: {e}"));
        }
    }
    Ok(BiasChainReport {
        excluded_groups: stats.empty(),
        train_stats: stats,
        weight_correlations,
        variance,
        positive_score_vs_ratio,
        negative_score_vs_ratio,
        ehr_vs_ratio,
        ehr,
        scatter,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, SplitTag};
    use crate::model::Arch;
    use crate::schema::Field;

    fn schema() -> FieldSchema {
        FieldSchema::new(vec![Field::new("g", 2), Field::new("item", 4)], "g").unwrap()
    }

    fn ds(rows: &[(usize, bool)]) -> Dataset {
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, &(g, y))| {
                Sample::from_categories(&schema(), &[vec![g], vec![i % 4]], y, "u", i.to_string(), 0).unwrap()
            })
            .collect();
        Dataset::new(schema(), samples, SplitTag::Train)
    }

    #[test]
    fn direct_counting() {
        let d = ds(&[(0, true), (0, true), (0, true), (0, false), (1, true), (1, false), (1, false), (1, false)]);
        let st = group_stats(&d, &schema());
        assert_eq!(st.ratios(), vec![Some(0.75), Some(0.25)]);
        assert_eq!(st.groups[0].diff(), 2.0);
    }

    #[test]
    fn all_positive_ratio_is_one() {
        let d = ds(&[(0, true), (1, true), (1, true)]);
        assert_eq!(group_stats(&d, &schema()).ratios(), vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn constant_high_order_part_has_zero_variance() {
        let mut p = ModelParams::zeros(&schema(), Arch::Fm, 3, &[]).unwrap();
        p.linear_mut().iter_mut().for_each(|w| *w = 0.4);
        let d = ds(&[(0, true), (0, false), (1, true), (1, false)]);
        let v = variance_decomposition(&p, &d, &schema()).unwrap();
        assert_eq!(v.high_order_positive.variance, 0.0);
        assert_eq!(v.linear_negative.variance, 0.0);
    }

    #[test]
    fn needs_two_groups_per_label() {
        let p = ModelParams::zeros(&schema(), Arch::Fm, 3, &[]).unwrap();
        let d = ds(&[(0, true), (0, false), (1, false)]);
        assert!(variance_decomposition(&p, &d, &schema()).is_err());
    }
}
