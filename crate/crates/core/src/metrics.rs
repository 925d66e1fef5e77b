//! Per-user rankings and the accuracy / fairness metrics computed on them.
//!
//! For each user `u` the test samples are ranked by model score. With `k_u^+`
//! positives, the top `k_u^+` entries are the user's exposures `P_u`, and the
//! top `K` entries are `P_u^K`. Group membership of a sample is the indicator
//! `x_j > 0` over the bias field, so a multi-group item counts in every group
//! it belongs to.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{mean, population_std};
use crate::model::ModelParams;

/// Rank cutoff used when none is given.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEntry {
    /// Index of the sample in the evaluated dataset.
    pub sample: usize,
    pub score: f64,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user_id: String,
    /// Descending score; ties ordered by item id.
    pub entries: Vec<RankedEntry>,
    pub positives: usize,
    pub negatives: usize,
}

impl RankedList {
    /// `P_u`: the top `k_u^+` entries.
    pub fn exposures(&self) -> &[RankedEntry] {
        &self.entries[..self.positives.min(self.entries.len())]
    }

    /// `P_u^K`: the top `K` entries.
    pub fn top(&self, k: usize) -> &[RankedEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// Builds one ranked list per user from precomputed scores (one per sample).
/// Lists come back ordered by user id.
pub fn rank_by_scores(d: &Dataset, scores: &[f64]) -> Result<Vec<RankedList>> {
    if scores.len() != d.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} samples",
            scores.len(),
            d.len()
        )));
    }
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in d.samples.iter().enumerate() {
        by_user.entry(&s.user_id).or_default().push(i);
    }
    Ok(by_user
        .into_iter()
        .map(|(user, mut rows)| {
            rows.sort_by(|&a, &b| {
                scores[b]
                    .total_cmp(&scores[a])
                    .then_with(|| d.samples[a].item_id.cmp(&d.samples[b].item_id))
                    .then_with(|| a.cmp(&b))
            });
            let entries: Vec<RankedEntry> = rows
                .into_iter()
                .map(|i| RankedEntry {
                    sample: i,
                    score: scores[i],
                    label: d.samples[i].label,
                })
                .collect();
            let positives = entries.iter().filter(|e| e.label).count();
            RankedList {
                user_id: user.to_string(),
                negatives: entries.len() - positives,
                positives,
                entries,
            }
        })
        .collect())
}

/// Scores every sample with the full model (logit) and ranks per user.
pub fn rank_users(params: &ModelParams, d: &Dataset) -> Result<Vec<RankedList>> {
    let scores = d
        .samples
        .iter()
        .map(|s| params.logit(s))
        .collect::<Result<Vec<_>>>()?;
    rank_by_scores(d, &scores)
}

/// Mean of a per-user metric with the number of users used and skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserAverage {
    pub value: f64,
    pub users: usize,
    pub skipped: usize,
}

/// AUC of one list: `(concordant + 0.5 * tied) / (k^+ k^-)`.
pub fn user_auc(list: &RankedList) -> Option<f64> {
    if list.positives == 0 || list.negatives == 0 {
        return None;
    }
    let (mut concordant, mut tied) = (0.0f64, 0.0f64);
    let mut pos_above = 0usize;
    let e = &list.entries;
    let mut i = 0;
    while i < e.len() {
        let mut j = i;
        while j < e.len() && e[j].score == e[i].score {
            j += 1;
        }
        let p = e[i..j].iter().filter(|x| x.label).count();
        let n = (j - i) - p;
        concordant += (pos_above * n) as f64;
        tied += (p * n) as f64;
        pos_above += p;
        i = j;
    }
    Some((concordant + 0.5 * tied) / (list.positives as f64 * list.negatives as f64))
}

/// Unweighted mean of per-user AUC over users with both labels.
pub fn uauc(lists: &[RankedList]) -> Result<UserAverage> {
    let aucs: Vec<f64> = lists.iter().filter_map(user_auc).collect();
    if aucs.is_empty() {
        return Err(Error::Metric("UAUC: no user has both positive and negative samples".into()));
    }
    Ok(UserAverage {
        value: mean(&aucs),
        users: aucs.len(),
        skipped: lists.len() - aucs.len(),
    })
}

fn discount(rank: usize) -> f64 {
    1.0 / libm::log2(rank as f64 + 1.0)
}

/// NDCG@K of one list with binary gains; `None` without positives.
pub fn user_ndcg(list: &RankedList, k: usize) -> Option<f64> {
    if list.positives == 0 {
        return None;
    }
    let dcg: f64 = list
        .top(k)
        .iter()
        .enumerate()
        .filter(|(_, e)| e.label)
        .map(|(r, _)| discount(r + 1))
        .sum();
    let ideal: f64 = (1..=k.min(list.positives)).map(discount).sum();
    Some(dcg / ideal)
}

pub fn ndcg_at_k(lists: &[RankedList], k: usize) -> Result<UserAverage> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let vals: Vec<f64> = lists.iter().filter_map(|l| user_ndcg(l, k)).collect();
    if vals.is_empty() {
        return Err(Error::Metric("NDCG: no user has a positive sample".into()));
    }
    Ok(UserAverage {
        value: mean(&vals),
        users: vals.len(),
        skipped: lists.len() - vals.len(),
    })
}

/// Clicks per group in the evaluated set (the shared EHR / P(j,K) denominator).
pub fn group_clicks(d: &Dataset) -> Vec<usize> {
    let mut clicks = vec![0usize; d.schema.num_groups()];
    for s in d.samples.iter().filter(|s| s.label) {
        for g in s.groups(&d.schema) {
            clicks[g] += 1;
        }
    }
    clicks
}

fn per_group_ratio(num: Vec<usize>, den: &[usize]) -> Vec<Option<f64>> {
    num.into_iter()
        .zip(den)
        .map(|(n, &d)| (d > 0).then(|| n as f64 / d as f64))
        .collect()
}

/// Exposure-to-hit ratio per group: exposures of group `j` (any label) over
/// clicks on group `j`. `None` for groups without clicks.
pub fn ehr(lists: &[RankedList], d: &Dataset) -> Vec<Option<f64>> {
    let mut exposed = vec![0usize; d.schema.num_groups()];
    for l in lists {
        for e in l.exposures() {
            for g in d.samples[e.sample].groups(&d.schema) {
                exposed[g] += 1;
            }
        }
    }
    per_group_ratio(exposed, &group_clicks(d))
}

/// `P(j, K)`: clicked samples of group `j` inside users' top-K over all clicks
/// on group `j`.
pub fn tpr_at_k(lists: &[RankedList], d: &Dataset, k: usize) -> Result<Vec<Option<f64>>> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut hits = vec![0usize; d.schema.num_groups()];
    for l in lists {
        for e in l.top(k).iter().filter(|e| e.label) {
            for g in d.samples[e.sample].groups(&d.schema) {
                hits[g] += 1;
            }
        }
    }
    Ok(per_group_ratio(hits, &group_clicks(d)))
}

/// Relative standard deviation (population std over mean) of the defined
/// `P(j, K)` values.
pub fn reo_at_k(p: &[Option<f64>]) -> Result<f64> {
    let vals: Vec<f64> = p.iter().flatten().copied().collect();
    if vals.len() < 2 {
        return Err(Error::Metric("REO: fewer than 2 groups with clicks".into()));
    }
    let m = mean(&vals);
    if m <= 0.0 {
        return Err(Error::Metric("REO: mean P(j,K) is zero".into()));
    }
    Ok(population_std(&vals) / m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEval {
    pub group: usize,
    pub label: String,
    pub positives: usize,
    pub negatives: usize,
    pub ratio: Option<f64>,
    pub ehr: Option<f64>,
    pub p_at_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub uauc: Option<UserAverage>,
    pub ndcg: Option<UserAverage>,
    pub reo: Option<f64>,
    pub groups: Vec<GroupEval>,
    /// Groups without clicks, for which EHR and P(j,K) are undefined.
    pub undefined_groups: Vec<usize>,
    pub errors: Vec<String>,
}

impl EvalReport {
    /// Evaluates `params` on `d` at cutoff `k`. Metric failures are recorded
    /// in `errors` instead of aborting the report. `labels` names the groups.
    pub fn compute(params: &ModelParams, d: &Dataset, k: usize, labels: Option<&[String]>) -> Result<Self> {
        let lists = rank_users(params, d)?;
        Self::from_lists(&lists, d, k, labels)
    }

    pub fn from_lists(lists: &[RankedList], d: &Dataset, k: usize, labels: Option<&[String]>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let mut errors = Vec::new();
        let mut keep = |r: Result<UserAverage>| match r {
            Ok(v) => Some(v),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        };
        let uauc = keep(uauc(lists));
        let ndcg = keep(ndcg_at_k(lists, k));
        let ehr = ehr(lists, d);
        let p = tpr_at_k(lists, d, k)?;
        let reo = match reo_at_k(&p) {
            Ok(v) => Some(v),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        };
        let k_groups = d.schema.num_groups();
        let mut pos = vec![0usize; k_groups];
        let mut neg = vec![0usize; k_groups];
        for s in &d.samples {
            for g in s.groups(&d.schema) {
                if s.label {
                    pos[g] += 1
                } else {
                    neg[g] += 1
                }
            }
        }
        let groups: Vec<GroupEval> = (0..k_groups)
            .map(|j| GroupEval {
                group: j,
                label: labels
                    .and_then(|l| l.get(j).cloned())
                    .unwrap_or_else(|| format!("#{j}")),
                positives: pos[j],
                negatives: neg[j],
                ratio: (pos[j] + neg[j] > 0).then(|| pos[j] as f64 / (pos[j] + neg[j]) as f64),
                ehr: ehr[j],
                p_at_k: p[j],
            })
            .collect();
        let undefined_groups = groups.iter().filter(|g| g.ehr.is_none()).map(|g| g.group).collect();
        Ok(Self {
            k,
            uauc,
            ndcg,
            reo,
            groups,
            undefined_groups,
            errors,
        })
    }
}
