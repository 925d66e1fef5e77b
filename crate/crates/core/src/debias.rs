//! Post-training adjustment of the bias-field linear weights.
//!
//! Two strategies, both of which only touch `w_1..w_k` and return a new
//! parameter set:
//!
//! - reduction: `w_j' = α w_j`;
//! - reconstruction: regress the weights on the training positive ratios,
//!   keep the residuals `r_j`, and rebuild `w_j' = β s_j + γ r_j` from
//!   positive ratios `s_j` estimated on randomly exposed data. `β` and `γ`
//!   are picked by UAUC on held-out random-exposure data.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analysis::{group_stats, GroupStats};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{ndcg_at_k, rank_users, uauc, DEFAULT_K};
use crate::model::ModelParams;
use crate::schema::FieldSchema;
use crate::stats::ols_fit;

/// β and γ search grid used when none is configured.
pub const DEFAULT_GRID: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebiasVariant {
    Reduction,
    Reconstruction,
    /// Reconstruction from residuals only (`β = 0`).
    WithoutRatio,
    /// Reconstruction from unbiased ratios only (`γ = 0`).
    WithoutResidual,
}

impl DebiasVariant {
    pub fn needs_unbiased_data(self) -> bool {
        self != DebiasVariant::Reduction
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DebiasVariant::Reduction => "reduction",
            DebiasVariant::Reconstruction => "reconstruction",
            DebiasVariant::WithoutRatio => "without_ratio",
            DebiasVariant::WithoutResidual => "without_residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebiasConfig {
    pub variant: DebiasVariant,
    pub alpha: f64,
    pub beta_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        Self {
            variant: DebiasVariant::Reduction,
            alpha: 0.0,
            beta_grid: DEFAULT_GRID.to_vec(),
            gamma_grid: DEFAULT_GRID.to_vec(),
        }
    }
}

impl DebiasConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        let check = |name: &str, g: &[f64]| {
            if g.is_empty() {
                return Err(Error::Config(format!("{name} grid is empty")));
            }
            if g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("{name} grid values must be finite and >= 0")));
            }
            Ok(())
        };
        match self.variant {
            DebiasVariant::Reduction => Ok(()),
            DebiasVariant::Reconstruction => {
                check("beta", &self.beta_grid)?;
                check("gamma", &self.gamma_grid)
            }
            DebiasVariant::WithoutRatio => check("gamma", &self.gamma_grid),
            DebiasVariant::WithoutResidual => check("beta", &self.beta_grid),
        }
    }

    /// `(β, γ)` candidates for the configured variant.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let sorted = |g: &[f64]| {
            let mut g = g.to_vec();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        };
        let betas = match self.variant {
            DebiasVariant::WithoutRatio => vec![0.0],
            _ => sorted(&self.beta_grid),
        };
        let gammas = match self.variant {
            DebiasVariant::WithoutResidual => vec![0.0],
            _ => sorted(&self.gamma_grid),
        };
        betas
            .iter()
            .flat_map(|&b| gammas.iter().map(move |&g| (b, g)))
            .collect()
    }
}

fn check_model(params: &ModelParams, schema: &FieldSchema) -> Result<()> {
    if params.bias_features() != schema.bias_range() || params.num_features() != schema.num_features() {
        return Err(Error::Dimension("model does not match the schema's bias field".into()));
    }
    Ok(())
}

/// `w_j ← α w_j` on the bias features; everything else is copied bit for bit.
pub fn reduce_weights(params: &ModelParams, schema: &FieldSchema, alpha: f64) -> Result<ModelParams> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    check_model(params, schema)?;
    let mut out = params.clone();
    out.bias_weights_mut().iter_mut().for_each(|w| *w *= alpha);
    Ok(out)
}

/// Per-group positive ratios on randomly exposed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasedRatios {
    pub ratios: Vec<f64>,
    /// Samples per group.
    pub support: Vec<usize>,
    /// Groups without support; their ratio is the global positive ratio.
    pub fallback: Vec<usize>,
    pub global_ratio: f64,
}

pub fn estimate_unbiased_ratios(d_u: &Dataset, schema: &FieldSchema) -> Result<UnbiasedRatios> {
    if d_u.is_empty() {
        return Err(Error::EmptyDataset("unbiased data is empty"));
    }
    let stats = group_stats(d_u, schema);
    let global_ratio = d_u.positive_ratio();
    let ratios = stats
        .groups
        .iter()
        .map(|g| g.ratio().unwrap_or(global_ratio))
        .collect();
    Ok(UnbiasedRatios {
        ratios,
        support: stats.groups.iter().map(|g| g.total()).collect(),
        fallback: stats.empty(),
        global_ratio,
    })
}

/// Residuals of the OLS fit of bias weights on training positive ratios.
/// Groups absent from training get residual 0.
pub fn weight_residuals(params: &ModelParams, train_stats: &GroupStats) -> Result<Vec<f64>> {
    let w = params.bias_weights();
    if train_stats.groups.len() != w.len() {
        return Err(Error::Dimension("group statistics do not match the bias field".into()));
    }
    let used = train_stats.non_empty();
    let x: Vec<f64> = used.iter().map(|&j| train_stats.groups[j].ratio().unwrap()).collect();
    let y: Vec<f64> = used.iter().map(|&j| w[j]).collect();
    let fit = ols_fit(&x, &y)?;
    let mut r = vec![0.0; w.len()];
    for (&j, res) in used.iter().zip(fit.residuals) {
        r[j] = res;
    }
    Ok(r)
}

/// `w_j ← β s_j + γ r_j` on the bias features.
pub fn reconstruct_weights(
    params: &ModelParams,
    schema: &FieldSchema,
    train_stats: &GroupStats,
    ratios: &UnbiasedRatios,
    beta: f64,
    gamma: f64,
) -> Result<ModelParams> {
    check_model(params, schema)?;
    let r = weight_residuals(params, train_stats)?;
    reconstruct_from_residuals(params, &r, ratios, beta, gamma)
}

fn reconstruct_from_residuals(
    params: &ModelParams,
    residuals: &[f64],
    ratios: &UnbiasedRatios,
    beta: f64,
    gamma: f64,
) -> Result<ModelParams> {
    if ratios.ratios.len() != residuals.len() {
        return Err(Error::Dimension("unbiased ratios do not match the bias field".into()));
    }
    let mut out = params.clone();
    for ((w, s), r) in out.bias_weights_mut().iter_mut().zip(&ratios.ratios).zip(residuals) {
        *w = beta * s + gamma * r;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub beta: f64,
    pub gamma: f64,
    pub uauc: Option<f64>,
    pub ndcg_at_5: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub beta: f64,
    pub gamma: f64,
    pub params: ModelParams,
    pub table: Vec<GridCell>,
    pub ratios: UnbiasedRatios,
}

/// Evaluates every `(β, γ)` of the variant's grid by UAUC on `d_u_val` and
/// returns the best; ties go to the lexically smallest `(β, γ)`.
pub fn grid_search_reconstruction(
    params: &ModelParams,
    schema: &FieldSchema,
    train: &Dataset,
    d_u_val: &Dataset,
    cfg: &DebiasConfig,
) -> Result<GridSearch> {
    cfg.validate()?;
    if cfg.variant == DebiasVariant::Reduction {
        return Err(Error::Config("grid search applies to reconstruction variants only".into()));
    }
    check_model(params, schema)?;
    let ratios = estimate_unbiased_ratios(d_u_val, schema)?;
    let residuals = weight_residuals(params, &group_stats(train, schema))?;
    let mut table = Vec::new();
    let mut best: Option<(f64, f64, f64, ModelParams)> = None;
    for (beta, gamma) in cfg.grid() {
        let candidate = reconstruct_from_residuals(params, &residuals, &ratios, beta, gamma)?;
        let lists = rank_users(&candidate, d_u_val)?;
        let ndcg = ndcg_at_k(&lists, DEFAULT_K).ok().map(|u| u.value);
        match uauc(&lists) {
            Ok(u) => {
                table.push(GridCell {
                    beta,
                    gamma,
                    uauc: Some(u.value),
                    ndcg_at_5: ndcg,
                    error: None,
                });
                if best.as_ref().is_none_or(|b| u.value > b.0) {
                    best = Some((u.value, beta, gamma, candidate));
                }
            }
            Err(e) => table.push(GridCell {
                beta,
                gamma,
                uauc: None,
                ndcg_at_5: ndcg,
                error: Some(e.to_string()),
            }),
        }
    }
    let (_, beta, gamma, params) =
        best.ok_or_else(|| Error::Metric("no grid point could be evaluated on the unbiased data".into()))?;
    Ok(GridSearch {
        beta,
        gamma,
        params,
        table,
        ratios,
    })
}
