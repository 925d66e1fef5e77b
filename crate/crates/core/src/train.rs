//! Mini-batch BCE training with Adam, L2 regularization and early stopping
//! on validation UAUC.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{rank_users, uauc};
use crate::model::{Arch, Dropout, ModelParams, DEFAULT_NFM_HIDDEN};
use crate::optim::{sgd_step, Adam};
use crate::schema::FieldSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Remove the bias field from the training samples.
    Unawareness,
    /// Keep every linear weight at 0 (high-order part only).
    NoLinearPart,
    /// Keep the bias-field linear weights at 0.
    NoBiasLinearWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Plain gradient descent in data order, no shuffling. Exists so the
    /// single-step update law on linear weights can be checked exactly.
    PlainSgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub dropout: Dropout,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub ablations: BTreeSet<Ablation>,
    pub optimizer: Optimizer,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            l2: 1e-6,
            dropout: Dropout::default(),
            max_epochs: 20,
            patience: 3,
            seed: 0,
            ablations: BTreeSet::new(),
            optimizer: Optimizer::Adam,
            embedding_dim: 16,
            hidden: vec![DEFAULT_NFM_HIDDEN],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be finite and > 0, got {}", self.learning_rate));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad(format!("l2 must be finite and >= 0, got {}", self.l2));
        }
        for r in [self.dropout.bi_rate, self.dropout.hidden_rate] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("dropout rate {r} outside [0, 1)"));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.embedding_dim == 0 {
            return bad("batch_size, max_epochs and embedding_dim must be positive".into());
        }
        if self.patience > self.max_epochs {
            return bad(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample BCE over the epoch's forward passes (without L2).
    pub train_loss: f64,
    pub val_uauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub arch: Arch,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub early_stopping: bool,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
    /// Hex SHA-256 of the returned model (see `codec::model_digest`).
    pub model_digest: String,
    /// Filled in by callers that can read a clock; kept out of the JSON so
    /// reports stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Closed-form single-sample gradient step on one linear weight:
/// `w' = w + ε (y - σ(ŷ)) x_j`.
pub fn sgd_step_reference(w: f64, learning_rate: f64, y: f64, score: f64, x: f64) -> f64 {
    w + learning_rate * (y - score) * x
}

/// Parameters that training must not change under the given ablations.
fn frozen_mask(params: &ModelParams, ablations: &BTreeSet<Ablation>) -> Vec<bool> {
    let mut frozen = vec![false; params.num_params()];
    if ablations.contains(&Ablation::NoLinearPart) {
        frozen[params.linear_range()].iter_mut().for_each(|f| *f = true);
    }
    if ablations.contains(&Ablation::NoBiasLinearWeights) || ablations.contains(&Ablation::Unawareness) {
        frozen[params.bias_weights_range()].iter_mut().for_each(|f| *f = true);
    }
    if ablations.contains(&Ablation::Unawareness) {
        let bias = params.bias_features();
        let start = params.embeddings_range().start;
        let d = params.dim();
        frozen[start + bias.start * d..start + bias.end * d]
            .iter_mut()
            .for_each(|f| *f = true);
    }
    frozen
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Trains an FM or NFM model on `train`, selecting the epoch with the best
/// validation UAUC. An empty (or single-label) validation set disables early
/// stopping and the last epoch is returned.
pub fn train(
    schema: &FieldSchema,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    arch: Arch,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set is empty"));
    }
    if &train.schema != schema || &val.schema != schema {
        return Err(Error::Schema("datasets were built for a different schema".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(schema, arch, cfg.embedding_dim, &cfg.hidden, &mut rng)?;
    let frozen = frozen_mask(&params, &cfg.ablations);

    let stripped: Vec<Sample>;
    let samples: &[Sample] = if cfg.ablations.contains(&Ablation::Unawareness) {
        // an unaware model never sees the bias field, so its rows stay at 0
        let bias = params.bias_features();
        let start = params.embeddings_range().start;
        let d = params.dim();
        params.values_mut()[start + bias.start * d..start + bias.end * d]
            .iter_mut()
            .for_each(|v| *v = 0.0);
        stripped = train
            .samples
            .iter()
            .map(|s| s.without_field(schema, schema.bias_field()))
            .collect();
        &stripped
    } else {
        &train.samples
    };

    let mut warnings = Vec::new();
    let early_stopping = match rank_users(&params, val).and_then(|l| uauc(&l)) {
        Ok(_) => true,
        Err(e) => {
            let msg = format!("early stopping disabled: {e}");
            log::warn!("{msg}");
            warnings.push(msg);
            false
        }
    };

    let dropout = (arch == Arch::Nfm && (cfg.dropout.bi_rate > 0.0 || cfg.dropout.hidden_rate > 0.0))
        .then_some(cfg.dropout);
    let mut adam = Adam::new(params.num_params(), cfg.learning_rate);
    let mut grad = vec![0.0; params.num_params()];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        if cfg.optimizer == Optimizer::Adam {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut max_abs_logit = 0.0f64;
            for &i in chunk {
                let s = &samples[i];
                let (logit, loss) = match dropout {
                    Some(rates) => params.accumulate_gradient(s, s.y(), scale, &mut grad, Some((rates, &mut rng)))?,
                    None => params.accumulate_gradient(s, s.y(), scale, &mut grad, None)?,
                };
                max_abs_logit = max_abs_logit.max(logit.abs());
                if !loss.is_finite() || !logit.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch,
                        loss,
                        max_abs_logit,
                    });
                }
                loss_sum += loss;
            }
            if cfg.l2 > 0.0 {
                // w0 is not regularized
                let values = params.values();
                for i in 1..values.len() {
                    grad[i] += 2.0 * cfg.l2 * values[i];
                }
            }
            match cfg.optimizer {
                Optimizer::Adam => adam.step(params.values_mut(), &grad, &frozen),
                Optimizer::PlainSgd => sgd_step(params.values_mut(), &grad, &frozen, cfg.learning_rate),
            }
        }
        let train_loss = loss_sum / samples.len() as f64;
        let val_uauc = if early_stopping {
            Some(uauc(&rank_users(&params, val)?)?.value)
        } else {
            None
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_uauc,
        });
        match val_uauc {
            Some(v) => {
                if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                    best = Some((v, epoch, params.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.patience.max(1) {
                        stopped_early = epoch < cfg.max_epochs;
                        break;
                    }
                }
            }
            None => best = Some((f64::NAN, epoch, params.clone())),
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    let report = TrainReport {
        arch,
        epochs,
        best_epoch,
        early_stopping,
        stopped_early,
        warnings,
        model_digest: hex(&crate::codec::model_digest(&best_params)),
        wall_clock_secs: 0.0,
    };
    Ok((best_params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;
    use crate::model::Mask;
    use crate::schema::Field;
    use alloc::string::ToString;

    fn schema() -> FieldSchema {
        FieldSchema::new(vec![Field::new("g", 3), Field::new("item", 6)], "g").unwrap()
    }

    fn sample(item: usize, label: bool) -> Sample {
        Sample::from_categories(&schema(), &[vec![item % 3], vec![item]], label, "u", item.to_string(), 0).unwrap()
    }

    #[test]
    fn reference_step_examples() {
        assert!((sgd_step_reference(0.1, 0.1, 1.0, 0.5, 1.0) - 0.15).abs() < 1e-15);
        assert!((sgd_step_reference(0.1, 0.1, 0.0, 0.5, 1.0) - 0.05).abs() < 1e-15);
        assert_eq!(sgd_step_reference(0.1, 0.1, 1.0, 0.3, 0.0), 0.1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { learning_rate: f64::NAN, ..Default::default() },
            TrainConfig { patience: 30, max_epochs: 5, ..Default::default() },
            TrainConfig { dropout: Dropout { bi_rate: 1.0, hidden_rate: 0.0 }, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn plain_sgd_single_step_matches_update_law() {
        let s = schema();
        for label in [false, true] {
            let d = Dataset::new(s.clone(), vec![sample(4, label)], SplitTag::Train);
            let empty = Dataset::new(s.clone(), vec![], SplitTag::ValNbt);
            let cfg = TrainConfig {
                learning_rate: 0.05,
                l2: 0.0,
                max_epochs: 1,
                patience: 0,
                optimizer: Optimizer::PlainSgd,
                embedding_dim: 4,
                ..Default::default()
            };
            let (p, report) = train(&s, &d, &empty, &cfg, Arch::Fm).unwrap();
            assert!(!report.early_stopping);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let p0 = ModelParams::init(&s, Arch::Fm, 4, &cfg.hidden, &mut rng).unwrap();
            let x = &d.samples[0];
            let score = p0.predict(x, Mask::Full).unwrap().score;
            for &(j, xj) in &x.entries {
                let want = sgd_step_reference(p0.linear()[j as usize], 0.05, x.y(), score, xj);
                assert!((p.linear()[j as usize] - want).abs() < 1e-12);
                let moved = p.linear()[j as usize] - p0.linear()[j as usize];
                assert_eq!(moved > 0.0, label);
            }
        }
    }

    #[test]
    fn bias_weights_stay_zero_under_ablation() {
        let s = schema();
        let samples: Vec<Sample> = (0..60).map(|i| sample(i % 6, i % 3 == 0)).collect();
        let d = Dataset::new(s.clone(), samples, SplitTag::Train);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 8,
            max_epochs: 3,
            ablations: [Ablation::NoBiasLinearWeights].into_iter().collect(),
            embedding_dim: 4,
            ..Default::default()
        };
        let (p, _) = train(&s, &d, &d, &cfg, Arch::Fm).unwrap();
        assert!(p.bias_weights().iter().all(|&w| w == 0.0));
        assert!(p.linear()[3..].iter().any(|&w| w != 0.0));
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let s = schema();
        let samples: Vec<Sample> = (0..200).map(|i| sample(i % 6, (i * 7) % 3 == 0)).collect();
        let d = Dataset::new(s.clone(), samples, SplitTag::Train);
        let cfg = TrainConfig {
            learning_rate: 1e3,
            batch_size: 4,
            max_epochs: 5,
            embedding_dim: 4,
            ..Default::default()
        };
        match train(&s, &d, &d, &cfg, Arch::Fm) {
            Err(Error::Diverged { max_abs_logit, .. }) => assert!(max_abs_logit > 30.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
