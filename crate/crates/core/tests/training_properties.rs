mod common;

use common::{build, raw_samples, schema};
use ctrbias_core::data::SplitTag;
use ctrbias_core::model::Arch;
use ctrbias_core::train::{train, Ablation, TrainConfig};
use proptest::prelude::*;

fn cfg(seed: u64, ablations: &[Ablation]) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        batch_size: 8,
        max_epochs: 3,
        patience: 1,
        seed,
        ablations: ablations.iter().copied().collect(),
        embedding_dim: 3,
        hidden: vec![5],
        ..TrainConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_inputs_same_model(raw in raw_samples(4, 6, 3, 10..60), seed in any::<u64>(), nfm in any::<bool>()) {
        let s = schema(4, 6, 3);
        let d = build(&s, &raw).with_tag(SplitTag::Train);
        let arch = if nfm { Arch::Nfm } else { Arch::Fm };
        let a = train(&s, &d, &d, &cfg(seed, &[]), arch);
        let b = train(&s, &d, &d, &cfg(seed, &[]), arch);
        match (a, b) {
            (Ok((pa, ra)), Ok((pb, rb))) => {
                prop_assert_eq!(pa, pb);
                prop_assert_eq!(ra, rb);
            }
            (Err(ea), Err(eb)) => prop_assert_eq!(format!("{ea}"), format!("{eb}")),
            _ => prop_assert!(false, "one run failed and the other did not"),
        }
    }

    #[test]
    fn unawareness_never_touches_the_bias_field(raw in raw_samples(4, 6, 3, 10..60), seed in any::<u64>()) {
        let s = schema(4, 6, 3);
        let d = build(&s, &raw).with_tag(SplitTag::Train);
        let c = cfg(seed, &[Ablation::Unawareness]);
        let Ok((p, _)) = train(&s, &d, &d, &c, Arch::Fm) else { return Ok(()) };
        // the bias field's embeddings start at zero and stay there
        prop_assert!(p.bias_weights().iter().all(|&w| w == 0.0));
        for j in s.bias_range() {
            prop_assert!(p.embedding(j).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn frozen_bias_weights_stay_zero(raw in raw_samples(4, 6, 3, 10..60), seed in any::<u64>()) {
        let s = schema(4, 6, 3);
        let d = build(&s, &raw).with_tag(SplitTag::Train);
        let Ok((p, _)) = train(&s, &d, &d, &cfg(seed, &[Ablation::NoBiasLinearWeights]), Arch::Nfm) else { return Ok(()) };
        prop_assert!(p.bias_weights().iter().all(|&w| w == 0.0));
    }
}
