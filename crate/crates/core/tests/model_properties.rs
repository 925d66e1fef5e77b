mod common;

use common::{build, random_params, raw_samples, schema};
use ctrbias_core::model::{Arch, Mask};
use proptest::prelude::*;

fn arch() -> impl Strategy<Value = Arch> {
    prop_oneof![Just(Arch::Fm), Just(Arch::Nfm)]
}

proptest! {
    #[test]
    fn parts_add_up_to_the_logit(raw in raw_samples(5, 7, 4, 1..10), a in arch(), seed in any::<u64>()) {
        let s = schema(5, 7, 4);
        let p = random_params(&s, a, 4, &[6], seed, 1.0);
        for x in &build(&s, &raw).samples {
            let full = p.predict(x, Mask::Full).unwrap();
            let lin = p.predict(x, Mask::LinearOnly).unwrap();
            let high = p.predict(x, Mask::HighOrderOnly).unwrap();
            prop_assert_eq!(full.logit, p.w0() + lin.linear + high.high_order);
            prop_assert_eq!(lin.high_order, 0.0);
            prop_assert_eq!(high.linear, 0.0);
        }
    }

    #[test]
    fn fm_second_order_equals_pairwise_sum(
        raw in raw_samples(20, 20, 10, 1..8),
        dim in 1usize..9,
        seed in any::<u64>(),
    ) {
        let s = schema(20, 20, 10);
        let p = random_params(&s, Arch::Fm, dim, &[], seed, 1.0);
        for x in &build(&s, &raw).samples {
            let mut naive = 0.0;
            for (a, &(i, xi)) in x.entries.iter().enumerate() {
                for &(j, xj) in &x.entries[a + 1..] {
                    let dot: f64 = p.embedding(i as usize).iter().zip(p.embedding(j as usize)).map(|(u, v)| u * v).sum();
                    naive += dot * xi * xj;
                }
            }
            let high = p.predict(x, Mask::Full).unwrap().high_order;
            prop_assert!((high - naive).abs() <= 1e-10, "{high} vs {naive}");
        }
    }

    #[test]
    fn zero_bias_mask_only_drops_group_weights(raw in raw_samples(5, 7, 4, 1..10), a in arch(), seed in any::<u64>()) {
        let s = schema(5, 7, 4);
        let mut p = random_params(&s, a, 4, &[6], seed, 1.0);
        let bias = s.bias_range();
        for x in &build(&s, &raw).samples {
            let full = p.predict(x, Mask::Full).unwrap();
            let masked = p.predict(x, Mask::ZeroBiasLinear).unwrap();
            let dropped: f64 = x
                .entries
                .iter()
                .filter(|(i, _)| bias.contains(&(*i as usize)))
                .map(|&(i, v)| p.linear()[i as usize] * v)
                .sum();
            prop_assert_eq!(full.high_order, masked.high_order);
            prop_assert!((full.linear - masked.linear - dropped).abs() <= 1e-12);
        }
        p.bias_weights_mut().iter_mut().for_each(|w| *w = 0.0);
        for x in &build(&s, &raw).samples {
            prop_assert_eq!(p.predict(x, Mask::Full).unwrap(), p.predict(x, Mask::ZeroBiasLinear).unwrap());
        }
    }
}
