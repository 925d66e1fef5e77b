//! Scalar helpers shared by the model, trainer and statistics code.

/// Logistic function, branched on the sign of `z` so `exp` never overflows.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Per-sample binary cross-entropy evaluated on the probability itself.
///
/// A saturated wrong prediction yields `+inf`, which the trainer treats as
/// divergence.
#[inline]
pub fn bce(score: f64, label: f64) -> f64 {
    let mut loss = 0.0;
    if label > 0.0 {
        loss -= label * libm::log(score);
    }
    if label < 1.0 {
        loss -= (1.0 - label) * libm::log(1.0 - score);
    }
    loss
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divisor `len`).
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub fn population_std(xs: &[f64]) -> f64 {
    libm::sqrt(population_variance(xs))
}

/// Pairwise summation; gives a reduction order that does not depend on how
/// a caller chunks the data.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0);
        assert!(sigmoid(-800.0) == 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bce_saturates_to_infinity() {
        assert!(bce(sigmoid(50.0), 0.0).is_infinite());
        assert!((bce(0.5, 1.0) - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn two_point_variance() {
        assert_eq!(population_variance(&[1.0, 3.0]), 1.0);
        assert_eq!(population_variance(&[2.0, 2.0, 2.0]), 0.0);
    }
}
