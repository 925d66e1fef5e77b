//! Correlation tests and simple linear regression.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A correlation coefficient with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension(alloc::format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation("need at least 3 points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite input"));
    }
    Ok(())
}

/// Product-moment coefficient without the input checks.
fn product_moment(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation coefficient `r` over `n` points, using
/// `t = r sqrt((n-2)/(1-r^2))` against Student's t with `n-2` degrees of
/// freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r * libm::sqrt(df / denom);
    student_t_two_sided(t, df)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    let r = product_moment(x, y)?;
    Ok(Correlation {
        coefficient: r,
        p_value: correlation_p_value(r, x.len()),
        n: x.len(),
    })
}

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    let r = product_moment(&average_ranks(x), &average_ranks(y))?;
    Ok(Correlation {
        coefficient: r,
        p_value: correlation_p_value(r, x.len()),
        n: x.len(),
    })
}

/// Two-sided tail `P(|T| >= |t|)` of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// `I_x(a, b)` via the continued-fraction expansion (modified Lentz).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    // the fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Ordinary least squares `y ≈ intercept + slope * x` with residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension(alloc::format!(
            "regressor has {} points, response {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Regression("need at least 3 points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Regression("non-finite input"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Regression("regressor has zero variance"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // centred form keeps Σ r = 0 tight in floating point
    let fitted: Vec<f64> = x.iter().map(|a| my + slope * (a - mx)).collect();
    let residuals = y.iter().zip(&fitted).map(|(b, f)| b - f).collect();
    Ok(RegressionFit {
        slope,
        intercept,
        fitted,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_lines() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        let p = pearson(&x, &up).unwrap();
        assert!((p.coefficient - 1.0).abs() < 1e-15);
        assert!(p.p_value < 1e-12);
        assert!((pearson(&x, &down).unwrap().coefficient + 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_pearson() {
        let r = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!((r.coefficient - 0.8).abs() < 1e-15);
    }

    #[test]
    fn swapped_extremes_spearman() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 2.0, 3.0, 4.0, 1.0]).unwrap();
        assert!((r.coefficient + 0.6).abs() < 1e-15);
    }

    #[test]
    fn tied_response_is_undefined() {
        let e = spearman(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]);
        assert!(matches!(e, Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x ; I_x(a, 1) = x^a ; Cauchy tail for df = 1
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(3.0, 1.0, 0.6) - 0.216).abs() < 1e-14);
        let t: f64 = 1.7;
        let cauchy = 1.0 - 2.0 * libm::atan(t) / core::f64::consts::PI;
        assert!((student_t_two_sided(t, 1.0) - cauchy).abs() < 1e-13);
    }

    #[test]
    fn ols_by_hand() {
        let fit = ols_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!(fit.slope.abs() < 1e-15);
        assert!((fit.intercept - 1.0 / 3.0).abs() < 1e-15);
        let want = [-1.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0];
        for (r, w) in fit.residuals.iter().zip(want) {
            assert!((r - w).abs() < 1e-15);
        }
        assert!(ols_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
