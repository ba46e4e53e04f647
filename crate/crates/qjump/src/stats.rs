//! Small statistics helpers: moments, chi-square and Kolmogorov–Smirnov tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GoodnessOfFit {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins_used: usize,
}

/// Chi-square test of observed counts against expected counts. Bins whose
/// expectation falls below `min_expected` are pooled into one extra bin,
/// which is kept only if the pool itself reaches `min_expected`.
pub fn chi_square(observed: &[f64], expected: &[f64], min_expected: f64) -> GoodnessOfFit {
    assert_eq!(observed.len(), expected.len());
    let mut chi2 = 0.0;
    let mut used = 0usize;
    let (mut po, mut pe) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e >= min_expected {
            chi2 += (o - e).powi(2) / e;
            used += 1;
        } else {
            po += o;
            pe += e;
        }
    }
    if pe >= min_expected {
        chi2 += (po - pe).powi(2) / pe;
        used += 1;
    }
    let dof = used.saturating_sub(1).max(1);
    let p_value = match ChiSquared::new(dof as f64) {
        Ok(d) => 1.0 - d.cdf(chi2),
        Err(_) => f64::NAN,
    };
    GoodnessOfFit { chi2, dof, p_value, bins_used: used }
}

/// One-sample Kolmogorov–Smirnov test; returns `(D, p)` with the
/// asymptotic Kolmogorov distribution (Stephens' small-sample correction).
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    (d, kolmogorov_q(lam))
}

/// `Q_KS(λ) = 2 Σ (-1)^{k-1} exp(-2 k² λ²)`.
fn kolmogorov_q(lam: f64) -> f64 {
    if lam < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..200 {
        let term = sign * (-2.0 * (k as f64 * lam).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// CDF of a normal distribution.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    use statrs::distribution::Normal;
    Normal::new(mean, sd).map(|d| d.cdf(x)).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_of_perfect_fit_is_zero() {
        let g = chi_square(&[10.0, 20.0, 30.0], &[10.0, 20.0, 30.0], 5.0);
        assert_eq!(g.chi2, 0.0);
        assert_eq!(g.dof, 2);
        assert!((g.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_pools_sparse_bins() {
        let g = chi_square(&[50.0, 1.0, 2.0, 3.0], &[50.0, 2.0, 2.0, 2.0], 5.0);
        assert_eq!(g.bins_used, 2);
    }

    #[test]
    fn ks_detects_shift() {
        let xs: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        let (_, p_ok) = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        let (_, p_bad) = ks_test(&xs, |x| (x - 0.2).clamp(0.0, 1.0));
        assert!(p_ok > 0.9);
        assert!(p_bad < 1e-6);
    }

    #[test]
    fn mean_se_basic() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (1.666_666_666_666_666_7f64 / 4.0).sqrt()).abs() < 1e-12);
    }
}
