//! Paired t-test built from first principles.
//!
//! The Student-t CDF is evaluated through the regularized incomplete
//! beta function (continued fraction, Lentz's method) so the crate
//! carries no statistics dependency. Checked against tabulated critical
//! values in the tests.

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms).
#[allow(clippy::excessive_precision)] // published coefficient digits kept verbatim
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function.
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-14;
    const TINY: f64 = 1e-300;

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
    for m in 1..=MAX_ITER {
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

/// Regularized incomplete beta function `I_x(a, b)`.
fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// `P(T <= t)` for Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    assert!(df > 0.0);
    let x = df / (df + t * t);
    let tail = 0.5 * betai(0.5 * df, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Result of a paired one-sided t-test on differences `candidate - reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    /// Sample standard deviation of the differences (unbiased).
    pub sd_diff: f64,
    /// `mean / (sd / sqrt(n))`; infinite when the variance is zero.
    pub t_stat: f64,
    /// One-sided p-value for "candidate is better" (mean < 0).
    pub p_value: f64,
}

impl TTest {
    /// Replacement rule: candidate wins iff its mean is strictly lower
    /// and the one-sided p-value clears `alpha`. Zero-variance
    /// differences degenerate to the strict-mean comparison.
    pub fn candidate_is_better(&self, alpha: f64) -> bool {
        self.mean_diff < 0.0 && self.p_value < alpha
    }
}

/// Paired t-test over per-instance differences.
pub fn paired_t_test(diffs: &[f64]) -> TTest {
    assert!(diffs.len() >= 2, "need at least two paired differences");
    let n = diffs.len();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        // All differences identical: no sampling noise to test against.
        let (t_stat, p_value) = if mean < 0.0 {
            (f64::NEG_INFINITY, 0.0)
        } else if mean > 0.0 {
            (f64::INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        };
        return TTest {
            n,
            mean_diff: mean,
            sd_diff: sd,
            t_stat,
            p_value,
        };
    }
    let t_stat = mean / (sd / (n as f64).sqrt());
    let p_value = student_t_cdf(t_stat, (n - 1) as f64);
    TTest {
        n,
        mean_diff: mean,
        sd_diff: sd,
        t_stat,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_cdf_matches_tabulated_critical_values() {
        // (t, df, upper tail) from standard t tables.
        let table = [
            (6.314, 1.0, 0.05),
            (2.920, 2.0, 0.05),
            (1.833, 9.0, 0.05),
            (2.262, 9.0, 0.025),
            (1.725, 20.0, 0.05),
            (2.528, 20.0, 0.01),
            (1.660, 99.0, 0.05),
            (2.626, 99.0, 0.005),
        ];
        for (t, df, upper) in table {
            let cdf = student_t_cdf(t, df);
            assert!(
                ((1.0 - cdf) - upper).abs() < 2e-3,
                "t={t}, df={df}: tail {} vs {upper}",
                1.0 - cdf
            );
        }
    }

    #[test]
    fn t_cdf_is_symmetric() {
        for t in [0.3, 1.0, 2.5] {
            for df in [3.0, 10.0, 50.0] {
                let a = student_t_cdf(t, df);
                let b = student_t_cdf(-t, df);
                assert!((a + b - 1.0).abs() < 1e-12);
            }
        }
        assert!((student_t_cdf(0.0, 7.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_models_are_never_replaced() {
        let t = paired_t_test(&[0.0; 50]);
        assert_eq!(t.mean_diff, 0.0);
        assert!(!t.candidate_is_better(0.05));
    }

    #[test]
    fn constant_improvement_wins_despite_zero_variance() {
        let t = paired_t_test(&[-5.0; 50]);
        assert_eq!(t.p_value, 0.0);
        assert!(t.candidate_is_better(0.05));

        let worse = paired_t_test(&[5.0; 50]);
        assert!(!worse.candidate_is_better(0.05));
    }

    #[test]
    fn strong_normal_shift_is_significant() {
        // Deterministic surrogate for N(-3, 1): mean -3, sd 1 over 100
        // points gives t = -30 and p far below 1e-4.
        let diffs: Vec<f64> = (0..100)
            .map(|i| -3.0 + ((i as f64 / 99.0) - 0.5) * 3.4641016151377544 * 0.2)
            .collect();
        let t = paired_t_test(&diffs);
        assert!(t.t_stat < -20.0, "t = {}", t.t_stat);
        assert!(t.p_value < 1e-4);
        assert!(t.candidate_is_better(0.05));
    }

    #[test]
    fn small_shift_with_large_noise_is_not_significant() {
        let diffs: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 10.0 } else { -10.2 })
            .collect();
        let t = paired_t_test(&diffs);
        assert!(t.p_value > 0.05);
        assert!(!t.candidate_is_better(0.05));
    }
}
