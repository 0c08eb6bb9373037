//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped; absolute differences are ranked with
//! average ranks on ties. For n <= 20 the p-value is exact, by enumerating
//! all 2^n sign assignments; beyond that a normal approximation with tie
//! correction is used (no continuity correction).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// `a` tends greater than `b`.
    Greater,
    /// `a` tends less than `b`.
    Less,
}

#[derive(Debug, Clone, Copy)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs remaining after dropping zero differences.
    pub n_used: usize,
    /// Whether the p-value came from exact enumeration.
    pub exact: bool,
}

const EXACT_LIMIT: usize = 20;

/// Average ranks of `|values|`, ties sharing their mean rank. Ranks are
/// half-integers, exact in f64.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].abs().partial_cmp(&values[b].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]].abs() == values[order[i]].abs() {
            j += 1;
        }
        // positions i..=j (0-based) share the mean of ranks i+1..=j+1
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

fn normal_cdf(z: f64) -> f64 {
    // Abramowitz & Stegun 7.1.26 erf approximation, |error| < 1.5e-7
    let x = z / std::f64::consts::SQRT_2;
    let (sign, x) = if x < 0.0 { (-1.0, -x) } else { (1.0, x) };
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erf = 1.0 - poly * (-x * x).exp();
    0.5 * (1.0 + sign * erf)
}

/// Test paired samples `a` vs `b`. Requires equal lengths and at least 5
/// nonzero differences; identical inputs are rejected as degenerate.
pub fn wilcoxon_signed_rank(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "paired samples of unequal length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::stats("all differences zero"));
    }
    let n = diffs.len();
    if n < 5 {
        return Err(Error::stats(format!(
            "only {n} nonzero differences; need at least 5"
        )));
    }
    let ranks = average_ranks(&diffs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let total: f64 = ranks.iter().sum();
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p_value, exact) = if n <= EXACT_LIMIT {
        // all 2^n sign assignments are equally likely under H0
        let count = 1u64 << n;
        let mut le = 0u64; // P(W+ <= observed)
        let mut ge = 0u64; // P(W+ >= observed)
        for mask in 0..count {
            let mut w = 0.0;
            for (bit, r) in ranks.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    w += r;
                }
            }
            if w <= w_plus {
                le += 1;
            }
            if w >= w_plus {
                ge += 1;
            }
        }
        let p_le = le as f64 / count as f64;
        let p_ge = ge as f64 / count as f64;
        let p = match alternative {
            Alternative::Greater => p_ge,
            Alternative::Less => p_le,
            Alternative::TwoSided => (2.0 * p_le.min(p_ge)).min(1.0),
        };
        (p, true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // tie correction: subtract sum(t^3 - t)/48 over tie groups
        let mut tie_term = 0.0;
        let mut sorted: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w_plus - mean) / var.sqrt();
        let p = match alternative {
            Alternative::Greater => 1.0 - normal_cdf(z),
            Alternative::Less => normal_cdf(z),
            Alternative::TwoSided => (2.0 * normal_cdf(-z.abs())).min(1.0),
        };
        (p, false)
    };

    Ok(WilcoxonResult {
        statistic,
        p_value,
        n_used: n,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn five_positive_differences_one_sided() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.5, 1.0, 2.0, 3.0, 4.0];
        let r = wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap();
        assert!((r.p_value - 1.0 / 32.0).abs() < 1e-15);
        assert_eq!(r.n_used, 5);
        assert!(r.exact);
    }

    #[test]
    fn identical_samples_rejected() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let err = wilcoxon_signed_rank(&a, &a, Alternative::TwoSided).unwrap_err();
        assert!(err.to_string().contains("all differences zero"), "{err}");
    }

    #[test]
    fn too_few_nonzero_differences_rejected() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [1.0, 2.0, 3.0, 4.0, 4.5];
        assert!(wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).is_err());
    }

    #[test]
    fn average_ranks_handle_ties() {
        // |diffs| = [1, 1, 2] -> ranks [1.5, 1.5, 3]
        let r = average_ranks(&[1.0, -1.0, 2.0]);
        assert_eq!(r, vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn normal_cdf_sanity() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.959_964) - 0.975).abs() < 1e-4);
        assert!(normal_cdf(-8.0) < 1e-14);
    }

    #[test]
    fn large_n_uses_normal_approximation() {
        let a: Vec<f64> = (0..30).map(|i| i as f64 + if i % 3 == 0 { 0.8 } else { -0.3 }).collect();
        let b: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    proptest! {
        // Exact p is always in (0, 1], and swapping the samples flips the
        // one-sided alternative.
        #[test]
        fn p_in_unit_interval_and_swap_symmetry(
            diffs in proptest::collection::vec(-5.0f64..5.0, 6..12),
        ) {
            prop_assume!(diffs.iter().filter(|d| **d != 0.0).count() >= 5);
            let a: Vec<f64> = diffs.iter().map(|d| 10.0 + d).collect();
            let b = vec![10.0; diffs.len()];
            let g = wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap();
            let l = wilcoxon_signed_rank(&b, &a, Alternative::Less).unwrap();
            prop_assert!(g.p_value > 0.0 && g.p_value <= 1.0);
            prop_assert!((g.p_value - l.p_value).abs() < 1e-12);
            let two = wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap();
            let two_swapped = wilcoxon_signed_rank(&b, &a, Alternative::TwoSided).unwrap();
            prop_assert!((two.p_value - two_swapped.p_value).abs() < 1e-12);
        }
    }
}
