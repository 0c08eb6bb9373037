//! Shared oracles for the integration suites. Everything here is an
//! independent implementation path: plain loops, no calls into the code
//! under test beyond evaluating the checked function itself.

#![allow(dead_code)]

/// Central finite differences of a scalar function at `x`.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest relative error between an analytic and a numeric gradient, with
/// a small denominator floor so noise on near-zero entries does not count.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Exhaustive nearest-prototype scan (squared Euclidean, lowest index wins
/// ties).
pub fn brute_force_nearest(query: &[f64], prototypes: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in prototypes.iter().enumerate() {
        let d: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Independent exact Wilcoxon signed-rank p-value by direct enumeration of
/// every sign assignment. `alternative`: -1 less, 0 two-sided, 1 greater.
pub fn wilcoxon_enumeration_p(a: &[f64], b: &[f64], alternative: i32) -> f64 {
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    assert!((1..=20).contains(&n), "enumeration oracle limited to n <= 20");

    // average ranks of |d| (independent implementation: rank by counting)
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        let mut below = 0usize;
        let mut equal = 0usize;
        for j in 0..n {
            if abs[j] < abs[i] {
                below += 1;
            } else if abs[j] == abs[i] {
                equal += 1;
            }
        }
        // tied group occupies ranks below+1 ..= below+equal
        ranks[i] = (below + 1 + below + equal) as f64 / 2.0;
    }
    let observed: f64 = (0..n).filter(|&i| diffs[i] > 0.0).map(|i| ranks[i]).sum();

    let total = 1u64 << n;
    let mut le = 0u64;
    let mut ge = 0u64;
    for mask in 0..total {
        let mut w = 0.0;
        for (i, r) in ranks.iter().enumerate() {
            if mask >> i & 1 == 1 {
                w += r;
            }
        }
        if w <= observed {
            le += 1;
        }
        if w >= observed {
            ge += 1;
        }
    }
    let p_le = le as f64 / total as f64;
    let p_ge = ge as f64 / total as f64;
    match alternative {
        1 => p_ge,
        -1 => p_le,
        _ => (2.0 * p_le.min(p_ge)).min(1.0),
    }
}

/// Plain 2-means over 2-D points (fixed iteration count, deterministic
/// farthest-point init). Returns cluster assignments.
pub fn two_means(points: &[[f64; 2]]) -> Vec<usize> {
    let mut c0 = points[0];
    // farthest point from c0 seeds the second center
    let mut c1 = points[0];
    let mut best = -1.0;
    for p in points {
        let d = (p[0] - c0[0]).powi(2) + (p[1] - c0[1]).powi(2);
        if d > best {
            best = d;
            c1 = *p;
        }
    }
    let mut assign = vec![0usize; points.len()];
    for _ in 0..100 {
        for (i, p) in points.iter().enumerate() {
            let d0 = (p[0] - c0[0]).powi(2) + (p[1] - c0[1]).powi(2);
            let d1 = (p[0] - c1[0]).powi(2) + (p[1] - c1[1]).powi(2);
            assign[i] = usize::from(d1 < d0);
        }
        let mut sums = [[0.0; 2]; 2];
        let mut counts = [0usize; 2];
        for (i, p) in points.iter().enumerate() {
            sums[assign[i]][0] += p[0];
            sums[assign[i]][1] += p[1];
            counts[assign[i]] += 1;
        }
        if counts[0] > 0 {
            c0 = [sums[0][0] / counts[0] as f64, sums[0][1] / counts[0] as f64];
        }
        if counts[1] > 0 {
            c1 = [sums[1][0] / counts[1] as f64, sums[1][1] / counts[1] as f64];
        }
    }
    assign
}

/// Agreement of a 2-way clustering with reference labels, up to label swap.
pub fn cluster_agreement(assign: &[usize], labels: &[usize]) -> f64 {
    let same: usize = assign.iter().zip(labels).filter(|(a, l)| a == l).count();
    let flipped = labels.len() - same;
    same.max(flipped) as f64 / labels.len() as f64
}
