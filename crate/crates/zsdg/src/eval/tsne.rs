//! Exact (O(n²)) t-SNE projection to two dimensions.
//!
//! Per-row Gaussian bandwidths are found by bisection so the Shannon
//! entropy (bits) of each conditional distribution matches log2(perplexity)
//! to 1e-4. Affinities are symmetrized as `(P + Pᵀ) / 2n`; the embedding
//! uses Student-t (df=1) affinities, gradient descent with momentum 0.5
//! switching to 0.8 at iteration 250, early exaggeration ×12 for the first
//! 250 iterations, and a seeded Gaussian init with sigma 1e-4.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAX_BISECTION: usize = 64;
const ENTROPY_TOL: f64 = 1e-4;
const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const MOMENTUM_SWITCH: usize = 250;
const P_FLOOR: f64 = 1e-12;
const MAX_POINTS: usize = 5000;

#[derive(Debug, Clone, Copy)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for TsneOptions {
    fn default() -> Self {
        TsneOptions {
            perplexity: 15.0,
            iterations: 500,
            seed: 0,
            learning_rate: 200.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    pub points: Vec<[f64; 2]>,
    /// KL(P ‖ Q) at the random init (plain P, no exaggeration).
    pub kl_initial: f64,
    /// KL(P ‖ Q) after the last iteration.
    pub kl_final: f64,
    /// Largest bisection iteration count over all rows.
    pub bisection_max_iters: usize,
}

fn pairwise_sq_distances(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    d
}

/// Row-normalized conditional affinities `P(j|i)` with per-row bandwidths
/// bisected to the target perplexity. Returns the matrix (row-major, zero
/// diagonal, rows summing to 1) and the largest bisection count used.
pub fn conditional_affinities(
    features: &Tensor,
    perplexity: f64,
) -> Result<(Vec<f64>, usize)> {
    let n = features.rows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| features.row(i).to_vec()).collect();
    let d = pairwise_sq_distances(&rows);
    let target = perplexity.log2();
    let mut p = vec![0.0; n * n];
    let mut worst_iters = 0;
    for i in 0..n {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let mut done = false;
        for iter in 0..MAX_BISECTION {
            // conditional distribution at the current bandwidth
            let mut sum = 0.0;
            for j in 0..n {
                if i == j {
                    p[i * n + j] = 0.0;
                    continue;
                }
                let v = (-beta * d[i * n + j]).exp();
                p[i * n + j] = v;
                sum += v;
            }
            if sum <= 0.0 {
                return Err(Error::stats(format!(
                    "degenerate affinities around point {i} (duplicate inputs?)"
                )));
            }
            let mut entropy_bits = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = p[i * n + j] / sum;
                p[i * n + j] = q;
                if q > P_FLOOR {
                    entropy_bits -= q * q.log2();
                }
            }
            let diff = entropy_bits - target;
            if diff.abs() < ENTROPY_TOL {
                worst_iters = worst_iters.max(iter + 1);
                done = true;
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() {
                    beta * 2.0
                } else {
                    (beta + beta_max) / 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() {
                    beta / 2.0
                } else {
                    (beta + beta_min) / 2.0
                };
            }
        }
        if !done {
            return Err(Error::stats(format!(
                "perplexity bisection did not converge for point {i}"
            )));
        }
    }
    Ok((p, worst_iters))
}

fn student_t_affinities(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i * 2] - y[j * 2];
            let dy = y[i * 2 + 1] - y[j * 2 + 1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    (num, z)
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64, n: usize) -> f64 {
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[i * n + j].max(P_FLOOR);
            let qij = (num[i * n + j] / z).max(P_FLOOR);
            kl += pij * (pij / qij).ln();
        }
    }
    kl
}

/// Project `features` (`n×h`) to `n` two-dimensional points.
pub fn tsne_project(features: &Tensor, opts: &TsneOptions) -> Result<TsneResult> {
    let n = features.rows();
    if n > MAX_POINTS {
        return Err(Error::stats(format!(
            "{n} points exceed the exact-algorithm limit of {MAX_POINTS}"
        )));
    }
    if !(opts.perplexity >= 3.0 && opts.perplexity < n as f64 / 3.0) {
        return Err(Error::stats(format!(
            "perplexity {} infeasible for {n} points (need 3 <= perplexity < n/3)",
            opts.perplexity
        )));
    }
    let (cond, bisection_max_iters) = conditional_affinities(features, opts.perplexity)?;

    // symmetrize
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
        }
    }
    for i in 0..n {
        p[i * n + i] = 0.0;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid sigma");
    let mut y: Vec<f64> = (0..n * 2).map(|_| init.sample(&mut rng)).collect();
    let mut velocity = vec![0.0; n * 2];

    let (num0, z0) = student_t_affinities(&y, n);
    let kl_initial = kl_divergence(&p, &num0, z0, n);

    let mut grad = vec![0.0; n * 2];
    for iter in 0..opts.iterations {
        let exaggeration = if iter < EXAGGERATION_ITERS {
            EXAGGERATION
        } else {
            1.0
        };
        let momentum = if iter < MOMENTUM_SWITCH { 0.5 } else { 0.8 };
        let (num, z) = student_t_affinities(&y, n);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pij = exaggeration * p[i * n + j];
                let qij = num[i * n + j] / z;
                let factor = 4.0 * (pij - qij) * num[i * n + j];
                grad[i * 2] += factor * (y[i * 2] - y[j * 2]);
                grad[i * 2 + 1] += factor * (y[i * 2 + 1] - y[j * 2 + 1]);
            }
        }
        for k in 0..n * 2 {
            velocity[k] = momentum * velocity[k] - opts.learning_rate * grad[k];
            y[k] += velocity[k];
        }
        // keep the embedding centered
        let (mut mx, mut my) = (0.0, 0.0);
        for i in 0..n {
            mx += y[i * 2];
            my += y[i * 2 + 1];
        }
        mx /= n as f64;
        my /= n as f64;
        for i in 0..n {
            y[i * 2] -= mx;
            y[i * 2 + 1] -= my;
        }
    }

    let (num1, z1) = student_t_affinities(&y, n);
    let kl_final = kl_divergence(&p, &num1, z1, n);
    let points = (0..n).map(|i| [y[i * 2], y[i * 2 + 1]]).collect();
    Ok(TsneResult {
        points,
        kl_initial,
        kl_final,
        bisection_max_iters,
    })
}
