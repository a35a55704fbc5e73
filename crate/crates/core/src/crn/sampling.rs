//! Random points on a stoichiometric compatibility class `{x ≥ 0 : N x = c}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CrnError, SteadyStateTarget};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsResult {
    pub x: Vector,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn least_squares(a: &Matrix, cols: &[usize], b: &Vector) -> Vector {
    let sub = Matrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])]);
    sub.svd(true, true)
        .solve(b, f64::EPSILON * 16.0)
        .unwrap_or_else(|_| Vector::zeros(cols.len()))
}

/// Lawson–Hanson active-set solution of `min ‖A x − b‖` subject to `x ≥ 0`.
pub fn nnls(a: &Matrix, b: &Vector) -> NnlsResult {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m, "right-hand side length must match rows of A");
    let tol = 10.0 * f64::EPSILON * crate::linalg::norm1(a).max(1.0) * m.max(n) as f64;
    let max_iter = 3 * n + 10;

    let mut x = Vector::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0;

    loop {
        let w = a.tr_mul(&(b - a * &x));
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(enter) = candidate else { break };
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        passive[enter] = true;

        loop {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let s_p = least_squares(a, &cols, b);
            let mut s = Vector::zeros(n);
            for (k, &j) in cols.iter().enumerate() {
                s[j] = s_p[k];
            }
            if cols.iter().all(|&j| s[j] > tol) {
                x = s;
                break;
            }
            let step = cols
                .iter()
                .filter(|&&j| s[j] <= tol)
                .map(|&j| x[j] / (x[j] - s[j]))
                .fold(f64::INFINITY, f64::min);
            x += step * (&s - &x);
            for &j in &cols {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let residual_norm = (a * &x - b).norm();
    NnlsResult {
        x,
        residual_norm,
        iterations,
    }
}

const SAMPLING_ATTEMPTS: usize = 20;

/// Deterministic sample for `seed`.
pub fn sample_on_scc(target: &SteadyStateTarget, seed: u64) -> Result<Vector, CrnError> {
    sample_on_scc_with(target, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Draws `y ∈ (0, 1]ⁿ`, scales it so that `N y ≤ c`, and closes the gap
/// `c − N y ≥ 0` with a nonnegative least-squares correction.
pub fn sample_on_scc_with<R: Rng + ?Sized>(target: &SteadyStateTarget, rng: &mut R) -> Result<Vector, CrnError> {
    let n_mat = target.basis().matrix_f64();
    let c = target.moieties();
    let n = target.network().n_species();
    let tol = 1e-9 * c.norm();

    for _ in 0..SAMPLING_ATTEMPTS {
        let y = Vector::from_fn(n, |_, _| 1.0 - rng.random::<f64>());
        if c.is_empty() {
            return Ok(y);
        }
        let ny = &n_mat * &y;
        let fit = c
            .iter()
            .zip(ny.iter())
            .map(|(&ci, &nyi)| ci / nyi)
            .fold(f64::INFINITY, f64::min);
        let shrink = 1.0 - rng.random::<f64>();
        let scaled = y * (fit * shrink);
        let gap = (c - &n_mat * &scaled).map(|v| v.max(0.0));
        let correction = nnls(&n_mat, &gap);
        let x0 = scaled + correction.x;
        if x0.iter().all(|&v| v >= 0.0 && v.is_finite()) && (&n_mat * &x0 - c).norm() <= tol {
            return Ok(x0);
        }
    }
    Err(CrnError::SamplingFailed {
        attempts: SAMPLING_ATTEMPTS,
    })
}
